#include <doctest.h>

#include <cmath>

#include "ddcsp/sedd.hpp"
#include "toy_oracles.hpp"

using namespace ddcsp;
using namespace ddcsp::testing;

namespace {

// Simpson quadrature of sigma over [0, t].
double numeric_integral(const RateSchedule& s, double t, int panels = 20000) {
  double acc = 0.0;
  const double h = t / panels;
  for (int i = 0; i < panels; ++i) {
    const double a = i * h, b = a + h;
    acc += (s.sigma(a) + 4.0 * s.sigma(0.5 * (a + b)) + s.sigma(b)) * h / 6.0;
  }
  return acc;
}

EnumDist single_token_dist() {
  EnumDist d;
  d.num_classes = 3;
  d.length = 1;
  d.atoms = {{{1}, 0.5}, {{2}, 0.3}, {{3}, 0.2}};
  return d;
}

}  // namespace

TEST_CASE("mask_prob closed forms match quadrature") {
  const RateSchedule constant = RateSchedule::constant(2.5);
  const RateSchedule geometric = RateSchedule::geometric(0.2, 8.0, 1.0);

  CHECK(mask_prob(constant, 0.0) == 0.0);
  CHECK(mask_prob(geometric, 0.0) == 0.0);

  for (double t : {0.05, 0.3, 0.7, 1.0}) {
    for (const RateSchedule& s : {constant, geometric}) {
      const double closed = mask_prob(s, t);
      const double numeric = -std::expm1(-numeric_integral(s, t));
      CHECK(std::abs(closed - numeric) < 1e-8);
    }
    CHECK(mask_prob(constant, t) == doctest::Approx(1.0 - std::exp(-2.5 * t)).epsilon(1e-12));
  }

  // Large accumulated rate drives the mask probability to 1.
  CHECK(mask_prob(constant, 50.0) == doctest::Approx(1.0).epsilon(1e-12));
  const RateSchedule dflt = RateSchedule::constant();
  CHECK(mask_prob(dflt, 1.0) >= 1.0 - 1e-6);  // the all-mask prior calibration

  CHECK_THROWS_AS(mask_prob(constant, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(RateSchedule::geometric(0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("ctmc_forward_sample marginals and monotone absorption") {
  const RateSchedule s = RateSchedule::constant(2.0);
  Rng rng(3);
  TokenSeq x0(3, 100000, 2);

  CHECK(ctmc_forward_sample(x0, 0.0, s, rng) == x0);

  for (double t : {0.1, 0.5, 1.2}) {
    const TokenSeq xt = ctmc_forward_sample(x0, t, s, rng);
    const double m = mask_prob(s, t);
    const double frac = static_cast<double>(xt.masked_indices().size()) / x0.length();
    CHECK(std::abs(frac - m) < 4 * std::sqrt(m * (1 - m) / static_cast<double>(x0.length())));
  }

  // Shared randomness across increasing t: absorption is irreversible, the
  // masked set can only grow.
  TokenSeq small(3, 64, 1);
  std::vector<int> prev;
  for (double t : {0.05, 0.1, 0.2, 0.4, 0.8, 1.6}) {
    Rng shared(777);  // same stream for every t
    const TokenSeq xt = ctmc_forward_sample(small, t, s, shared);
    const std::vector<int> masked = xt.masked_indices();
    for (int idx : prev) {
      CHECK(std::find(masked.begin(), masked.end(), idx) != masked.end());
    }
    prev = masked;
  }
}

TEST_CASE("ExactRatioOracle: normalization, pair products, posterior ratios") {
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(3.0);
  const ExactRatioOracle oracle(dist, s);

  SUBCASE("p_t sums to 1 over the full state space") {
    for (double t : {0.05, 0.4, 1.0, 3.0}) {
      double total = 0.0;
      for (int a = 0; a <= 3; ++a) {
        for (int b = 0; b <= 3; ++b) {
          TokenSeq x(3, 2);
          x.tok = {static_cast<uint8_t>(a), static_cast<uint8_t>(b)};
          total += oracle.prob(x, t);
        }
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("s(x->y) * s(y->x) = 1 on positive-probability pairs") {
    const double t = 0.35;
    for (int a = 0; a <= 3; ++a) {
      for (int b = 0; b <= 3; ++b) {
        TokenSeq x(3, 2);
        x.tok = {static_cast<uint8_t>(a), static_cast<uint8_t>(b)};
        if (oracle.prob(x, t) <= 0.0) continue;
        for (int pos = 0; pos < 2; ++pos) {
          for (int v = 0; v <= 3; ++v) {
            TokenSeq y = x;
            y.tok[static_cast<size_t>(pos)] = static_cast<uint8_t>(v);
            if (y == x || oracle.prob(y, t) <= 0.0) continue;
            const double fwd = oracle.ratio(x, t, pos, static_cast<uint8_t>(v));
            const double bwd = oracle.ratio(y, t, pos, x.tok[static_cast<size_t>(pos)]);
            CHECK(fwd * bwd == doctest::Approx(1.0).epsilon(1e-12));
          }
        }
      }
    }
  }

  SUBCASE("posterior-derived ratios reproduce the oracle on masked rows") {
    const RatioModel from_oracle = oracle.model();
    const RatioModel from_posterior = ratios_from_posterior(
        [&dist](const TokenSeq& x, double) { return enum_posterior(dist, x); }, s);
    std::vector<std::vector<uint8_t>> states = {
        {kMask, kMask}, {kMask, 2}, {1, kMask}, {kMask, 1}, {3, kMask}};
    for (double t : {0.1, 0.5, 0.9}) {
      for (const auto& tok : states) {
        TokenSeq x(3, 2);
        x.tok = tok;
        const MatrixXd a = from_oracle.digit_grid(x, t);
        const MatrixXd b = from_posterior.digit_grid(x, t);
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          if (tok[static_cast<size_t>(i)] != kMask) {
            CHECK(b(i, tok[static_cast<size_t>(i)] - 1) == 1.0);  // self ratio
            continue;
          }
          CHECK((a.row(i) - b.row(i)).cwiseAbs().maxCoeff() < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("denoiser-ratio correspondence closed forms on single tokens") {
  const RateSchedule s = RateSchedule::constant(2.0);

  SUBCASE("point mass: ratio(M->a) = (1-m)/m, others 0") {
    EnumDist d;
    d.num_classes = 3;
    d.length = 1;
    d.atoms = {{{2}, 1.0}};
    const RatioModel rm = ratios_from_posterior(
        [d](const TokenSeq& x, double) { return enum_posterior(d, x); }, s);
    TokenSeq masked(3, 1, kMask);
    for (double t : {0.2, 0.6, 1.1}) {
      const double m = mask_prob(s, t);
      const MatrixXd grid = rm.digit_grid(masked, t);
      CHECK(grid(0, 1) == doctest::Approx((1 - m) / m).epsilon(1e-12));
      CHECK(grid(0, 0) == 0.0);
      CHECK(grid(0, 2) == 0.0);
      // Exact-oracle cross-check.
      const ExactRatioOracle oracle(d, s);
      CHECK(oracle.ratio(masked, t, 0, 2) == doctest::Approx((1 - m) / m).epsilon(1e-12));
    }
  }

  SUBCASE("uniform two-point: ratio(M->a) = (1-m)/(2m); self ratio 1") {
    EnumDist d;
    d.num_classes = 3;
    d.length = 1;
    d.atoms = {{{1}, 0.5}, {{3}, 0.5}};
    const RatioModel rm = ratios_from_posterior(
        [d](const TokenSeq& x, double) { return enum_posterior(d, x); }, s);
    TokenSeq masked(3, 1, kMask);
    const double t = 0.4;
    const double m = mask_prob(s, t);
    const MatrixXd grid = rm.digit_grid(masked, t);
    CHECK(grid(0, 0) == doctest::Approx((1 - m) / (2 * m)).epsilon(1e-12));
    CHECK(grid(0, 2) == doctest::Approx((1 - m) / (2 * m)).epsilon(1e-12));

    TokenSeq digit(3, 1, 1);
    const MatrixXd self_grid = rm.digit_grid(digit, t);
    CHECK(self_grid(0, 0) == 1.0);
    CHECK(self_grid(0, 1) == 0.0);
  }
}

TEST_CASE("euler_reverse_step semantics") {
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(3.0);
  const ExactRatioOracle oracle(dist, s);
  const RatioModel ratios = oracle.model();
  Rng rng(9);

  TokenSeq all_mask(3, 2, kMask);
  SUBCASE("dt = 0 is the identity") {
    CHECK(euler_reverse_step(all_mask, 0.5, 0.0, ratios, s, rng) == all_mask);
  }

  SUBCASE("at most one position changes per step") {
    for (int rep = 0; rep < 500; ++rep) {
      const TokenSeq out = euler_reverse_step(all_mask, 0.8, 0.05, ratios, s, rng);
      int changed = 0;
      for (size_t i = 0; i < 2; ++i) changed += out.tok[i] != all_mask.tok[i];
      CHECK(changed <= 1);
    }
  }

  SUBCASE("unmasked tokens never change") {
    TokenSeq fixed(3, 2);
    fixed.tok = {2, kMask};
    for (int rep = 0; rep < 200; ++rep) {
      const TokenSeq out = euler_reverse_step(fixed, 0.6, 0.05, ratios, s, rng);
      CHECK(out.tok[0] == 2);
    }
  }

  SUBCASE("negative ratios abort") {
    RatioModel bad;
    bad.digit_grid = [](const TokenSeq& x, double) {
      return MatrixXd::Constant(static_cast<Eigen::Index>(x.length()), x.num_classes, -1.0);
    };
    CHECK_THROWS_AS(euler_reverse_step(all_mask, 0.5, 0.01, bad, s, rng), SeddError);
  }

  SUBCASE("dt > t is rejected") {
    CHECK_THROWS_AS(euler_reverse_step(all_mask, 0.05, 0.1, ratios, s, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("single-token Euler step matches the exact reverse kernel to O(dt^2)") {
  const EnumDist dist = single_token_dist();
  const RateSchedule s = RateSchedule::constant(1.0);
  const ExactRatioOracle oracle(dist, s);
  const double t = 0.5;

  auto exact_kernel = [&](double dt) {
    // Bayes through the forward channel between t-dt and t, state = mask.
    const double ms = mask_prob(s, t - dt);
    const double mt = mask_prob(s, t);
    const double mu = -std::expm1(-(s.integral(t) - s.integral(t - dt)));
    VectorXd p = VectorXd::Zero(4);
    p[0] = ms / mt;  // still masked earlier
    for (int d = 1; d <= 3; ++d) {
      const double ps_d = (1.0 - ms) * dist.atoms[static_cast<size_t>(d - 1)].second;
      p[d] = ps_d * mu / mt;
    }
    return p;
  };
  auto euler_kernel = [&](double dt) {
    TokenSeq masked(3, 1, kMask);
    const MatrixXd grid = oracle.model().digit_grid(masked, t);
    VectorXd p = VectorXd::Zero(4);
    double total = 0.0;
    for (int d = 1; d <= 3; ++d) {
      p[d] = s.sigma(t) * dt * grid(0, d - 1);
      total += p[d];
    }
    p[0] = std::max(1.0 - total, 0.0);
    return p;
  };

  // The second-order constant: observed errors stay under C * dt^2 and the
  // error ratio shrinks ~100x per decade of dt.
  const double C = 2.0;
  double prev_err = 1.0;
  for (double dt : {1e-1, 1e-2, 1e-3}) {
    const double err = (exact_kernel(dt) - euler_kernel(dt)).cwiseAbs().maxCoeff();
    CHECK(err <= C * dt * dt);
    CHECK(err < prev_err);
    prev_err = err;
  }
}

TEST_CASE("tau-leaping equals single-jump in law for a single token") {
  const EnumDist dist = single_token_dist();
  const RateSchedule s = RateSchedule::constant(3.0);
  const RatioModel ratios = ExactRatioOracle(dist, s).model();
  TokenSeq masked(3, 1, kMask);

  for (int rep = 0; rep < 200; ++rep) {
    Rng r1(1000 + rep), r2(1000 + rep);
    const TokenSeq a = euler_reverse_step(masked, 0.7, 0.04, ratios, s, r1);
    const TokenSeq b = tau_leap_step(masked, 0.7, 0.04, ratios, s, r2);
    CHECK(a == b);  // identical randomness consumption, identical law
  }

  Rng rng(5);
  CHECK(tau_leap_step(masked, 0.5, 0.0, ratios, s, rng) == masked);
}

TEST_CASE("sedd sampling: point-mass data collapses to the point") {
  EnumDist d;
  d.num_classes = 3;
  d.length = 2;
  d.atoms = {{{2, 3}, 1.0}};
  const RateSchedule s = RateSchedule::constant(14.0);
  const RatioModel ratios = ExactRatioOracle(d, s).model();
  SeddConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = 1e-2;
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const TokenSeq out = sedd_sample_seq(ratios, s, cfg, 3, 2, rng);
    CHECK(out.tok == std::vector<uint8_t>{2, 3});
  }
}

TEST_CASE("sedd sampling respects clamped givens and the conditional law") {
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(14.0);
  const RatioModel ratios = ExactRatioOracle(dist, s).model();
  SeddConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = 2e-3;
  cfg.clamp = {1, 0};  // condition on first token = 1
  cfg.observer = [&](const TokenSeq& wt, double) { CHECK(wt.tok[0] == 1); };

  // Conditional distribution of the second token given first = 1.
  std::map<std::vector<uint8_t>, double> counts;
  const int trials = 4000;
  Rng rng(23);
  for (int i = 0; i < trials; ++i) {
    const TokenSeq out = sedd_sample_seq(ratios, s, cfg, 3, 2, rng);
    CHECK(out.tok[0] == 1);
    counts[out.tok] += 1.0 / trials;
  }
  std::map<std::vector<uint8_t>, double> truth;
  truth[{1, 2}] = 0.8;  // 0.4 / 0.5
  truth[{1, 1}] = 0.2;  // 0.1 / 0.5
  CHECK(tv_between(counts, truth) < 0.05);
}

TEST_CASE("single-jump sampler matches its exact pushforward law") {
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(14.0);
  const RatioModel ratios = ExactRatioOracle(dist, s).model();
  const double dt = 2e-2;

  const auto law = exact_single_jump_law(ratios, s, 1.0, dt, 3, 2);
  double mass = 0.0;
  for (const auto& [state, p] : law) mass += p;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));

  SeddConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = dt;
  std::map<std::vector<uint8_t>, double> counts;
  const int trials = 20000;
  Rng rng(29);
  SeddStats stats;
  for (int i = 0; i < trials; ++i) {
    counts[sedd_sample_seq(ratios, s, cfg, 3, 2, rng, &stats).tok] += 1.0 / trials;
  }
  CHECK(tv_between(counts, law) < 0.035);
  CHECK(stats.steps == static_cast<long>(trials * 50));
}

TEST_CASE("TV gap to the truth shrinks as dt halves (exact pushforward)") {
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(14.0);
  const RatioModel ratios = ExactRatioOracle(dist, s).model();
  const auto truth = enum_truth(dist);

  double prev = 1.0;
  for (double dt : {4e-2, 2e-2, 1e-2}) {
    const auto law = exact_single_jump_law(ratios, s, 1.0, dt, 3, 2);
    const double gap = tv_between(law, truth);
    CHECK(gap < prev);
    prev = gap;
  }
}

TEST_CASE("no clamp events below the step-size bound") {
  // With constant sigma and a single masked token the jump mass is
  // sigma*dt/(exp(sigma*t)-1) <= 1 at every grid time; clamping needs two or
  // more masked tokens surviving to t ~ dt, which has probability about
  // (sigma*dt)^2 per trajectory. At dt = 1e-4 that is ~2e-6.
  const EnumDist dist = toy_dist();
  const RateSchedule s = RateSchedule::constant(14.0);
  const RatioModel ratios = ExactRatioOracle(dist, s).model();
  SeddConfig cfg;
  cfg.horizon = 1.0;
  cfg.dt = 1e-4;
  SeddStats stats;
  Rng rng(31);
  for (int i = 0; i < 200; ++i) sedd_sample_seq(ratios, s, cfg, 3, 2, rng, &stats);
  CHECK(stats.clamp_events == 0);
}

TEST_CASE("sedd config validation") {
  SeddConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dt = 2.0;
  cfg.horizon = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
