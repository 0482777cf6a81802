#include "ddcsp/sedd.hpp"

#include <cmath>

namespace ddcsp {

double RateSchedule::sigma(double t) const {
  switch (kind) {
    case Kind::kConstant:
      return sigma0;
    case Kind::kGeometric:
      return sigma_lo * std::pow(sigma_hi / sigma_lo, t / horizon);
  }
  return 0.0;
}

double RateSchedule::integral(double t) const {
  switch (kind) {
    case Kind::kConstant:
      return sigma0 * t;
    case Kind::kGeometric: {
      const double log_ratio = std::log(sigma_hi / sigma_lo);
      return sigma_lo * horizon / log_ratio * (std::pow(sigma_hi / sigma_lo, t / horizon) - 1.0);
    }
  }
  return 0.0;
}

RateSchedule RateSchedule::constant(double sigma0) {
  RateSchedule s;
  s.kind = Kind::kConstant;
  s.sigma0 = sigma0;
  return s;
}

RateSchedule RateSchedule::geometric(double lo, double hi, double horizon) {
  if (!(lo > 0.0) || !(hi > lo)) {
    throw std::invalid_argument("geometric rate: need 0 < lo < hi");
  }
  RateSchedule s;
  s.kind = Kind::kGeometric;
  s.sigma_lo = lo;
  s.sigma_hi = hi;
  s.horizon = horizon;
  return s;
}

double mask_prob(const RateSchedule& schedule, double t) {
  if (t < 0) throw std::invalid_argument("mask_prob: t must be >= 0");
  return -std::expm1(-schedule.integral(t));
}

TokenSeq ctmc_forward_sample(const TokenSeq& x0, double t, const RateSchedule& schedule,
                             Rng& rng) {
  if (x0.any_masked()) throw std::invalid_argument("ctmc_forward_sample: x0 must be complete");
  const double m = mask_prob(schedule, t);
  TokenSeq xt = x0;
  for (auto& tok : xt.tok) {
    if (rng.u01() < m) tok = kMask;
  }
  return xt;
}

TokenSeq ctmc_forward_sample(const Board& x0, double t, const RateSchedule& schedule, Rng& rng) {
  return ctmc_forward_sample(seq_from_board(x0), t, schedule, rng);
}

void EnumDist::validate() const {
  if (atoms.empty()) throw std::invalid_argument("enum dist: empty support");
  double total = 0.0;
  for (const auto& [seq, p] : atoms) {
    if (seq.size() != length) throw std::invalid_argument("enum dist: atom length mismatch");
    for (uint8_t v : seq) {
      if (v < 1 || v > num_classes) throw std::invalid_argument("enum dist: token out of range");
    }
    if (p < 0) throw std::invalid_argument("enum dist: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("enum dist: probabilities must sum to 1");
  }
}

ExactRatioOracle::ExactRatioOracle(EnumDist dist, RateSchedule schedule)
    : dist_(std::move(dist)), schedule_(schedule) {
  dist_.validate();
}

double ExactRatioOracle::prob(const TokenSeq& x, double t) const {
  const double m = mask_prob(schedule_, t);
  double total = 0.0;
  for (const auto& [atom, p] : dist_.atoms) {
    double lik = p;
    for (size_t i = 0; i < atom.size() && lik > 0.0; ++i) {
      if (x.tok[i] == kMask) {
        lik *= m;
      } else if (x.tok[i] == atom[i]) {
        lik *= 1.0 - m;
      } else {
        lik = 0.0;
      }
    }
    total += lik;
  }
  return total;
}

double ExactRatioOracle::ratio(const TokenSeq& x, double t, int pos, uint8_t v) const {
  const double px = prob(x, t);
  if (x.tok[static_cast<size_t>(pos)] == v) return 1.0;
  if (px == 0.0) return 0.0;
  TokenSeq y = x;
  y.tok[static_cast<size_t>(pos)] = v;
  return prob(y, t) / px;
}

MatrixXd enum_posterior(const EnumDist& dist, const TokenSeq& x) {
  const auto L = static_cast<Eigen::Index>(dist.length);
  MatrixXd post = MatrixXd::Zero(L, dist.num_classes);
  double total = 0.0;
  for (const auto& [atom, p] : dist.atoms) {
    bool consistent = true;
    for (size_t i = 0; i < atom.size(); ++i) {
      if (x.tok[i] != kMask && x.tok[i] != atom[i]) {
        consistent = false;
        break;
      }
    }
    if (!consistent) continue;
    total += p;
    for (size_t i = 0; i < atom.size(); ++i) {
      post(static_cast<Eigen::Index>(i), atom[i] - 1) += p;
    }
  }
  if (total > 0.0) post /= total;
  return post;
}

MatrixXd ExactRatioOracle::posterior(const TokenSeq& x) const { return enum_posterior(dist_, x); }

RatioModel ExactRatioOracle::model() const {
  const ExactRatioOracle self = *this;
  RatioModel m;
  m.digit_grid = [self](const TokenSeq& x, double t) {
    const auto L = static_cast<Eigen::Index>(x.length());
    MatrixXd grid(L, x.num_classes);
    const double px = self.prob(x, t);
    TokenSeq y = x;
    for (Eigen::Index i = 0; i < L; ++i) {
      const uint8_t original = y.tok[static_cast<size_t>(i)];
      for (int d = 1; d <= x.num_classes; ++d) {
        if (original == d) {
          grid(i, d - 1) = 1.0;
        } else if (px == 0.0) {
          grid(i, d - 1) = 0.0;
        } else {
          y.tok[static_cast<size_t>(i)] = static_cast<uint8_t>(d);
          grid(i, d - 1) = self.prob(y, t) / px;
        }
      }
      y.tok[static_cast<size_t>(i)] = original;
    }
    return grid;
  };
  return m;
}

namespace {

// Jump probabilities for the masked positions: sigma(t) * dt * ratio.
MatrixXd jump_probs(const TokenSeq& xt, double t, double dt, const RatioModel& ratios,
                    const RateSchedule& schedule) {
  const MatrixXd grid = ratios.digit_grid(xt, t);
  if (grid.rows() != static_cast<Eigen::Index>(xt.length()) || grid.cols() != xt.num_classes) {
    throw SeddError("ratio model returned a grid of the wrong shape");
  }
  if ((grid.array() < 0.0).any()) {
    throw SeddError("ratio model returned a negative ratio at t=" + std::to_string(t));
  }
  const double scale = schedule.sigma(t) * dt;
  MatrixXd j = MatrixXd::Zero(grid.rows(), grid.cols());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    if (xt.tok[static_cast<size_t>(i)] != kMask) continue;  // absorbing reversal only unmasks
    j.row(i) = scale * grid.row(i);
  }
  return j;
}

}  // namespace

TokenSeq euler_reverse_step(const TokenSeq& xt, double t, double dt, const RatioModel& ratios,
                            const RateSchedule& schedule, Rng& rng, SeddStats* stats) {
  if (dt < 0 || dt > t) throw std::invalid_argument("euler_reverse_step: need 0 <= dt <= t");
  if (stats) ++stats->steps;
  if (dt == 0.0 || !xt.any_masked()) return xt;

  const MatrixXd j = jump_probs(xt, t, dt, ratios, schedule);
  const double total_jump = j.sum();
  if (total_jump > 1.0 && stats) ++stats->clamp_events;

  const double span = std::max(total_jump, 1.0);
  const double u = rng.u01() * span;
  if (u >= total_jump) return xt;  // stay (probability 1 - sum, clamped at 0)

  TokenSeq out = xt;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < j.rows(); ++i) {
    for (Eigen::Index d = 0; d < j.cols(); ++d) {
      acc += j(i, d);
      if (u < acc) {
        out.tok[static_cast<size_t>(i)] = static_cast<uint8_t>(d + 1);
        return out;
      }
    }
  }
  return out;  // floating-point edge: treat as stay
}

TokenSeq tau_leap_step(const TokenSeq& xt, double t, double dt, const RatioModel& ratios,
                       const RateSchedule& schedule, Rng& rng, SeddStats* stats) {
  if (dt < 0 || dt > t) throw std::invalid_argument("tau_leap_step: need 0 <= dt <= t");
  if (stats) ++stats->steps;
  if (dt == 0.0 || !xt.any_masked()) return xt;

  const MatrixXd j = jump_probs(xt, t, dt, ratios, schedule);
  TokenSeq out = xt;
  for (Eigen::Index i = 0; i < j.rows(); ++i) {
    if (xt.tok[static_cast<size_t>(i)] != kMask) continue;
    const double row_sum = j.row(i).sum();
    if (row_sum <= 0.0) continue;
    if (row_sum > 1.0 && stats) ++stats->clamp_events;
    const double span = std::max(row_sum, 1.0);
    const double u = rng.u01() * span;
    if (u >= row_sum) continue;
    double acc = 0.0;
    for (Eigen::Index d = 0; d < j.cols(); ++d) {
      acc += j(i, d);
      if (u < acc) {
        out.tok[static_cast<size_t>(i)] = static_cast<uint8_t>(d + 1);
        break;
      }
    }
  }
  return out;
}

TokenSeq sedd_sample_seq(const RatioModel& ratios, const RateSchedule& schedule,
                         const SeddConfig& cfg, int num_classes, size_t length, Rng& rng,
                         SeddStats* stats) {
  cfg.validate();
  TokenSeq wt(num_classes, length, kMask);
  wt = clamp_infill(wt, cfg.clamp);
  if (cfg.observer) cfg.observer(wt, schedule.integral(cfg.horizon));

  double t = cfg.horizon;
  double last_positive_t = cfg.horizon;
  while (t > 1e-12) {
    const double dt = std::min(cfg.dt, t);
    wt = cfg.tau_leap ? tau_leap_step(wt, t, dt, ratios, schedule, rng, stats)
                      : euler_reverse_step(wt, t, dt, ratios, schedule, rng, stats);
    last_positive_t = t;
    t -= dt;
    wt = clamp_infill(wt, cfg.clamp);
    if (cfg.observer) cfg.observer(wt, t);
  }

  if (wt.any_masked()) {
    // Highest-ratio fill at the last positive grid time; ties break to the
    // lowest digit via strict comparison.
    const double t_fill = std::min(cfg.dt, last_positive_t);
    const MatrixXd grid = ratios.digit_grid(wt, t_fill);
    for (size_t i = 0; i < wt.tok.size(); ++i) {
      if (wt.tok[i] != kMask) continue;
      Eigen::Index best = 0;
      for (Eigen::Index d = 1; d < grid.cols(); ++d) {
        if (grid(static_cast<Eigen::Index>(i), d) > grid(static_cast<Eigen::Index>(i), best)) {
          best = d;
        }
      }
      wt.tok[i] = static_cast<uint8_t>(best + 1);
    }
    wt = clamp_infill(wt, cfg.clamp);
    if (cfg.observer) cfg.observer(wt, 0.0);
  }
  return wt;
}

Board sedd_sample(const RatioModel& ratios, const RateSchedule& schedule, const SeddConfig& cfg,
                  int order, const std::optional<Board>& puzzle, Rng& rng, SeddStats* stats) {
  SeddConfig c = cfg;
  if (puzzle) {
    if (puzzle->order != order) throw std::invalid_argument("sedd_sample: puzzle order mismatch");
    c.clamp = puzzle->cell;
  }
  const int N = order * order;
  const TokenSeq out =
      sedd_sample_seq(ratios, schedule, c, N, static_cast<size_t>(N * N), rng, stats);
  return board_from_seq(out, order);
}

RatioModel ratios_from_posterior(PosteriorFn posterior, const RateSchedule& schedule) {
  RatioModel m;
  m.digit_grid = [posterior = std::move(posterior), schedule](const TokenSeq& x, double t) {
    const double mt = mask_prob(schedule, t);
    if (!(mt > 0.0)) throw SeddError("posterior ratios undefined at mask level 0");
    const double factor = (1.0 - mt) / mt;
    const MatrixXd post = posterior(x, t);
    MatrixXd grid = MatrixXd::Zero(post.rows(), post.cols());
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
      const uint8_t tok = x.tok[static_cast<size_t>(i)];
      if (tok == kMask) {
        grid.row(i) = factor * post.row(i);
      } else {
        grid(i, tok - 1) = 1.0;  // self; digit-to-digit ratios stay 0
      }
    }
    return grid;
  };
  return m;
}

RatioModel denoiser_ratios(std::shared_ptr<const DenoiserModel<float>> model,
                           const Schedule& discrete, const RateSchedule& schedule) {
  // Match the continuous mask level to the closest discrete timestep.
  PosteriorFn posterior = [model, discrete, schedule](const TokenSeq& x, double t_cont) {
    const double m = mask_prob(schedule, t_cont);
    int best_t = 0;
    double best_gap = std::abs(discrete.cum_mask[0] - m);
    for (int td = 1; td <= discrete.num_steps; ++td) {
      const double gap = std::abs(discrete.cum_mask[static_cast<size_t>(td)] - m);
      if (gap < best_gap) {
        best_gap = gap;
        best_t = td;
      }
    }
    return softmax_rows<double>(denoise(*model, x, best_t));
  };
  return ratios_from_posterior(std::move(posterior), schedule);
}

}  // namespace ddcsp
