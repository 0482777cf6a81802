// Test-only oracles: brute-force absorbing-kernel posteriors via explicit
// matrix products, exact posterior denoisers over enumerable distributions,
// and total-variation helpers. These stay independent of the sampler code
// they check.
#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "ddcsp/dense.hpp"
#include "ddcsp/mlm.hpp"
#include "ddcsp/schedule.hpp"
#include "ddcsp/sedd.hpp"

namespace ddcsp::testing {

// Single-token absorbing kernel as an explicit (K+1) x (K+1) matrix; state
// indices follow the token convention: 0 = mask, 1..K = digits. Entry (from,
// to) is the one-step transition probability at step t.
inline MatrixXd kernel_matrix(int K, double beta) {
  MatrixXd Q = MatrixXd::Zero(K + 1, K + 1);
  Q(0, 0) = 1.0;  // absorbing
  for (int d = 1; d <= K; ++d) {
    Q(d, d) = 1.0 - beta;
    Q(d, 0) = beta;
  }
  return Q;
}

// Product of kernels for steps a+1..b (transition from time a to time b).
inline MatrixXd kernel_product(int K, const Schedule& s, int a, int b) {
  MatrixXd acc = MatrixXd::Identity(K + 1, K + 1);
  for (int t = a + 1; t <= b; ++t) acc = acc * kernel_matrix(K, s.beta[static_cast<size_t>(t - 1)]);
  return acc;
}

// Brute-force Bayes posterior p(x_{t-k} = y | x_t = current) for a single
// token, marginalizing a denoiser distribution over clean digits:
//   p(y | x_t) ~ sum_x0 p~(x0) * Qbar_{0->t-k}(x0, y) * Qbar_{t-k->t}(y, x_t)
inline VectorXd brute_force_reverse(int K, const Schedule& s, int t, int k, uint8_t current,
                                    const VectorXd& denoiser_digits) {
  const MatrixXd to_s = kernel_product(K, s, 0, t - k);
  const MatrixXd s_to_t = kernel_product(K, s, t - k, t);
  VectorXd post = VectorXd::Zero(K + 1);
  for (int y = 0; y <= K; ++y) {
    double mass = 0.0;
    for (int x0 = 1; x0 <= K; ++x0) {
      mass += denoiser_digits[x0 - 1] * to_s(x0, y) * s_to_t(y, current);
    }
    post[y] = mass;
  }
  const double z = post.sum();
  if (z > 0) post /= z;
  return post;
}

// Exact posterior denoiser over an enumerable toy distribution, as logits.
// Zero-probability digits get a large negative logit (exactly zero after
// softmax, still finite).
inline DenoiserFn make_exact_posterior_denoiser(EnumDist dist) {
  return [dist = std::move(dist)](const TokenSeq& wt, int) {
    MatrixXd post = enum_posterior(dist, wt);
    LogitGrid logits(post.rows(), post.cols());
    for (Eigen::Index r = 0; r < post.rows(); ++r) {
      for (Eigen::Index c = 0; c < post.cols(); ++c) {
        logits(r, c) = post(r, c) > 0 ? std::log(post(r, c)) : -1e4;
      }
    }
    return logits;
  };
}

// Total variation between an empirical sample of sequences and the
// enumerable truth.
inline double empirical_tv(const std::vector<TokenSeq>& samples, const EnumDist& dist) {
  std::map<std::vector<uint8_t>, double> freq;
  for (const TokenSeq& s : samples) freq[s.tok] += 1.0 / static_cast<double>(samples.size());
  std::map<std::vector<uint8_t>, double> truth;
  for (const auto& [atom, p] : dist.atoms) truth[atom] += p;
  double tv = 0.0;
  for (const auto& [seq, p] : truth) {
    auto it = freq.find(seq);
    tv += std::abs(p - (it == freq.end() ? 0.0 : it->second));
    if (it != freq.end()) freq.erase(it);
  }
  for (const auto& [seq, p] : freq) tv += p;  // mass outside the support
  return 0.5 * tv;
}

inline double tv_between(const std::map<std::vector<uint8_t>, double>& a,
                         const std::map<std::vector<uint8_t>, double>& b) {
  double tv = 0.0;
  auto keys = a;
  for (const auto& [k, v] : b) keys.emplace(k, 0.0);
  for (const auto& [k, unused] : keys) {
    const auto ia = a.find(k), ib = b.find(k);
    tv += std::abs((ia == a.end() ? 0.0 : ia->second) - (ib == b.end() ? 0.0 : ib->second));
  }
  return 0.5 * tv;
}

// Exact law of the single-jump Euler reverse walk on an enumerable instance,
// by pushing the full state distribution through the documented transition
// semantics (jump (i,v) with probability sigma*dt*ratio / span, stay with the
// clamped remainder, argmax-ratio fill for residual masks at t=0).
inline std::map<std::vector<uint8_t>, double> exact_single_jump_law(const RatioModel& ratios,
                                                                    const RateSchedule& sched,
                                                                    double horizon, double dt,
                                                                    int num_classes,
                                                                    size_t length) {
  std::map<std::vector<uint8_t>, double> dist;
  dist[std::vector<uint8_t>(length, kMask)] = 1.0;
  double t = horizon;
  while (t > 1e-12) {
    const double step = std::min(dt, t);
    std::map<std::vector<uint8_t>, double> next;
    for (const auto& [state, p] : dist) {
      TokenSeq x(num_classes, length);
      x.tok = state;
      if (!x.any_masked()) {
        next[state] += p;
        continue;
      }
      const MatrixXd grid = ratios.digit_grid(x, t);
      MatrixXd jump = MatrixXd::Zero(grid.rows(), grid.cols());
      for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        if (state[static_cast<size_t>(i)] == kMask) {
          jump.row(i) = sched.sigma(t) * step * grid.row(i);
        }
      }
      const double total = jump.sum();
      const double span = std::max(total, 1.0);
      next[state] += p * (span - total) / span;
      for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        for (Eigen::Index d = 0; d < grid.cols(); ++d) {
          if (jump(i, d) == 0.0) continue;
          std::vector<uint8_t> y = state;
          y[static_cast<size_t>(i)] = static_cast<uint8_t>(d + 1);
          next[y] += p * jump(i, d) / span;
        }
      }
    }
    dist = std::move(next);
    t -= step;
  }
  // Residual masks: deterministic highest-ratio fill at the last grid time.
  std::map<std::vector<uint8_t>, double> final_dist;
  for (const auto& [state, p] : dist) {
    TokenSeq x(num_classes, length);
    x.tok = state;
    if (!x.any_masked()) {
      final_dist[state] += p;
      continue;
    }
    const MatrixXd grid = ratios.digit_grid(x, std::min(dt, horizon));
    std::vector<uint8_t> y = state;
    for (size_t i = 0; i < y.size(); ++i) {
      if (y[i] != kMask) continue;
      Eigen::Index best = 0;
      for (Eigen::Index d = 1; d < grid.cols(); ++d) {
        if (grid(static_cast<Eigen::Index>(i), d) > grid(static_cast<Eigen::Index>(i), best)) {
          best = d;
        }
      }
      y[i] = static_cast<uint8_t>(best + 1);
    }
    final_dist[y] += p;
  }
  return final_dist;
}

inline std::map<std::vector<uint8_t>, double> enum_truth(const EnumDist& dist) {
  std::map<std::vector<uint8_t>, double> truth;
  for (const auto& [atom, p] : dist.atoms) truth[atom] += p;
  return truth;
}

// The standard 2-token, 3-digit toy distribution used across the sampler
// exactness tests.
inline EnumDist toy_dist() {
  EnumDist d;
  d.num_classes = 3;
  d.length = 2;
  d.atoms = {
      {{1, 2}, 0.40},
      {{2, 3}, 0.30},
      {{3, 1}, 0.20},
      {{1, 1}, 0.10},
  };
  return d;
}

}  // namespace ddcsp::testing
