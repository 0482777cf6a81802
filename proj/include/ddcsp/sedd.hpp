#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ddcsp/dense.hpp"
#include "ddcsp/denoiser.hpp"
#include "ddcsp/mlm.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/sudoku.hpp"

namespace ddcsp {

// Continuous-time absorbing corruption with masking rate sigma(t): a token
// survives to time t with probability exp(-Sigma(t)), Sigma the integral.
struct RateSchedule {
  enum class Kind { kConstant, kGeometric };
  Kind kind = Kind::kConstant;
  double sigma0 = 14.0;               // constant rate
  double sigma_lo = 0.1, sigma_hi = 20.0, horizon = 1.0;  // geometric interpolation

  double sigma(double t) const;
  double integral(double t) const;  // closed-form Sigma(t)

  // Calibrated so mask_prob(1) >= 1 - 1e-6: the prior is effectively all-mask.
  static RateSchedule constant(double sigma0 = 14.0);
  static RateSchedule geometric(double lo, double hi, double horizon);
};

// m(t) = 1 - exp(-Sigma(t)): probability a token is absorbed by time t.
double mask_prob(const RateSchedule& schedule, double t);

// Each token independently masked with probability m(t) (the exact marginal
// of the forward CTMC, no stepping needed).
TokenSeq ctmc_forward_sample(const TokenSeq& x0, double t, const RateSchedule& schedule, Rng& rng);
TokenSeq ctmc_forward_sample(const Board& x0, double t, const RateSchedule& schedule, Rng& rng);

// Marginal-ratio model: digit_grid(x, t) returns an L x K matrix whose
// (i, d-1) entry estimates p_t(x with digit d at i) / p_t(x); entries for the
// current token are 1.
struct RatioModel {
  std::function<MatrixXd(const TokenSeq&, double)> digit_grid;
};

struct SeddError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Enumerable data distribution over short sequences; the verification
// instrument for the continuous-time machinery.
struct EnumDist {
  int num_classes = 0;
  size_t length = 0;
  std::vector<std::pair<std::vector<uint8_t>, double>> atoms;  // digits 1..K

  void validate() const;
};

// Exact marginal posterior p(x0_i = d | x) of the clean sequence given a
// partially masked one, per position (L x K). Independent of the mask level:
// the absorbing-channel factors are shared by every consistent atom.
MatrixXd enum_posterior(const EnumDist& dist, const TokenSeq& x);

// Computes p_t exactly from the enumerable distribution:
//   p_t(x) = sum_{x0} p_data(x0) prod_i q_t(x_i | x0_i)
// for the absorbing channel q_t(mask|d) = m(t), q_t(d|d) = 1 - m(t).
class ExactRatioOracle {
 public:
  ExactRatioOracle(EnumDist dist, RateSchedule schedule);

  double prob(const TokenSeq& x, double t) const;
  // Ratio p_t(x with candidate v at pos) / p_t(x); v may be the mask token.
  // Returns 0 when p_t(x) = 0.
  double ratio(const TokenSeq& x, double t, int pos, uint8_t v) const;
  RatioModel model() const;

  const EnumDist& dist() const { return dist_; }
  // Exact marginal posterior p(x0_i = d | x_t) per position, L x K.
  MatrixXd posterior(const TokenSeq& x) const;

 private:
  EnumDist dist_;
  RateSchedule schedule_;
};

struct SeddStats {
  long steps = 0;
  long clamp_events = 0;  // stay probability clamped at 0 (jump mass > 1)
};

// Single-jump Euler reverse step: at most one masked position unmasks, with
// probability sigma(t) * dt * ratio per (position, digit) and stay
// probability 1 - sum, clamped at 0.
TokenSeq euler_reverse_step(const TokenSeq& xt, double t, double dt, const RatioModel& ratios,
                            const RateSchedule& schedule, Rng& rng, SeddStats* stats = nullptr);

// Tau-leaping: every masked position jumps independently with its Euler
// probability, so several tokens can unmask in one step.
TokenSeq tau_leap_step(const TokenSeq& xt, double t, double dt, const RatioModel& ratios,
                       const RateSchedule& schedule, Rng& rng, SeddStats* stats = nullptr);

struct SeddConfig {
  double horizon = 1.0;
  double dt = 1e-2;
  bool tau_leap = false;
  std::vector<uint8_t> clamp;  // infilling pattern, empty = unconditional
  StepObserver observer;

  void validate() const {
    if (!(dt > 0.0) || dt > horizon) {
      throw std::invalid_argument("sedd config: need 0 < dt <= horizon");
    }
  }
};

// Reverse walk from the all-mask prior at t = horizon down to 0, applying
// clamp infilling each step. Residual masks at t = 0 are filled with the
// highest-ratio digit at the final positive grid time (ties to the lowest
// digit).
TokenSeq sedd_sample_seq(const RatioModel& ratios, const RateSchedule& schedule,
                         const SeddConfig& cfg, int num_classes, size_t length, Rng& rng,
                         SeddStats* stats = nullptr);

Board sedd_sample(const RatioModel& ratios, const RateSchedule& schedule, const SeddConfig& cfg,
                  int order, const std::optional<Board>& puzzle, Rng& rng,
                  SeddStats* stats = nullptr);

// Denoiser posterior at a continuous time, L x K probabilities.
using PosteriorFn = std::function<MatrixXd(const TokenSeq&, double)>;

// Absorbing-channel correspondence: for a masked position,
//   ratio(mask -> d) = p(x0_i = d | x_t) * (1 - m(t)) / m(t),
// digit positions keep self-ratio 1 and 0 elsewhere.
RatioModel ratios_from_posterior(PosteriorFn posterior, const RateSchedule& schedule);

// Ratios backed by the trained MLM denoiser; the continuous mask level m(t)
// is matched to the nearest discrete timestep of `discrete`.
RatioModel denoiser_ratios(std::shared_ptr<const DenoiserModel<float>> model,
                           const Schedule& discrete, const RateSchedule& schedule);

}  // namespace ddcsp
