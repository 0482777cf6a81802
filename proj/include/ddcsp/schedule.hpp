#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ddcsp {

// Discrete-time absorbing (mask) schedule. beta[t-1] is the per-step mask
// probability at step t; cum_mask[t] is the probability a token is masked
// after t forward steps:
//   cum_mask[0] = 0,  cum_mask[t] = cum_mask[t-1] + beta_t * (1 - cum_mask[t-1])
// cum_mask[T] must be 1 so the prior is all-mask.
struct Schedule {
  int num_steps = 0;
  std::vector<double> beta;      // size T, beta[0] = beta_1
  std::vector<double> cum_mask;  // size T + 1

  double mask_prob(int t) const { return cum_mask[static_cast<size_t>(t)]; }
};

struct ScheduleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// beta_t = 1/(T - t + 1), which telescopes to cum_mask[t] = t/T.
Schedule make_linear_mask_schedule(int num_steps);

// Validates the betas and that the cumulative mask probability reaches 1.
Schedule make_custom_schedule(const std::vector<double>& betas);

// Declared defaults: fast desk-scale runs, overridable from config.
inline int default_num_steps(int order) { return order == 2 ? 16 : 64; }

}  // namespace ddcsp
