#include "ddcsp/schedule.hpp"

#include <cmath>

namespace ddcsp {

namespace {

Schedule finish(std::vector<double> betas) {
  Schedule s;
  s.num_steps = static_cast<int>(betas.size());
  s.beta = std::move(betas);
  s.cum_mask.resize(s.beta.size() + 1);
  s.cum_mask[0] = 0.0;
  for (size_t t = 0; t < s.beta.size(); ++t) {
    const double b = s.beta[t];
    if (!(b >= 0.0 && b <= 1.0)) {
      throw ScheduleError("beta_" + std::to_string(t + 1) + " = " + std::to_string(b) +
                          " outside [0, 1]");
    }
    s.cum_mask[t + 1] = s.cum_mask[t] + b * (1.0 - s.cum_mask[t]);
  }
  if (std::abs(s.cum_mask.back() - 1.0) > 1e-12) {
    throw ScheduleError("cumulative mask probability at T is " +
                        std::to_string(s.cum_mask.back()) + ", expected 1");
  }
  return s;
}

}  // namespace

Schedule make_linear_mask_schedule(int num_steps) {
  if (num_steps < 1) throw ScheduleError("num_steps must be >= 1");
  std::vector<double> betas(static_cast<size_t>(num_steps));
  for (int t = 1; t <= num_steps; ++t) {
    betas[static_cast<size_t>(t - 1)] = 1.0 / static_cast<double>(num_steps - t + 1);
  }
  return finish(std::move(betas));
}

Schedule make_custom_schedule(const std::vector<double>& betas) {
  if (betas.empty()) throw ScheduleError("num_steps must be >= 1");
  return finish(betas);
}

}  // namespace ddcsp
