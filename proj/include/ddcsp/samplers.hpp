#pragma once

#include <memory>

#include "ddcsp/denoiser.hpp"
#include "ddcsp/eval.hpp"
#include "ddcsp/guidance.hpp"
#include "ddcsp/sedd.hpp"

namespace ddcsp {

// Discrete-time reverse sampler ("ddcsp"), optionally with guided logit
// refinement ("ddcsp+guidance"). All randomness comes from the rng handed in
// per candidate by run_eval.
SamplerSpec make_mlm_sampler(std::shared_ptr<const DenoiserModel<float>> model,
                             const Schedule& schedule, int stride = 1);
SamplerSpec make_guided_mlm_sampler(std::shared_ptr<const DenoiserModel<float>> model,
                                    const Schedule& schedule, int stride, ValueFunction value,
                                    const GuidanceConfig& gcfg);

// Continuous-time sampler ("sedd") over an arbitrary ratio model.
SamplerSpec make_sedd_sampler(RatioModel ratios, const RateSchedule& rate, const SeddConfig& cfg,
                              int order);

}  // namespace ddcsp
