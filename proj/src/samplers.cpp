#include "ddcsp/samplers.hpp"

namespace ddcsp {

SamplerSpec make_mlm_sampler(std::shared_ptr<const DenoiserModel<float>> model,
                             const Schedule& schedule, int stride) {
  SamplerSpec spec;
  spec.method = "ddcsp";
  const DenoiserFn denoiser = make_denoiser_fn(std::move(model));
  spec.sample = [denoiser, schedule, stride](const Board& puzzle, Rng& rng) {
    GenerateOptions opts;
    opts.stride = stride;
    return generate(denoiser, schedule, puzzle.order, puzzle, opts, rng);
  };
  return spec;
}

SamplerSpec make_guided_mlm_sampler(std::shared_ptr<const DenoiserModel<float>> model,
                                    const Schedule& schedule, int stride, ValueFunction value,
                                    const GuidanceConfig& gcfg) {
  gcfg.validate();
  SamplerSpec spec;
  spec.method = "ddcsp+guidance";
  const DenoiserFn denoiser = make_denoiser_fn(std::move(model));
  spec.sample = [denoiser, schedule, stride, value, gcfg](const Board& puzzle, Rng& rng) {
    GenerateOptions opts;
    opts.stride = stride;
    opts.refine_interval = gcfg.every;
    opts.refine = [&value, &gcfg, &rng](const LogitGrid& h, const std::vector<uint8_t>& frozen) {
      return guided_refine(h, value, gcfg, rng, frozen);
    };
    return generate(denoiser, schedule, puzzle.order, puzzle, opts, rng);
  };
  return spec;
}

SamplerSpec make_sedd_sampler(RatioModel ratios, const RateSchedule& rate, const SeddConfig& cfg,
                              int order) {
  cfg.validate();
  SamplerSpec spec;
  spec.method = "sedd";
  spec.sample = [ratios = std::move(ratios), rate, cfg, order](const Board& puzzle, Rng& rng) {
    return sedd_sample(ratios, rate, cfg, order, puzzle, rng);
  };
  return spec;
}

}  // namespace ddcsp
