#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ddcsp/checkpoint.hpp"
#include "ddcsp/mlm.hpp"
#include "ddcsp/nn.hpp"
#include "ddcsp/schedule.hpp"
#include "ddcsp/sudoku.hpp"

namespace ddcsp {

struct TrainConfig {
  int batch_size = 32;
  int total_steps = 3000;
  double lr = 1e-3;
  std::string lr_schedule = "cosine";  // "constant" | "cosine"
  int warmup_steps = 100;
  int eval_interval = 500;
  int eval_examples = 64;
  std::string checkpoint_path;  // empty = do not write
  std::string metrics_path;     // empty = do not write

  void validate() const {
    if (batch_size < 1 || total_steps < 1 || eval_interval < 1 || eval_examples < 1) {
      throw std::invalid_argument("train config counts must be positive");
    }
    if (lr_schedule != "constant" && lr_schedule != "cosine") {
      throw std::invalid_argument("lr_schedule must be 'constant' or 'cosine'");
    }
  }

  // Warmup then optional cosine decay to zero.
  double lr_at(int step) const {
    double factor = std::min(1.0, static_cast<double>(step) / std::max(1, warmup_steps));
    if (lr_schedule == "cosine" && total_steps > warmup_steps && step > warmup_steps) {
      const double progress = static_cast<double>(step - warmup_steps) /
                              static_cast<double>(total_steps - warmup_steps);
      factor *= 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
    }
    return lr * factor;
  }
};

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per step
  double final_loss = 0.0;
  double eval_accuracy = 0.0;  // masked-token accuracy at the last eval
};

// MLM training: sample a batch of solutions, a uniform timestep per example,
// corrupt with the forward kernel, and minimize masked cross-entropy.
Checkpoint train_denoiser(const Dataset& dataset, const DenoiserConfig& dcfg,
                          const TrainConfig& tcfg, const Schedule& schedule,
                          TrainResult* result = nullptr);

DenoiserModel<float> denoiser_from_checkpoint(const Checkpoint& ckpt);

// Single-sequence digit logits for a corrupted board; throws on an order or
// timestep mismatch.
LogitGrid denoise(const DenoiserModel<float>& model, const TokenSeq& wt, int t);

// Wraps a frozen model as the sampling interface. The model is shared and
// read-only, safe across threads.
DenoiserFn make_denoiser_fn(std::shared_ptr<const DenoiserModel<float>> model);

// Masked-token accuracy of argmax predictions on corrupted copies of the
// given boards (one timestep draw per board).
double masked_token_accuracy(const DenoiserModel<float>& model, const std::vector<Board>& boards,
                             const Schedule& schedule, Rng& rng);

constexpr const char* kDenoiserModelKind = "denoiser-v1";

}  // namespace ddcsp
