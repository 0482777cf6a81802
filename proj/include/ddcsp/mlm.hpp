#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ddcsp/dense.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/schedule.hpp"
#include "ddcsp/sudoku.hpp"

namespace ddcsp {

constexpr uint8_t kMask = 0;

// A sequence of categorical tokens under absorbing-state corruption:
// 0 = mask, 1..num_classes = digits. Boards map to length N^2 sequences but
// the diffusion machinery is agnostic to the Sudoku structure.
struct TokenSeq {
  int num_classes = 0;
  std::vector<uint8_t> tok;

  TokenSeq() = default;
  TokenSeq(int classes, size_t length, uint8_t fill = kMask)
      : num_classes(classes), tok(length, fill) {}

  size_t length() const { return tok.size(); }
  std::vector<int> masked_indices() const {
    std::vector<int> idx;
    for (size_t i = 0; i < tok.size(); ++i)
      if (tok[i] == kMask) idx.push_back(static_cast<int>(i));
    return idx;
  }
  bool any_masked() const {
    for (uint8_t t : tok)
      if (t == kMask) return true;
    return false;
  }
  bool operator==(const TokenSeq& o) const {
    return num_classes == o.num_classes && tok == o.tok;
  }
};

TokenSeq seq_from_board(const Board& board);           // requires complete board
Board board_from_seq(const TokenSeq& seq, int order);  // requires no masks

// Per-position logits / probabilities over the digit classes (L x K).
using LogitGrid = MatrixXd;

// Denoiser interface: corrupted sequence + timestep -> digit logits (L x K).
using DenoiserFn = std::function<LogitGrid(const TokenSeq&, int)>;

// In-place logit refinement hook (guidance); receives the clamp pattern so
// positions fixed by infilling can be frozen. 0 in `clamp` means free.
using RefineFn = std::function<LogitGrid(const LogitGrid&, const std::vector<uint8_t>&)>;

// Per-step observer for trajectory inspection: (state, timestep just reached).
using StepObserver = std::function<void(const TokenSeq&, int)>;

// Each token independently becomes mask with probability cum_mask[t].
TokenSeq forward_sample(const TokenSeq& x0, int t, const Schedule& schedule, Rng& rng);
TokenSeq forward_sample(const Board& x0, int t, const Schedule& schedule, Rng& rng);

// Single-token reverse transition p(x_{t-k} | x_t = current) for the
// absorbing kernel, as a (K+1)-vector: entry 0 is mask, entry v is digit v.
// `digit_probs` is the denoiser's distribution over digits at this position.
VectorXd reverse_token_distribution(uint8_t current, const VectorXd& digit_probs, int t, int k,
                                    const Schedule& schedule);

// Reverse transition x_t -> x_{t-k}: unmasked tokens stay fixed; a masked
// token stays masked with probability cum_mask[t-k]/cum_mask[t], otherwise
// unmasks to a digit drawn from its denoiser row.
TokenSeq reverse_step(const TokenSeq& xt, const MatrixXd& dist, int t, int k,
                      const Schedule& schedule, Rng& rng);

// Replaces clamped positions (clamp[i] != 0) with their given digit.
TokenSeq clamp_infill(const TokenSeq& wt, const std::vector<uint8_t>& clamp);
TokenSeq clamp_infill(const TokenSeq& wt, const Board& puzzle);

struct GenerateOptions {
  int stride = 1;              // k-step skipping
  int refine_interval = 1;     // refine every Nth reverse step (1 = every step)
  std::vector<uint8_t> clamp;  // empty = unconditional
  RefineFn refine;             // optional guidance
  StepObserver observer;       // optional trajectory hook
};

// Full reverse sampling loop from the all-mask prior. Residual masks at t=0
// (unreachable for schedules with cum_mask[0]=0, kept as a deterministic
// fallback) are filled by per-position argmax of the final denoiser call.
TokenSeq generate_seq(const DenoiserFn& denoiser, const Schedule& schedule, int num_classes,
                      size_t length, const GenerateOptions& opts, Rng& rng);

// Board-level wrapper: conditions on `puzzle` givens when provided.
Board generate(const DenoiserFn& denoiser, const Schedule& schedule, int order,
               const std::optional<Board>& puzzle, const GenerateOptions& opts, Rng& rng);

// Mean over masked positions of -log softmax(logits)[true digit]; 0 when no
// position is masked.
double mlm_loss(const LogitGrid& logits, const Board& x0, const std::vector<int>& masked);

}  // namespace ddcsp
