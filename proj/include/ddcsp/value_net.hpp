#pragma once

#include <memory>

#include "ddcsp/checkpoint.hpp"
#include "ddcsp/denoiser.hpp"
#include "ddcsp/nn.hpp"
#include "ddcsp/sudoku.hpp"

namespace ddcsp {

// Supervision for the value net: replace k ~ Unif{0..max_cells} random cells
// of a solution with random digits, label with -count_violations.
struct CorruptionConfig {
  int max_cells = -1;  // -1 = half the board
  uint64_t seed = 9;

  int resolve_max_cells(int num_cells) const {
    return max_cells < 0 ? num_cells / 2 : max_cells;
  }
};

Board corrupt_board(const Board& solution, int cells, Rng& rng);

// One-hot encoding of a complete board, L x N.
MatrixXd onehot_grid(const Board& board);

Checkpoint train_value_net(const Dataset& dataset, const CorruptionConfig& ccfg,
                           const ValueNetConfig& vcfg, const TrainConfig& tcfg,
                           TrainResult* result = nullptr);

ValueNetModel<float> value_net_from_checkpoint(const Checkpoint& ckpt);

// Upcast to double for use inside guided refinement.
std::shared_ptr<const ValueNetModel<double>> value_net_to_double(
    const ValueNetModel<float>& model);

double value_net_predict(const ValueNetModel<float>& model, const Board& board);

constexpr const char* kValueModelKind = "value-v1";

}  // namespace ddcsp
