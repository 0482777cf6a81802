#include "ddcsp/value_net.hpp"

#include <fstream>
#include <numeric>

namespace ddcsp {

Board corrupt_board(const Board& solution, int cells, Rng& rng) {
  Board out = solution;
  const int total = out.num_cells();
  std::vector<int> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const int N = out.side();
  for (int k = 0; k < cells && k < total; ++k) {
    out.cell[static_cast<size_t>(order[static_cast<size_t>(k)])] =
        static_cast<uint8_t>(1 + rng.uniform_int(N));
  }
  return out;
}

MatrixXd onehot_grid(const Board& board) {
  const int N = board.side();
  MatrixXd grid = MatrixXd::Zero(board.num_cells(), N);
  for (int i = 0; i < board.num_cells(); ++i) {
    const uint8_t v = board.cell[static_cast<size_t>(i)];
    if (v != kEmpty) grid(i, v - 1) = 1.0;
  }
  return grid;
}

Checkpoint train_value_net(const Dataset& dataset, const CorruptionConfig& ccfg,
                           const ValueNetConfig& vcfg, const TrainConfig& tcfg,
                           TrainResult* result) {
  tcfg.validate();
  if (dataset.size() == 0) throw std::invalid_argument("train_value_net: empty dataset");
  if (dataset.kind != DatasetKind::kSolutions) {
    throw std::invalid_argument("train_value_net: expected a solutions-only dataset");
  }

  ValueNetModel<float> model = ValueNetModel<float>::init(vcfg);
  Rng rng = derive_rng(ccfg.seed, 0x76616c75);
  const int max_cells = ccfg.resolve_max_cells(vcfg.seq_len());
  AdamConfig adam;

  TrainResult local;
  TrainResult& res = result ? *result : local;
  res.loss_curve.reserve(static_cast<size_t>(tcfg.total_steps));

  for (int step = 1; step <= tcfg.total_steps; ++step) {
    Tape<float> tape;
    const VarMap<float> w = lift_params(tape, model.params, true);
    Tape<float>::Var loss{-1};
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const Board& solution =
          dataset.solution(static_cast<size_t>(rng.uniform_int(static_cast<int>(dataset.size()))));
      const int k = rng.uniform_int(max_cells + 1);
      const Board corrupted = corrupt_board(solution, k, rng);
      const float label = -static_cast<float>(count_violations(corrupted));

      auto grid = tape.constant(onehot_grid(corrupted).cast<float>());
      auto pred = model.forward(tape, w, grid);
      auto err = tape.sub(pred, tape.constant(DenseMatrix<float>::Constant(1, 1, label)));
      auto sq = tape.square(err);
      loss = loss.valid() ? tape.add(loss, sq) : sq;
    }
    loss = tape.scale(loss, 1.0f / static_cast<float>(tcfg.batch_size));
    tape.backward(loss);

    adam.lr = tcfg.lr_at(step);
    adam_step(model.params, collect_grads(tape, w), adam);

    const double loss_value = static_cast<double>(tape.value(loss)(0, 0));
    res.loss_curve.push_back(loss_value);
    res.final_loss = loss_value;
  }

  Checkpoint ckpt = checkpoint_from_params(model.params, kValueModelKind, vcfg.encode());
  if (!tcfg.checkpoint_path.empty()) save_checkpoint(ckpt, tcfg.checkpoint_path);
  return ckpt;
}

ValueNetModel<float> value_net_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != kValueModelKind) {
    throw CheckpointError("expected model kind " + std::string(kValueModelKind) + ", got " +
                          ckpt.model_kind);
  }
  ValueNetModel<float> model = ValueNetModel<float>::init(ValueNetConfig::decode(ckpt.config));
  params_from_checkpoint(ckpt, model.params);
  return model;
}

std::shared_ptr<const ValueNetModel<double>> value_net_to_double(
    const ValueNetModel<float>& model) {
  auto out = std::make_shared<ValueNetModel<double>>();
  out->cfg = model.cfg;
  for (const auto& [name, entry] : model.params.params) {
    out->params.add(name, entry.value.cast<double>());
  }
  return out;
}

double value_net_predict(const ValueNetModel<float>& model, const Board& board) {
  Tape<float> tape;
  const VarMap<float> w = lift_params(tape, model.params, false);
  auto grid = tape.constant(onehot_grid(board).cast<float>());
  return static_cast<double>(tape.value(model.forward(tape, w, grid))(0, 0));
}

}  // namespace ddcsp
