#include "ddcsp/denoiser.hpp"

#include <fstream>

namespace ddcsp {

namespace {

// Corrupt a batch of solutions and pack it for the batched forward pass.
struct PackedBatch {
  std::vector<uint8_t> tokens;
  std::vector<int> ts;
  std::vector<int> targets;        // 0-based digit classes, per row
  std::vector<uint8_t> mask;       // 1 where the position is masked
};

PackedBatch pack_batch(const Dataset& dataset, const std::vector<size_t>& picks,
                       const Schedule& schedule, Rng& rng) {
  PackedBatch b;
  const Board& first = dataset.solution(picks.at(0));
  const int L = first.num_cells();
  b.tokens.reserve(picks.size() * static_cast<size_t>(L));
  b.targets.reserve(b.tokens.capacity());
  b.mask.reserve(b.tokens.capacity());
  for (size_t pick : picks) {
    const Board& x0 = dataset.solution(pick);
    const int t = 1 + rng.uniform_int(schedule.num_steps);
    b.ts.push_back(t);
    const TokenSeq wt = forward_sample(x0, t, schedule, rng);
    for (int i = 0; i < L; ++i) {
      b.tokens.push_back(wt.tok[static_cast<size_t>(i)]);
      b.targets.push_back(x0.cell[static_cast<size_t>(i)] - 1);
      b.mask.push_back(wt.tok[static_cast<size_t>(i)] == kMask ? 1 : 0);
    }
  }
  return b;
}

}  // namespace

Checkpoint train_denoiser(const Dataset& dataset, const DenoiserConfig& dcfg,
                          const TrainConfig& tcfg, const Schedule& schedule,
                          TrainResult* result) {
  tcfg.validate();
  if (dataset.size() == 0) throw std::invalid_argument("train_denoiser: empty dataset");
  if (dataset.kind != DatasetKind::kSolutions) {
    throw std::invalid_argument("train_denoiser: expected a solutions-only dataset");
  }
  if (schedule.num_steps > dcfg.max_t) {
    throw std::invalid_argument("train_denoiser: schedule has more steps than max_t");
  }

  DenoiserModel<float> model = DenoiserModel<float>::init(dcfg);
  const int L = dcfg.seq_len();
  Rng train_rng = derive_rng(dcfg.seed, 0x7261696e);
  Rng dropout_rng = derive_rng(dcfg.seed, 0x64726f70);
  AdamConfig adam;

  std::ofstream metrics;
  if (!tcfg.metrics_path.empty()) {
    metrics.open(tcfg.metrics_path);
    metrics << "step,loss,eval_accuracy\n";
  }

  TrainResult local;
  TrainResult& res = result ? *result : local;
  res.loss_curve.reserve(static_cast<size_t>(tcfg.total_steps));

  for (int step = 1; step <= tcfg.total_steps; ++step) {
    std::vector<size_t> picks(static_cast<size_t>(tcfg.batch_size));
    for (auto& pick : picks) {
      pick = static_cast<size_t>(train_rng.uniform_int(static_cast<int>(dataset.size())));
    }
    const PackedBatch batch = pack_batch(dataset, picks, schedule, train_rng);

    Tape<float> tape;
    const VarMap<float> w = lift_params(tape, model.params, true);
    const auto logits = model.forward(tape, w, batch.tokens, batch.ts, true, &dropout_rng);

    // Per-example masked mean, then batch mean.
    typename Tape<float>::Var loss{-1};
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const auto row0 = static_cast<size_t>(b) * static_cast<size_t>(L);
      std::vector<int> targets(batch.targets.begin() + row0, batch.targets.begin() + row0 + L);
      std::vector<uint8_t> mask(batch.mask.begin() + row0, batch.mask.begin() + row0 + L);
      const auto lb =
          tape.masked_cross_entropy(tape.rows(logits, b * L, L), std::move(targets),
                                    std::move(mask));
      loss = loss.valid() ? tape.add(loss, lb) : lb;
    }
    loss = tape.scale(loss, 1.0f / static_cast<float>(tcfg.batch_size));
    tape.backward(loss);

    adam.lr = tcfg.lr_at(step);
    adam_step(model.params, collect_grads(tape, w), adam);

    const double loss_value = static_cast<double>(tape.value(loss)(0, 0));
    res.loss_curve.push_back(loss_value);
    res.final_loss = loss_value;

    if (step % tcfg.eval_interval == 0 || step == tcfg.total_steps) {
      Rng eval_rng = derive_rng(dcfg.seed, 0x6576616cull + static_cast<uint64_t>(step));
      std::vector<Board> eval_boards;
      for (int e = 0; e < tcfg.eval_examples; ++e) {
        eval_boards.push_back(
            dataset.solution(static_cast<size_t>(eval_rng.uniform_int(
                static_cast<int>(dataset.size())))));
      }
      res.eval_accuracy = masked_token_accuracy(model, eval_boards, schedule, eval_rng);
      if (metrics.is_open()) {
        metrics << step << ',' << loss_value << ',' << res.eval_accuracy << '\n';
      }
    }
  }

  Checkpoint ckpt = checkpoint_from_params(model.params, kDenoiserModelKind, dcfg.encode());
  if (!tcfg.checkpoint_path.empty()) save_checkpoint(ckpt, tcfg.checkpoint_path);
  return ckpt;
}

DenoiserModel<float> denoiser_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != kDenoiserModelKind) {
    throw CheckpointError("expected model kind " + std::string(kDenoiserModelKind) + ", got " +
                          ckpt.model_kind);
  }
  DenoiserModel<float> model = DenoiserModel<float>::init(DenoiserConfig::decode(ckpt.config));
  params_from_checkpoint(ckpt, model.params);
  return model;
}

LogitGrid denoise(const DenoiserModel<float>& model, const TokenSeq& wt, int t) {
  if (static_cast<int>(wt.length()) != model.cfg.seq_len() ||
      wt.num_classes != model.cfg.side()) {
    throw std::invalid_argument("denoise: board order mismatch");
  }
  Tape<float> tape;
  const VarMap<float> w = lift_params(tape, model.params, false);
  const auto logits = model.forward(tape, w, wt.tok, {t});
  return tape.value(logits).cast<double>();
}

DenoiserFn make_denoiser_fn(std::shared_ptr<const DenoiserModel<float>> model) {
  return [model](const TokenSeq& wt, int t) { return denoise(*model, wt, t); };
}

double masked_token_accuracy(const DenoiserModel<float>& model, const std::vector<Board>& boards,
                             const Schedule& schedule, Rng& rng) {
  long correct = 0, total = 0;
  for (const Board& x0 : boards) {
    const int t = 1 + rng.uniform_int(schedule.num_steps);
    const TokenSeq wt = forward_sample(x0, t, schedule, rng);
    const LogitGrid logits = denoise(model, wt, t);
    for (size_t i = 0; i < wt.tok.size(); ++i) {
      if (wt.tok[i] != kMask) continue;
      Eigen::Index best;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      correct += (static_cast<uint8_t>(best + 1) == x0.cell[i]);
      ++total;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace ddcsp
