#include "ddcsp/mlm.hpp"

#include <cmath>

namespace ddcsp {

TokenSeq seq_from_board(const Board& board) {
  if (!board.complete()) throw std::invalid_argument("seq_from_board: board has empty cells");
  TokenSeq seq(board.side(), static_cast<size_t>(board.num_cells()));
  seq.tok = board.cell;
  return seq;
}

Board board_from_seq(const TokenSeq& seq, int order) {
  if (seq.any_masked()) throw std::invalid_argument("board_from_seq: sequence has masks");
  Board board(order);
  if (seq.length() != board.cell.size()) {
    throw std::invalid_argument("board_from_seq: length mismatch");
  }
  board.cell = seq.tok;
  return board;
}

TokenSeq forward_sample(const TokenSeq& x0, int t, const Schedule& schedule, Rng& rng) {
  if (x0.any_masked()) throw std::invalid_argument("forward_sample: x0 must be complete");
  if (t < 0 || t > schedule.num_steps) throw std::invalid_argument("forward_sample: bad t");
  const double m = schedule.mask_prob(t);
  TokenSeq xt = x0;
  for (auto& tok : xt.tok) {
    if (rng.u01() < m) tok = kMask;
  }
  return xt;
}

TokenSeq forward_sample(const Board& x0, int t, const Schedule& schedule, Rng& rng) {
  return forward_sample(seq_from_board(x0), t, schedule, rng);
}

VectorXd reverse_token_distribution(uint8_t current, const VectorXd& digit_probs, int t, int k,
                                    const Schedule& schedule) {
  if (k < 1 || k > t) throw std::invalid_argument("reverse_token_distribution: need 1 <= k <= t");
  const int K = static_cast<int>(digit_probs.size());
  VectorXd p = VectorXd::Zero(K + 1);
  if (current != kMask) {
    p[current] = 1.0;
    return p;
  }
  const double mt = schedule.mask_prob(t);
  const double ms = schedule.mask_prob(t - k);
  const double stay = mt > 0.0 ? ms / mt : 0.0;
  p[0] = stay;
  p.tail(K) = (1.0 - stay) * digit_probs;
  return p;
}

TokenSeq reverse_step(const TokenSeq& xt, const MatrixXd& dist, int t, int k,
                      const Schedule& schedule, Rng& rng) {
  if (k < 1 || k > t) throw std::invalid_argument("reverse_step: need 1 <= k <= t");
  const double mt = schedule.mask_prob(t);
  const double ms = schedule.mask_prob(t - k);
  const double stay = mt > 0.0 ? ms / mt : 0.0;
  const int K = xt.num_classes;
  TokenSeq out = xt;
  for (size_t i = 0; i < xt.tok.size(); ++i) {
    if (xt.tok[i] != kMask) continue;
    if (rng.u01() < stay) continue;
    // Unmask: inverse-CDF draw from the denoiser row.
    const double u = rng.u01();
    double acc = 0.0;
    int digit = K;
    for (int v = 1; v <= K; ++v) {
      acc += dist(static_cast<Eigen::Index>(i), v - 1);
      if (u < acc) {
        digit = v;
        break;
      }
    }
    out.tok[i] = static_cast<uint8_t>(digit);
  }
  return out;
}

TokenSeq clamp_infill(const TokenSeq& wt, const std::vector<uint8_t>& clamp) {
  if (clamp.empty()) return wt;
  if (clamp.size() != wt.tok.size()) throw std::invalid_argument("clamp_infill: length mismatch");
  TokenSeq out = wt;
  for (size_t i = 0; i < clamp.size(); ++i) {
    if (clamp[i] != 0) out.tok[i] = clamp[i];
  }
  return out;
}

TokenSeq clamp_infill(const TokenSeq& wt, const Board& puzzle) {
  if (static_cast<size_t>(puzzle.num_cells()) != wt.tok.size()) {
    throw std::invalid_argument("clamp_infill: order mismatch");
  }
  return clamp_infill(wt, puzzle.cell);
}

TokenSeq generate_seq(const DenoiserFn& denoiser, const Schedule& schedule, int num_classes,
                      size_t length, const GenerateOptions& opts, Rng& rng) {
  if (opts.stride < 1) throw std::invalid_argument("generate_seq: stride must be >= 1");
  if (opts.refine_interval < 1) {
    throw std::invalid_argument("generate_seq: refine_interval must be >= 1");
  }
  TokenSeq wt(num_classes, length, kMask);
  wt = clamp_infill(wt, opts.clamp);
  if (opts.observer) opts.observer(wt, schedule.num_steps);

  int t = schedule.num_steps;
  int step_index = 0;
  while (t > 0) {
    const int k = std::min(opts.stride, t);
    LogitGrid logits = denoiser(wt, t);
    if (opts.refine && step_index++ % opts.refine_interval == 0) {
      logits = opts.refine(logits, opts.clamp.empty()
                                       ? std::vector<uint8_t>(length, 0)
                                       : opts.clamp);
    }
    const MatrixXd dist = softmax_rows(logits);
    wt = reverse_step(wt, dist, t, k, schedule, rng);
    t -= k;
    wt = clamp_infill(wt, opts.clamp);
    if (opts.observer) opts.observer(wt, t);
  }

  if (wt.any_masked()) {
    // Deterministic fallback: argmax of the final denoiser distribution.
    const LogitGrid logits = denoiser(wt, 0);
    for (size_t i = 0; i < wt.tok.size(); ++i) {
      if (wt.tok[i] != kMask) continue;
      Eigen::Index best;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      wt.tok[i] = static_cast<uint8_t>(best + 1);
    }
    wt = clamp_infill(wt, opts.clamp);
    if (opts.observer) opts.observer(wt, 0);
  }
  return wt;
}

Board generate(const DenoiserFn& denoiser, const Schedule& schedule, int order,
               const std::optional<Board>& puzzle, const GenerateOptions& opts, Rng& rng) {
  GenerateOptions o = opts;
  if (puzzle) {
    if (puzzle->order != order) throw std::invalid_argument("generate: puzzle order mismatch");
    o.clamp = puzzle->cell;
  }
  const int N = order * order;
  const TokenSeq out =
      generate_seq(denoiser, schedule, N, static_cast<size_t>(N * N), o, rng);
  return board_from_seq(out, order);
}

double mlm_loss(const LogitGrid& logits, const Board& x0, const std::vector<int>& masked) {
  if (masked.empty()) return 0.0;
  const MatrixXd logp = log_softmax_rows(logits);
  double total = 0.0;
  for (int i : masked) {
    const uint8_t digit = x0.cell[static_cast<size_t>(i)];
    total -= logp(i, digit - 1);
  }
  return total / static_cast<double>(masked.size());
}

}  // namespace ddcsp
