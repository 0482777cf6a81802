#include "ddcsp/eval.hpp"

#include <atomic>
#include <chrono>
#include <stdexcept>
#include <thread>

namespace ddcsp {

SamplerSpec make_oracle_sampler() {
  SamplerSpec spec;
  spec.method = "oracle";
  spec.sample = [](const Board& puzzle, Rng&) {
    auto solutions = enumerate_solutions(puzzle, 1);
    if (solutions.empty()) return puzzle;  // contradictory puzzle: no candidate can pass
    return solutions.front();
  };
  return spec;
}

namespace {

bool candidate_solves(const Board& candidate, const Board& puzzle) {
  if (candidate.order != puzzle.order) return false;
  if (!candidate.complete()) return false;
  if (count_violations(candidate) != 0) return false;
  for (int i = 0; i < puzzle.num_cells(); ++i) {
    const uint8_t given = puzzle.cell[static_cast<size_t>(i)];
    if (given != kEmpty && candidate.cell[static_cast<size_t>(i)] != given) return false;
  }
  return true;
}

}  // namespace

SolveReport run_eval(const SamplerSpec& sampler, const Dataset& pairs, const EvalOptions& opts) {
  if (pairs.kind != DatasetKind::kPairs) {
    throw std::invalid_argument("run_eval: expected a puzzle/solution pairs dataset");
  }
  if (pairs.size() == 0) throw std::invalid_argument("run_eval: empty eval set");
  if (opts.samples_per_puzzle < 1) throw std::invalid_argument("run_eval: need k >= 1");

  SolveReport report;
  report.method = sampler.method;
  report.dataset = opts.dataset_name;
  report.seed = opts.seed;
  report.config = opts.config_echo;
  report.total = static_cast<long>(pairs.size());
  report.puzzles.resize(pairs.size());

  auto eval_one = [&](size_t idx) {
    const Board& puzzle = pairs.puzzle(idx);
    PuzzleRecord rec;
    rec.puzzle_hash = board_hash(puzzle);
    rec.violations = -1;
    const uint64_t puzzle_stream = fnv1a64(format_board(puzzle));
    const auto started = std::chrono::steady_clock::now();
    for (int c = 0; c < opts.samples_per_puzzle; ++c) {
      Rng rng = derive_rng(opts.seed ^ puzzle_stream, static_cast<uint64_t>(c));
      const Board candidate = sampler.sample(puzzle, rng);
      const int violations = candidate.complete() ? count_violations(candidate)
                                                  : static_cast<int>(3 * puzzle.side());
      if (rec.violations < 0 || violations < rec.violations) rec.violations = violations;
      if (candidate_solves(candidate, puzzle)) {
        rec.solved = true;
        rec.violations = 0;
        break;
      }
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    report.puzzles[idx] = std::move(rec);
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (size_t i = 0; i < pairs.size(); ++i) eval_one(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> cursor{0};
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (size_t i = cursor.fetch_add(1); i < pairs.size(); i = cursor.fetch_add(1)) {
          eval_one(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  report.solved = 0;
  for (const PuzzleRecord& rec : report.puzzles) report.solved += rec.solved;
  return report;
}

}  // namespace ddcsp
