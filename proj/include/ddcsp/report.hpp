#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddcsp/sudoku.hpp"

namespace ddcsp {

uint64_t fnv1a64(const std::string& s);
std::string board_hash(const Board& board);

struct PuzzleRecord {
  std::string puzzle_hash;
  bool solved = false;
  int violations = 0;   // of the best candidate produced
  double wall_ms = 0.0;  // in-memory diagnostics; never serialized

  bool operator==(const PuzzleRecord& o) const {
    return puzzle_hash == o.puzzle_hash && solved == o.solved && violations == o.violations;
  }
};

// Solve-rate benchmark result. Wall-clock fields are kept out of the emitted
// files so identical runs produce byte-identical reports.
struct SolveReport {
  std::string method;
  std::string dataset;
  long total = 0;
  long solved = 0;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;  // echoed snapshot
  std::vector<PuzzleRecord> puzzles;

  double solve_rate() const {
    return total > 0 ? static_cast<double>(solved) / static_cast<double>(total) : 0.0;
  }
  bool operator==(const SolveReport& o) const {
    return method == o.method && dataset == o.dataset && total == o.total && solved == o.solved &&
           seed == o.seed && config == o.config && puzzles == o.puzzles;
  }
};

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit_report_csv(const SolveReport& report, const std::string& path);
void emit_report_json(const SolveReport& report, const std::string& path);
SolveReport load_report_json(const std::string& path);

// Reads the summary row of one of our CSV reports (per-puzzle rows ignored).
SolveReport load_report_summary_csv(const std::string& path);
void merge_reports_csv(const std::vector<std::string>& inputs, const std::string& out_path);

// One-line human summary, e.g. "ddcsp: solved 852/1000 (85.2%)".
std::string render_summary(const SolveReport& report);

}  // namespace ddcsp
