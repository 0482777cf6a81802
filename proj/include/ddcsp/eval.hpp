#pragma once

#include <functional>
#include <string>

#include "ddcsp/report.hpp"
#include "ddcsp/rng.hpp"
#include "ddcsp/sudoku.hpp"

namespace ddcsp {

// A candidate-producing sampler under evaluation.
struct SamplerSpec {
  std::string method;
  std::function<Board(const Board& puzzle, Rng& rng)> sample;
};

// Exact backtracking solver as a sampler; the solve-rate ceiling.
SamplerSpec make_oracle_sampler();

struct EvalOptions {
  int samples_per_puzzle = 1;
  int threads = 1;
  uint64_t seed = 0;
  std::string dataset_name;
  std::vector<std::pair<std::string, std::string>> config_echo;
};

// Runs the sampler on every puzzle of a pairs dataset; a puzzle counts as
// solved when any of its candidates is complete, has zero violations, and
// agrees with the givens (an independent recheck, never the sampler's word).
// Per-puzzle randomness derives from (seed, puzzle content, candidate index),
// so results are order-invariant and safe to compute in parallel.
SolveReport run_eval(const SamplerSpec& sampler, const Dataset& pairs, const EvalOptions& opts);

}  // namespace ddcsp
