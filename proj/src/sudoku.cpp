#include "ddcsp/sudoku.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>

namespace ddcsp {

GroupTable::GroupTable(int n) : order(n) {
  const int N = n * n;
  groups.assign(static_cast<size_t>(3 * N), {});
  for (int g = 0; g < 3 * N; ++g) groups[static_cast<size_t>(g)].reserve(static_cast<size_t>(N));
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) {
      const int i = r * N + c;
      groups[static_cast<size_t>(r)].push_back(i);
      groups[static_cast<size_t>(N + c)].push_back(i);
      groups[static_cast<size_t>(2 * N + (r / n) * n + c / n)].push_back(i);
    }
  }
}

const GroupTable& group_table(int order) {
  static std::map<int, GroupTable> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, GroupTable(order)).first;
  return it->second;
}

int count_violations(const Board& board) {
  const GroupTable& gt = group_table(board.order);
  const int N = board.side();
  int violated = 0;
  std::vector<int> seen(static_cast<size_t>(N + 1));
  int stamp = 0;
  for (const auto& group : gt.groups) {
    ++stamp;
    bool dup = false;
    for (int i : group) {
      const uint8_t v = board.cell[static_cast<size_t>(i)];
      if (v == kEmpty) continue;
      if (seen[v] == stamp) {
        dup = true;
        break;
      }
      seen[v] = stamp;
    }
    violated += dup;
  }
  return violated;
}

bool is_valid_solution(const Board& board) {
  return board.complete() && count_violations(board) == 0;
}

namespace {

// Bitmask backtracking enumerator, most-constrained-cell-first.
class Enumerator {
 public:
  Enumerator(const Board& board, long limit) : N_(board.side()), limit_(limit), work_(board) {
    const GroupTable& gt = group_table(board.order);
    row_.assign(static_cast<size_t>(N_), 0u);
    col_.assign(static_cast<size_t>(N_), 0u);
    blk_.assign(static_cast<size_t>(N_), 0u);
    for (int i = 0; i < board.num_cells(); ++i) {
      const uint8_t v = board.cell[static_cast<size_t>(i)];
      if (v == kEmpty) {
        empties_.push_back(i);
        continue;
      }
      const uint32_t bit = 1u << (v - 1);
      uint32_t& r = row_[static_cast<size_t>(gt.row_group(i))];
      uint32_t& c = col_[static_cast<size_t>(gt.col_group(i) - N_)];
      uint32_t& b = blk_[static_cast<size_t>(gt.block_group(i) - 2 * N_)];
      if ((r & bit) || (c & bit) || (b & bit)) contradictory_ = true;
      r |= bit;
      c |= bit;
      b |= bit;
    }
  }

  std::vector<Board> run() {
    if (!contradictory_) search();
    std::sort(found_.begin(), found_.end(),
              [](const Board& a, const Board& b) { return a.cell < b.cell; });
    return std::move(found_);
  }

 private:
  uint32_t candidates(int i) const {
    const GroupTable& gt = group_table(work_.order);
    const uint32_t used = row_[static_cast<size_t>(gt.row_group(i))] |
                          col_[static_cast<size_t>(gt.col_group(i) - N_)] |
                          blk_[static_cast<size_t>(gt.block_group(i) - 2 * N_)];
    return ~used & ((1u << N_) - 1u);
  }

  void search() {
    if (static_cast<long>(found_.size()) >= limit_) return;
    if (empties_.empty()) {
      found_.push_back(work_);
      return;
    }
    size_t best = 0;
    int best_count = N_ + 1;
    uint32_t best_mask = 0;
    for (size_t k = 0; k < empties_.size(); ++k) {
      const uint32_t mask = candidates(empties_[k]);
      const int cnt = __builtin_popcount(mask);
      if (cnt == 0) return;  // dead end
      if (cnt < best_count) {
        best_count = cnt;
        best_mask = mask;
        best = k;
        if (cnt == 1) break;
      }
    }
    const int i = empties_[best];
    empties_.erase(empties_.begin() + static_cast<long>(best));
    const GroupTable& gt = group_table(work_.order);
    uint32_t& r = row_[static_cast<size_t>(gt.row_group(i))];
    uint32_t& c = col_[static_cast<size_t>(gt.col_group(i) - N_)];
    uint32_t& b = blk_[static_cast<size_t>(gt.block_group(i) - 2 * N_)];
    for (uint32_t mask = best_mask; mask != 0; mask &= mask - 1) {
      if (static_cast<long>(found_.size()) >= limit_) break;
      const uint32_t bit = mask & ~(mask - 1);
      work_.cell[static_cast<size_t>(i)] = static_cast<uint8_t>(__builtin_ctz(bit) + 1);
      r |= bit;
      c |= bit;
      b |= bit;
      search();
      r &= ~bit;
      c &= ~bit;
      b &= ~bit;
    }
    work_.cell[static_cast<size_t>(i)] = kEmpty;
    empties_.insert(empties_.begin() + static_cast<long>(best), i);
  }

  int N_;
  long limit_;
  Board work_;
  bool contradictory_ = false;
  std::vector<int> empties_;
  std::vector<uint32_t> row_, col_, blk_;
  std::vector<Board> found_;
};

}  // namespace

std::vector<Board> enumerate_solutions(const Board& board, long limit) {
  if (limit <= 0) return {};
  return Enumerator(board, limit).run();
}

Board random_solution(int order, Rng& rng) {
  const int N = order * order;
  Board board(order);
  const GroupTable& gt = group_table(order);
  std::vector<uint32_t> row(static_cast<size_t>(N), 0u), col(row), blk(row);
  std::vector<std::vector<uint8_t>> digit_orders(static_cast<size_t>(board.num_cells()));

  // Shuffled digit preference per cell, fixed up front so backtracking stays
  // deterministic for a given rng state.
  for (auto& d : digit_orders) {
    d.resize(static_cast<size_t>(N));
    std::iota(d.begin(), d.end(), static_cast<uint8_t>(1));
    rng.shuffle(d);
  }

  std::vector<int> cells(static_cast<size_t>(board.num_cells()));
  std::iota(cells.begin(), cells.end(), 0);

  std::function<bool(size_t)> fill = [&](size_t pos) -> bool {
    if (pos == cells.size()) return true;
    const int i = cells[pos];
    uint32_t& r = row[static_cast<size_t>(gt.row_group(i))];
    uint32_t& c = col[static_cast<size_t>(gt.col_group(i) - N)];
    uint32_t& b = blk[static_cast<size_t>(gt.block_group(i) - 2 * N)];
    for (uint8_t d : digit_orders[static_cast<size_t>(i)]) {
      const uint32_t bit = 1u << (d - 1);
      if ((r | c | b) & bit) continue;
      board.cell[static_cast<size_t>(i)] = d;
      r |= bit;
      c |= bit;
      b |= bit;
      if (fill(pos + 1)) return true;
      r &= ~bit;
      c &= ~bit;
      b &= ~bit;
    }
    board.cell[static_cast<size_t>(i)] = kEmpty;
    return false;
  };
  fill(0);
  return board;
}

std::pair<Board, Board> generate_puzzle(Rng& rng, int order, int givens, bool unique,
                                        int max_restarts) {
  const int total = order * order * order * order;
  if (givens < 0 || givens > total) {
    throw PuzzleGenError("givens out of range [0, " + std::to_string(total) + "]");
  }
  for (int attempt = 0; attempt < max_restarts; ++attempt) {
    Board solution = random_solution(order, rng);
    Board puzzle = solution;
    if (givens == total) return {puzzle, solution};

    std::vector<int> dig_order(static_cast<size_t>(total));
    std::iota(dig_order.begin(), dig_order.end(), 0);
    rng.shuffle(dig_order);

    int remaining = total;
    for (int i : dig_order) {
      if (remaining == givens) break;
      const uint8_t backup = puzzle.cell[static_cast<size_t>(i)];
      puzzle.cell[static_cast<size_t>(i)] = kEmpty;
      if (unique && enumerate_solutions(puzzle, 2).size() != 1) {
        puzzle.cell[static_cast<size_t>(i)] = backup;
        continue;
      }
      --remaining;
    }
    if (remaining == givens) return {puzzle, solution};
  }
  throw PuzzleGenError("could not reach " + std::to_string(givens) +
                       " givens with a unique solution after " + std::to_string(max_restarts) +
                       " restarts");
}

Board parse_board(const std::string& line) {
  int order;
  switch (line.size()) {
    case 16: order = 2; break;
    case 81: order = 3; break;
    default:
      throw ParseError("board line must be 16 or 81 characters, got " +
                       std::to_string(line.size()));
  }
  Board board(order);
  const int N = board.side();
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (ch < '0' || ch > '0' + N) {
      throw ParseError("illegal character '" + std::string(1, ch) + "' at index " +
                       std::to_string(i));
    }
    board.cell[i] = static_cast<uint8_t>(ch - '0');
  }
  return board;
}

std::string format_board(const Board& board) {
  std::string line(static_cast<size_t>(board.num_cells()), '0');
  for (size_t i = 0; i < line.size(); ++i) {
    line[i] = static_cast<char>('0' + board.cell[i]);
  }
  return line;
}

Dataset load_dataset(const std::string& path, DatasetKind kind) {
  std::ifstream in(path);
  if (!in) throw DatasetError(path + ": cannot open");
  Dataset ds;
  ds.kind = kind;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Board board;
    try {
      board = parse_board(line);
    } catch (const ParseError& e) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const bool is_solution_line =
        kind == DatasetKind::kSolutions || ds.boards.size() % 2 == 1;
    if (is_solution_line) {
      if (!board.complete()) {
        throw DatasetError(path + ":" + std::to_string(lineno) + ": solution is incomplete");
      }
      if (count_violations(board) != 0) {
        throw DatasetError(path + ":" + std::to_string(lineno) +
                           ": solution violates constraints");
      }
      if (kind == DatasetKind::kPairs) {
        const Board& puzzle = ds.boards.back();
        if (puzzle.order != board.order) {
          throw DatasetError(path + ":" + std::to_string(lineno) + ": order mismatch in pair");
        }
        for (int i = 0; i < puzzle.num_cells(); ++i) {
          const uint8_t p = puzzle.cell[static_cast<size_t>(i)];
          if (p != kEmpty && p != board.cell[static_cast<size_t>(i)]) {
            throw DatasetError(path + ":" + std::to_string(lineno) +
                               ": solution disagrees with puzzle givens");
          }
        }
      }
    }
    ds.boards.push_back(std::move(board));
  }
  if (kind == DatasetKind::kPairs && ds.boards.size() % 2 != 0) {
    throw DatasetError(path + ": pair file has an odd number of lines");
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError(path + ": cannot open for writing");
  for (const Board& b : dataset.boards) out << format_board(b) << '\n';
}

}  // namespace ddcsp
