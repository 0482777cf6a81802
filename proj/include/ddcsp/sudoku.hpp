#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddcsp/rng.hpp"

namespace ddcsp {

constexpr uint8_t kEmpty = 0;

// Generalized Sudoku board of order n (side N = n^2), flattened row-wise.
// Cell values: 0 = empty, 1..N = digits.
struct Board {
  int order = 3;
  std::vector<uint8_t> cell;

  Board() = default;
  explicit Board(int n) : order(n), cell(static_cast<size_t>(n * n * n * n), kEmpty) {}

  int side() const { return order * order; }
  int num_cells() const { return side() * side(); }

  uint8_t at(int r, int c) const { return cell[static_cast<size_t>(r * side() + c)]; }
  void set(int r, int c, uint8_t v) { cell[static_cast<size_t>(r * side() + c)] = v; }

  bool complete() const {
    for (uint8_t v : cell)
      if (v == kEmpty) return false;
    return true;
  }
  int given_count() const {
    int k = 0;
    for (uint8_t v : cell) k += (v != kEmpty);
    return k;
  }
  bool operator==(const Board& o) const { return order == o.order && cell == o.cell; }
};

// The 3N houses of a board: N rows, N columns, N blocks, each listing the N
// cell indices it contains. Every cell appears in exactly three groups.
struct GroupTable {
  int order = 3;
  std::vector<std::vector<int>> groups;

  explicit GroupTable(int n);
  int side() const { return order * order; }
  // Indices into `groups` of the row/column/block containing cell i.
  int row_group(int i) const { return i / side(); }
  int col_group(int i) const { return side() + i % side(); }
  int block_group(int i) const {
    const int n = order, N = side();
    return 2 * N + (i / N / n) * n + (i % N) / n;
  }
};

const GroupTable& group_table(int order);

// Number of groups (out of 3N) containing at least one duplicated digit.
// Empty cells never count as duplicates.
int count_violations(const Board& board);

// True iff `board` is complete with zero violations.
bool is_valid_solution(const Board& board);

// All zero-violation completions agreeing with the non-empty cells, at most
// `limit`, sorted lexicographically by cell values. Contradictory boards
// yield an empty list.
std::vector<Board> enumerate_solutions(const Board& board, long limit);

// Uniformly random-ish complete valid solution (randomized backtracking).
Board random_solution(int order, Rng& rng);

struct PuzzleGenError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Digs cells from a random complete solution until exactly `givens` remain,
// re-checking uniqueness after each removal when `unique` is set. Throws
// PuzzleGenError after `max_restarts` failed attempts.
std::pair<Board, Board> generate_puzzle(Rng& rng, int order, int givens, bool unique,
                                        int max_restarts = 64);

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One board per text line: '0' for empty, '1'..'9' digits; line length N^2
// decides the order (16 -> 4x4, 81 -> 9x9).
Board parse_board(const std::string& line);
std::string format_board(const Board& board);

enum class DatasetKind { kSolutions, kPairs };

struct Dataset {
  DatasetKind kind = DatasetKind::kSolutions;
  std::vector<Board> boards;  // pairs: puzzle at 2i, solution at 2i+1

  size_t size() const {
    return kind == DatasetKind::kPairs ? boards.size() / 2 : boards.size();
  }
  const Board& puzzle(size_t i) const { return boards[2 * i]; }
  const Board& solution(size_t i) const {
    return kind == DatasetKind::kPairs ? boards[2 * i + 1] : boards[i];
  }
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Newline-separated board lines; pair files alternate puzzle, solution.
// Solutions are validated (complete, zero violations) on load; errors carry
// the path and 1-based line number.
Dataset load_dataset(const std::string& path, DatasetKind kind);
void save_dataset(const Dataset& dataset, const std::string& path);

}  // namespace ddcsp
