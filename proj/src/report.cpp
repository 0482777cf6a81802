#include "ddcsp/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ddcsp {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string board_hash(const Board& board) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(format_board(board))));
  return buf;
}

namespace {

std::string fmt_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", rate);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

constexpr const char* kSummaryHeader = "method,dataset,total,solved,solve_rate,seed";

}  // namespace

void emit_report_csv(const SolveReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ReportError(path + ": cannot open for writing");
  out << kSummaryHeader << '\n';
  out << report.method << ',' << report.dataset << ',' << report.total << ',' << report.solved
      << ',' << fmt_rate(report.solve_rate()) << ',' << report.seed << '\n';
  for (const auto& [k, v] : report.config) out << "# config " << k << '=' << v << '\n';
  out << "puzzle_hash,solved,violations\n";
  for (const PuzzleRecord& rec : report.puzzles) {
    out << rec.puzzle_hash << ',' << (rec.solved ? 1 : 0) << ',' << rec.violations << '\n';
  }
}

void emit_report_json(const SolveReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["dataset"] = report.dataset;
  j["total"] = report.total;
  j["solved"] = report.solved;
  j["solve_rate"] = report.solve_rate();
  j["seed"] = report.seed;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["config"] = std::move(cfg);
  nlohmann::ordered_json puzzles = nlohmann::ordered_json::array();
  for (const PuzzleRecord& rec : report.puzzles) {
    puzzles.push_back({{"puzzle_hash", rec.puzzle_hash},
                       {"solved", rec.solved},
                       {"violations", rec.violations}});
  }
  j["puzzles"] = std::move(puzzles);
  std::ofstream out(path);
  if (!out) throw ReportError(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

SolveReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError(path + ": cannot open");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(path + ": " + e.what());
  }
  SolveReport report;
  report.method = j.at("method").get<std::string>();
  report.dataset = j.at("dataset").get<std::string>();
  report.total = j.at("total").get<long>();
  report.solved = j.at("solved").get<long>();
  report.seed = j.at("seed").get<uint64_t>();
  for (const auto& [k, v] : j.at("config").items()) {
    report.config.emplace_back(k, v.get<std::string>());
  }
  for (const auto& rec : j.at("puzzles")) {
    PuzzleRecord r;
    r.puzzle_hash = rec.at("puzzle_hash").get<std::string>();
    r.solved = rec.at("solved").get<bool>();
    r.violations = rec.at("violations").get<int>();
    report.puzzles.push_back(std::move(r));
  }
  return report;
}

SolveReport load_report_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError(path + ": cannot open");
  std::string header, row;
  if (!std::getline(in, header) || header != kSummaryHeader) {
    throw ReportError(path + ": missing summary header");
  }
  if (!std::getline(in, row)) throw ReportError(path + ": missing summary row");
  const auto fields = split_csv_line(row);
  if (fields.size() != 6) throw ReportError(path + ": malformed summary row");
  SolveReport report;
  report.method = fields[0];
  report.dataset = fields[1];
  try {
    report.total = std::stol(fields[2]);
    report.solved = std::stol(fields[3]);
    report.seed = std::stoull(fields[5]);
  } catch (...) {
    throw ReportError(path + ": malformed summary row");
  }
  return report;
}

void merge_reports_csv(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out) throw ReportError(out_path + ": cannot open for writing");
  out << kSummaryHeader << '\n';
  for (const std::string& path : inputs) {
    const SolveReport r = load_report_summary_csv(path);
    out << r.method << ',' << r.dataset << ',' << r.total << ',' << r.solved << ','
        << fmt_rate(r.solve_rate()) << ',' << r.seed << '\n';
  }
}

std::string render_summary(const SolveReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: solved %ld/%ld (%.1f%%)", report.method.c_str(),
                report.solved, report.total, 100.0 * report.solve_rate());
  return buf;
}

}  // namespace ddcsp
