#pragma once

// Per-iteration tables (CSV and aligned text) built from a run's metrics.jsonl.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "selftrain/error.hpp"
#include "selftrain/orchestrator.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

inline std::vector<IterationMetrics> load_run_metrics(const std::string& run_dir) {
  namespace fs = std::filesystem;
  const fs::path file = fs::path(run_dir) / "metrics.jsonl";
  if (!fs::exists(file))
    throw IoError("run directory '" + run_dir +
                  "' has no metrics.jsonl (expected metrics.jsonl, summary.json, model.json, pseudo_treebank.mrg)");
  std::istringstream in(read_text_file(file.string()));
  std::vector<IterationMetrics> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    try {
      out.push_back(IterationMetrics::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(file.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw ValidationError(file.string() + " contains no iterations");
  return out;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v, int digits = 6) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

inline std::string trend(const std::optional<double>& prev, const std::optional<double>& cur) {
  if (!prev || !cur) return "";
  if (*cur < *prev) return "down";
  if (*cur > *prev) return "up";
  return "flat";
}

}  // namespace detail

struct ReportTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline ReportTable build_report(const std::vector<IterationMetrics>& metrics) {
  using detail::fmt_opt;
  ReportTable t;
  t.header = {"iteration",        "pool_size",           "parsed",
              "no_parse",         "selected",            "treebank_size",
              "mean_confidence",  "mean_token_distance", "mean_grs_distance",
              "js_to_source",     "js_to_target",        "js_to_target_trend",
              "f1"};
  std::optional<double> prev_target;
  for (const auto& m : metrics) {
    t.rows.push_back({std::to_string(m.iteration), std::to_string(m.pool_size), std::to_string(m.parsed),
                      std::to_string(m.no_parse), std::to_string(m.selected), std::to_string(m.treebank_size),
                      fmt_opt(m.mean_confidence), fmt_opt(m.mean_token_distance), fmt_opt(m.mean_grs_distance),
                      fmt_opt(m.js_to_source), fmt_opt(m.js_to_target), detail::trend(prev_target, m.js_to_target),
                      fmt_opt(m.f1(), 2)});
    prev_target = m.js_to_target;
  }
  return t;
}

inline std::string to_csv(const ReportTable& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

inline std::string to_text(const ReportTable& t) {
  std::vector<std::size_t> width(t.header.size());
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    width[c] = t.header[c].size();
    for (const auto& r : t.rows) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += std::string(width[c] - cells[c].size(), ' ');
      out += cells[c];
    }
    out += '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

}  // namespace selftrain
