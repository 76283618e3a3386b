#pragma once

// Pseudo-tree scoring and top-k selection under the Token, Conf, GRs and GRsConf criteria.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "selftrain/distribution.hpp"
#include "selftrain/error.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/log.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

enum class Criterion { kToken, kConf, kGrs, kGrsConf };

inline std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::kToken: return "Token";
    case Criterion::kConf: return "Conf";
    case Criterion::kGrs: return "GRs";
    case Criterion::kGrsConf: return "GRsConf";
  }
  return "?";
}

// Case-insensitive: token, conf, grs, grsconf.
inline Criterion parse_criterion(std::string_view name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "token") return Criterion::kToken;
  if (lower == "conf") return Criterion::kConf;
  if (lower == "grs") return Criterion::kGrs;
  if (lower == "grsconf") return Criterion::kGrsConf;
  throw ConfigError("unknown selection criterion '" + std::string(name) + "' (expected Token, Conf, GRs or GRsConf)");
}

struct SelectionConfig {
  Criterion criterion = Criterion::kGrsConf;
  std::size_t top_k = 2000;
  double grsconf_pool_factor = 2.0;
};

// A parsed candidate sentence with its selection scores.
struct PseudoInstance {
  std::size_t id = 0;
  std::vector<std::string> sentence;
  ConstTree tree;
  double confidence = 0.0;
  double token_distance = 0.0;  // vs. the current treebank
  double grs_distance = 0.0;
  // Same distances against the original source treebank; reported only.
  double token_distance_source = 0.0;
  double grs_distance_source = 0.0;
};

// Fills both distances of `inst` against the given treebank distributions.
inline void score_against(PseudoInstance& inst, const TokenDistribution& tokens, const RuleDistribution& rules) {
  inst.token_distance = distance_to_source(token_distribution_of(inst.sentence), tokens);
  inst.grs_distance = distance_to_source(rule_distribution_of(inst.tree), rules);
}

namespace detail {

template <typename Key>
std::vector<std::size_t> stable_order(std::size_t n, Key key) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return idx;
}

}  // namespace detail

// Indices of the selected candidates, best first. Ties keep input order.
inline std::vector<std::size_t> select_indices(const std::vector<PseudoInstance>& cands, const SelectionConfig& cfg) {
  if (cfg.top_k == 0) throw ConfigError("top_k must be positive");
  const std::size_t n = cands.size();
  const std::size_t k = std::min(cfg.top_k, n);
  if (cfg.top_k > n)
    log_warning("stage=select top_k=", cfg.top_k, " exceeds pool of ", n, "; selecting all candidates");
  std::vector<std::size_t> order;
  switch (cfg.criterion) {
    case Criterion::kToken:
      order = detail::stable_order(n, [&](std::size_t i) { return cands[i].token_distance; });
      break;
    case Criterion::kConf:
      order = detail::stable_order(n, [&](std::size_t i) { return -cands[i].confidence; });
      break;
    case Criterion::kGrs:
      order = detail::stable_order(n, [&](std::size_t i) { return cands[i].grs_distance; });
      break;
    case Criterion::kGrsConf: {
      if (!(cfg.grsconf_pool_factor >= 1.0)) throw ConfigError("grsconf_pool_factor must be >= 1");
      auto by_grs = detail::stable_order(n, [&](std::size_t i) { return cands[i].grs_distance; });
      const auto pool = std::min<std::size_t>(
          n, static_cast<std::size_t>(std::ceil(cfg.grsconf_pool_factor * static_cast<double>(cfg.top_k))));
      std::vector<std::size_t> pre(by_grs.begin(), by_grs.begin() + static_cast<std::ptrdiff_t>(pool));
      std::sort(pre.begin(), pre.end());  // back to input order so ties resolve by position
      std::stable_sort(pre.begin(), pre.end(),
                       [&](std::size_t a, std::size_t b) { return cands[a].confidence > cands[b].confidence; });
      order = std::move(pre);
      break;
    }
  }
  order.resize(std::min(k, order.size()));
  return order;
}

struct SelectionResult {
  std::vector<PseudoInstance> selected;  // rank order
  std::vector<PseudoInstance> rejected;  // input order
};

inline SelectionResult rank_and_select(const std::vector<PseudoInstance>& cands, const SelectionConfig& cfg) {
  if (cands.empty()) throw ValidationError("rank_and_select: empty candidate set");
  const auto chosen = select_indices(cands, cfg);
  std::vector<bool> taken(cands.size(), false);
  SelectionResult out;
  for (auto i : chosen) {
    taken[i] = true;
    out.selected.push_back(cands[i]);
  }
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (!taken[i]) out.rejected.push_back(cands[i]);
  return out;
}

// One JSON-lines record per candidate.
inline nlohmann::json selection_record(const PseudoInstance& inst, Criterion criterion, int iteration, bool selected) {
  return {{"id", inst.id},
          {"iteration", iteration},
          {"criterion", criterion_name(criterion)},
          {"confidence", inst.confidence},
          {"token_distance", inst.token_distance},
          {"grs_distance", inst.grs_distance},
          {"token_distance_source", inst.token_distance_source},
          {"grs_distance_source", inst.grs_distance_source},
          {"selected", selected}};
}

inline std::string write_selection_report(const SelectionResult& res, Criterion criterion, int iteration) {
  std::vector<std::pair<std::size_t, nlohmann::json>> rows;
  for (const auto& s : res.selected) rows.emplace_back(s.id, selection_record(s, criterion, iteration, true));
  for (const auto& s : res.rejected) rows.emplace_back(s.id, selection_record(s, criterion, iteration, false));
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [id, j] : rows) {
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace selftrain
