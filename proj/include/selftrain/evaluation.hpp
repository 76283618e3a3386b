#pragma once

// Labeled-bracket precision/recall/F1 with evalb conventions: pre-terminals and
// ROOT are not brackets, duplicates match as a multiset, counts are micro-averaged.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "selftrain/error.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

struct BracketScore {
  std::size_t matched = 0;
  std::size_t gold_total = 0;
  std::size_t pred_total = 0;

  double precision() const { return pred_total == 0 ? 0.0 : 100.0 * static_cast<double>(matched) / static_cast<double>(pred_total); }
  double recall() const { return gold_total == 0 ? 0.0 : 100.0 * static_cast<double>(matched) / static_cast<double>(gold_total); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  BracketScore& operator+=(const BracketScore& o) {
    matched += o.matched;
    gold_total += o.gold_total;
    pred_total += o.pred_total;
    return *this;
  }

  nlohmann::json to_json() const {
    return {{"matched", matched}, {"gold", gold_total}, {"pred", pred_total},
            {"P", precision()},   {"R", recall()},      {"F1", f1()}};
  }

  std::string summary() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "matched=" << matched << " gold=" << gold_total << " pred=" << pred_total << " P=" << precision()
       << " R=" << recall() << " F1=" << f1();
    return os.str();
  }
};

using Bracket = std::tuple<std::string, std::size_t, std::size_t>;

inline std::map<Bracket, std::size_t> labeled_brackets(const ConstTree& tree) {
  std::map<Bracket, std::size_t> out;
  visit_preorder(tree.root(), [&](const TreeNode& n) {
    if (n.is_preterminal() || n.label == kRootLabel) return;
    ++out[{n.label, n.start, n.end}];
  });
  return out;
}

// Scores one aligned pair. A missing prediction (no parse) scores zero matched
// and zero predicted brackets against the full gold count.
inline BracketScore score_pair(const ConstTree& gold, const ConstTree* pred) {
  BracketScore s;
  const auto g = labeled_brackets(gold);
  for (const auto& [b, n] : g) s.gold_total += n;
  if (!pred) return s;
  const auto p = labeled_brackets(*pred);
  for (const auto& [b, n] : p) {
    s.pred_total += n;
    if (auto it = g.find(b); it != g.end()) s.matched += std::min(n, it->second);
  }
  return s;
}

inline BracketScore score_trees(const std::vector<ConstTree>& gold, const std::vector<std::optional<ConstTree>>& pred) {
  if (gold.size() != pred.size())
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " trees, prediction has " +
                             std::to_string(pred.size()),
                         std::min(gold.size(), pred.size()));
  BracketScore total;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] && pred[i]->tokens() != gold[i].tokens()) throw AlignmentError("yields differ", i);
    total += score_pair(gold[i], pred[i] ? &*pred[i] : nullptr);
  }
  return total;
}

inline BracketScore score_trees(const std::vector<ConstTree>& gold, const std::vector<ConstTree>& pred) {
  std::vector<std::optional<ConstTree>> wrapped(pred.begin(), pred.end());
  return score_trees(gold, wrapped);
}

}  // namespace selftrain
