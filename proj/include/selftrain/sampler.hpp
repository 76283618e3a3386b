#pragma once

// Weighted context-free grammars for synthetic treebanks and the offline mock backend.
//
// Text format, one production per line, '#' comments:
//
//   start ROOT
//   1.0 ROOT -> S
//   3   NP -> DT NN
//   2   NN -> "dog"
//
// The leading weight is optional (default 1). Quoted symbols are terminals and
// must be the sole right-hand side symbol.

#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "selftrain/error.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

struct WeightedProduction {
  GrammarRule rule;
  double weight = 1.0;
};

class WeightedGrammar {
 public:
  WeightedGrammar() = default;
  explicit WeightedGrammar(std::string start) : start_(std::move(start)) {}

  static WeightedGrammar parse(std::string_view text) {
    WeightedGrammar g;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto fields = split_whitespace(line);
      if (fields.empty() || fields.front().front() == '#') continue;
      if (fields.front() == "start") {
        if (fields.size() != 2) throw ValidationError("grammar line " + std::to_string(lineno) + ": bad start line");
        g.start_ = fields[1];
        continue;
      }
      std::string_view rest = line;
      double weight = 1.0;
      std::size_t used = 0;
      try {
        weight = std::stod(fields.front(), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == fields.front().size()) {
        rest.remove_prefix(line.find(fields.front()) + fields.front().size());
      } else {
        weight = 1.0;
      }
      if (!(weight > 0.0)) throw ValidationError("grammar line " + std::to_string(lineno) + ": weight must be > 0");
      GrammarRule rule;
      try {
        rule = parse_rule(rest);
      } catch (const ValidationError& e) {
        throw ValidationError("grammar line " + std::to_string(lineno) + ": " + e.what());
      }
      g.add(std::move(rule), weight);
    }
    g.check();
    return g;
  }

  static WeightedGrammar load(const std::string& path) { return parse(read_text_file(path)); }

  void add(GrammarRule rule, double weight) {
    if (start_.empty()) start_ = rule.lhs;
    auto& prods = rules_[rule.lhs];
    for (auto& p : prods) {
      if (p.rule == rule) {
        p.weight += weight;
        return;
      }
    }
    prods.push_back({std::move(rule), weight});
  }

  // Every non-terminal right-hand symbol must have productions.
  void check() const {
    if (rules_.empty()) throw ValidationError("grammar has no productions");
    if (!rules_.count(start_)) throw ValidationError("start symbol '" + start_ + "' has no productions");
    for (const auto& [lhs, prods] : rules_)
      for (const auto& p : prods)
        if (!p.rule.is_lexical)
          for (const auto& s : p.rule.rhs)
            if (!rules_.count(s))
              throw ValidationError("symbol '" + s + "' in '" + to_string(p.rule) + "' has no productions");
  }

  const std::string& start() const { return start_; }
  const std::map<std::string, std::vector<WeightedProduction>>& productions() const { return rules_; }

  // Conditional probability of each production given its lhs.
  double probability(const GrammarRule& rule) const {
    auto it = rules_.find(rule.lhs);
    if (it == rules_.end()) return 0.0;
    double total = 0.0, mine = 0.0;
    for (const auto& p : it->second) {
      total += p.weight;
      if (p.rule == rule) mine = p.weight;
    }
    return mine / total;
  }

  // Per-lhs mixture: P(r|A) = w * this(r|A) + (1 - w) * other(r|A); a lhs known
  // to only one side keeps that side's distribution.
  WeightedGrammar blend(const WeightedGrammar& other, double w) const {
    WeightedGrammar out(start_);
    std::set<std::string> lhss;
    for (const auto& [l, p] : rules_) lhss.insert(l);
    for (const auto& [l, p] : other.rules_) lhss.insert(l);
    for (const auto& lhs : lhss) {
      const bool mine = rules_.count(lhs) != 0, theirs = other.rules_.count(lhs) != 0;
      const double wa = mine && theirs ? w : (mine ? 1.0 : 0.0);
      if (mine)
        for (const auto& p : rules_.at(lhs)) out.add(p.rule, wa * probability(p.rule));
      if (theirs)
        for (const auto& p : other.rules_.at(lhs)) out.add(p.rule, (1.0 - wa) * other.probability(p.rule));
    }
    // zero-weight entries can appear when w is 0 or 1
    for (auto& [lhs, prods] : out.rules_) std::erase_if(prods, [](const WeightedProduction& p) { return !(p.weight > 0.0); });
    out.check();
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "start " << start_ << '\n';
    for (const auto& [lhs, prods] : rules_)
      for (const auto& p : prods) os << p.weight << ' ' << to_string(p.rule) << '\n';
    return os.str();
  }

  // Top-down sample. Derivations deeper than max_depth are discarded and redrawn.
  template <RandomSource Rng>
  ConstTree sample_tree(Rng& rng, std::size_t max_depth = 40, std::size_t max_attempts = 1000) const {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      TreeNode root;
      if (expand(start_, rng, 0, max_depth, root)) return ConstTree(std::move(root));
    }
    throw ValidationError("grammar keeps exceeding the derivation depth limit; it may be supercritical");
  }

  template <RandomSource Rng>
  std::vector<std::string> sample_sentence(Rng& rng) const {
    return sample_tree(rng).tokens();
  }

 private:
  template <RandomSource Rng>
  const WeightedProduction& choose(const std::vector<WeightedProduction>& prods, Rng& rng) const {
    double total = 0.0;
    for (const auto& p : prods) total += p.weight;
    double u = rng.uniform() * total;
    for (const auto& p : prods) {
      if (u < p.weight) return p;
      u -= p.weight;
    }
    return prods.back();
  }

  template <RandomSource Rng>
  bool expand(const std::string& sym, Rng& rng, std::size_t depth, std::size_t max_depth, TreeNode& out) const {
    if (depth > max_depth) return false;
    const auto& p = choose(rules_.at(sym), rng);
    if (p.rule.is_lexical) {
      out = make_leaf(sym, p.rule.rhs.front());
      return true;
    }
    out = make_node(sym, {});
    out.children.resize(p.rule.rhs.size());
    for (std::size_t i = 0; i < p.rule.rhs.size(); ++i)
      if (!expand(p.rule.rhs[i], rng, depth + 1, max_depth, out.children[i])) return false;
    return true;
  }

  std::string start_;
  std::map<std::string, std::vector<WeightedProduction>> rules_;
};

}  // namespace selftrain
