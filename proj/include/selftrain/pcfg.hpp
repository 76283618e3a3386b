#pragma once

// Relative-frequency PCFG over binarized trees, with a signature-class model
// for tokens never seen in training.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "selftrain/binarize.hpp"
#include "selftrain/error.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

inline constexpr int kPcfgFormatVersion = 1;
inline constexpr int kSignatureLevels = 3;

// Signature of an unseen token. Level 0 is the most specific (shape + suffix),
// level 2 is the bare "UNK" class.
inline std::string word_signature(std::string_view word, int level) {
  std::string sig = "UNK";
  if (level >= 2) return sig;
  bool upper = false, lower = false, digit = false, dash = false;
  for (unsigned char c : word) {
    upper |= std::isupper(c) != 0;
    lower |= std::islower(c) != 0;
    digit |= std::isdigit(c) != 0;
    dash |= c == '-';
  }
  if (upper && !lower)
    sig += "-CAPS";
  else if (!word.empty() && std::isupper(static_cast<unsigned char>(word.front())))
    sig += "-INITC";
  else if (lower)
    sig += "-LC";
  if (digit) sig += "-NUM";
  if (dash) sig += "-DASH";
  if (level == 0 && word.size() > 3 && std::isalpha(static_cast<unsigned char>(word.back()))) {
    sig += "-s";
    for (auto c : word.substr(word.size() - 2)) sig += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return sig;
}

struct PcfgOptions {
  // Tokens with training count <= rare_threshold feed the unknown-word model
  // and may also take the tags of their signature class.
  int rare_threshold = 1;
  // Empty: inferred from the (shared) root label of the training trees.
  std::string start_symbol;
};

class Pcfg {
 public:
  using SymbolId = std::int32_t;

  struct BinaryRule {
    SymbolId lhs, left, right;
    double prob;
    double log_prob;
  };
  struct UnaryRule {
    SymbolId lhs, child;
    double prob;
    double log_prob;
  };
  struct LexicalEntry {
    SymbolId pos;
    double prob;
    double log_prob;
  };

  struct RuleSpec {
    GrammarRule rule;
    double prob;
  };
  struct UnknownSpec {
    int level;
    std::string signature;
    std::string pos;
    double prob;
  };

  Pcfg() = default;

  // Rules are over binarized symbols: two-symbol rhs are binary rules,
  // one-symbol non-lexical rhs are unary rules (child must be a pre-terminal).
  static Pcfg from_rules(std::string start_symbol, const std::vector<RuleSpec>& rules,
                         const std::vector<UnknownSpec>& unknown = {}, int rare_threshold = 1,
                         const std::vector<std::string>& rare_words = {}) {
    Pcfg g;
    g.start_symbol_ = std::move(start_symbol);
    g.rare_threshold_ = rare_threshold;
    g.rare_words_.insert(rare_words.begin(), rare_words.end());
    std::set<std::string> names;
    names.insert(g.start_symbol_);
    std::set<std::string> preterminals;
    for (const auto& spec : rules) {
      if (!(spec.prob > 0.0 && spec.prob <= 1.0))
        throw ValidationError("rule probability outside (0, 1]: " + to_string(spec.rule));
      names.insert(spec.rule.lhs);
      if (spec.rule.is_lexical) {
        preterminals.insert(spec.rule.lhs);
      } else {
        if (spec.rule.rhs.empty() || spec.rule.rhs.size() > 2)
          throw ValidationError("rule is not binarized: " + to_string(spec.rule));
        for (const auto& s : spec.rule.rhs) names.insert(s);
      }
    }
    for (const auto& u : unknown) {
      names.insert(u.pos);
      preterminals.insert(u.pos);
    }
    for (const auto& n : names) {
      g.ids_.emplace(n, static_cast<SymbolId>(g.names_.size()));
      g.names_.push_back(n);
    }
    for (const auto& spec : rules) {
      const auto& r = spec.rule;
      const SymbolId lhs = g.ids_.at(r.lhs);
      const double lp = std::log(spec.prob);
      if (r.is_lexical) {
        g.lexicon_[r.rhs.front()].push_back({lhs, spec.prob, lp});
      } else if (r.rhs.size() == 2) {
        g.binary_.push_back({lhs, g.ids_.at(r.rhs[0]), g.ids_.at(r.rhs[1]), spec.prob, lp});
      } else {
        if (!preterminals.count(r.rhs[0]))
          throw ValidationError("unary rule must rewrite to a pre-terminal: " + to_string(r));
        g.unary_.push_back({lhs, g.ids_.at(r.rhs[0]), spec.prob, lp});
      }
    }
    for (const auto& u : unknown) {
      if (u.level < 0 || u.level >= kSignatureLevels) throw ValidationError("bad signature level");
      if (!(u.prob > 0.0 && u.prob <= 1.0)) throw ValidationError("unknown-word probability outside (0, 1]");
      g.unknown_[u.level][u.signature].push_back({g.ids_.at(u.pos), u.prob, std::log(u.prob)});
    }
    g.finalize();
    return g;
  }

  const std::string& start_symbol() const { return start_symbol_; }
  int rare_threshold() const { return rare_threshold_; }
  std::size_t num_symbols() const { return names_.size(); }
  const std::string& symbol_name(SymbolId id) const { return names_.at(static_cast<std::size_t>(id)); }

  std::optional<SymbolId> symbol_id(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  // Sorted by (lhs, left, right) name; the index is the rule identity used for tie-breaking.
  const std::vector<BinaryRule>& binary_rules() const { return binary_; }
  const std::vector<UnaryRule>& unary_rules() const { return unary_; }
  const std::vector<std::uint32_t>& binary_rules_with_left(SymbolId left) const {
    return by_left_.at(static_cast<std::size_t>(left));
  }

  bool is_known_word(const std::string& word) const { return lexicon_.count(word) != 0; }

  // Pre-terminal scores for a token, sorted by tag. Frequent known words use
  // their observed lexical rules only. Unknown words use the signature model:
  // each tag is scored by the most specific signature level that saw it. Rare
  // known words get the better of the two per tag, so one mistagged
  // occurrence does not lock a word to the wrong tag.
  std::vector<LexicalEntry> lexical_entries(const std::string& word) const {
    auto known = lexicon_.find(word);
    if (known != lexicon_.end() && !rare_words_.count(word)) return known->second;
    std::vector<LexicalEntry> out = signature_entries(word);
    if (known == lexicon_.end()) return out;
    for (const auto& e : known->second) {
      auto at = std::find_if(out.begin(), out.end(), [&](const LexicalEntry& m) { return m.pos == e.pos; });
      if (at == out.end())
        out.push_back(e);
      else if (e.prob > at->prob)
        *at = e;
    }
    std::sort(out.begin(), out.end(), [](const LexicalEntry& a, const LexicalEntry& b) { return a.pos < b.pos; });
    return out;
  }

  const std::set<std::string>& rare_words() const { return rare_words_; }

  // True for symbols that may head a complete parse: base label equals the start symbol.
  bool is_start_candidate(SymbolId id) const { return start_ok_.at(static_cast<std::size_t>(id)); }

  // Log probability of one binarized, non-lexical rule; nullopt if unseen.
  std::optional<double> rule_log_prob(const std::string& lhs, const std::vector<std::string>& rhs) const {
    auto l = symbol_id(lhs);
    if (!l || rhs.empty() || rhs.size() > 2) return std::nullopt;
    std::vector<SymbolId> kids;
    for (const auto& s : rhs) {
      auto id = symbol_id(s);
      if (!id) return std::nullopt;
      kids.push_back(*id);
    }
    if (kids.size() == 2) {
      for (auto idx : by_left_[static_cast<std::size_t>(kids[0])]) {
        const auto& r = binary_[idx];
        if (r.lhs == *l && r.right == kids[1]) return r.log_prob;
      }
      return std::nullopt;
    }
    for (const auto& u : unary_)
      if (u.lhs == *l && u.child == kids[0]) return u.log_prob;
    return std::nullopt;
  }

  std::optional<double> lexical_log_prob(const std::string& pos, const std::string& word) const {
    auto p = symbol_id(pos);
    if (!p) return std::nullopt;
    for (const auto& e : lexical_entries(word))
      if (e.pos == *p) return e.log_prob;
    return std::nullopt;
  }

  // Largest |sum_rhs P(lhs -> rhs) - 1| over all left-hand sides.
  double max_normalization_error() const {
    std::vector<double> sums(names_.size(), 0.0);
    std::vector<bool> seen(names_.size(), false);
    for (const auto& r : binary_) sums[r.lhs] += r.prob, seen[r.lhs] = true;
    for (const auto& r : unary_) sums[r.lhs] += r.prob, seen[r.lhs] = true;
    for (const auto& [w, entries] : lexicon_)
      for (const auto& e : entries) sums[e.pos] += e.prob, seen[e.pos] = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < sums.size(); ++i)
      if (seen[i]) worst = std::max(worst, std::abs(sums[i] - 1.0));
    return worst;
  }

  // Every rule with its probability, in canonical order.
  std::vector<RuleSpec> rules() const {
    std::vector<RuleSpec> out;
    for (const auto& r : binary_)
      out.push_back({GrammarRule{names_[r.lhs], {names_[r.left], names_[r.right]}, false}, r.prob});
    for (const auto& r : unary_) out.push_back({GrammarRule{names_[r.lhs], {names_[r.child]}, false}, r.prob});
    for (const auto& [w, entries] : lexicon_)
      for (const auto& e : entries) out.push_back({GrammarRule{names_[e.pos], {w}, true}, e.prob});
    std::sort(out.begin(), out.end(), [](const RuleSpec& a, const RuleSpec& b) { return a.rule < b.rule; });
    return out;
  }

  std::vector<UnknownSpec> unknown_model() const {
    std::vector<UnknownSpec> out;
    for (int level = 0; level < kSignatureLevels; ++level)
      for (const auto& [sig, entries] : unknown_[level])
        for (const auto& e : entries) out.push_back({level, sig, names_[e.pos], e.prob});
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = kPcfgFormatVersion;
    j["start_symbol"] = start_symbol_;
    j["rare_threshold"] = rare_threshold_;
    auto& rules_json = j["rules"] = nlohmann::json::array();
    for (const auto& spec : rules())
      rules_json.push_back({{"rule", to_string(spec.rule)}, {"p", spec.prob}});
    auto& unk = j["unknown"] = nlohmann::json::array();
    for (const auto& u : unknown_model())
      unk.push_back({{"level", u.level}, {"signature", u.signature}, {"pos", u.pos}, {"p", u.prob}});
    j["rare_words"] = rare_words_;
    return j;
  }

  static Pcfg from_json(const nlohmann::json& j) {
    try {
      if (j.at("format_version").get<int>() != kPcfgFormatVersion)
        throw ValidationError("unsupported model format_version " + j.at("format_version").dump());
      std::vector<RuleSpec> rules;
      for (const auto& r : j.at("rules")) rules.push_back({parse_rule(r.at("rule").get<std::string>()), r.at("p")});
      std::vector<UnknownSpec> unknown;
      for (const auto& u : j.at("unknown"))
        unknown.push_back({u.at("level"), u.at("signature"), u.at("pos"), u.at("p")});
      std::vector<std::string> rare;
      if (j.contains("rare_words")) rare = j.at("rare_words").get<std::vector<std::string>>();
      return from_rules(j.at("start_symbol"), rules, unknown, j.at("rare_threshold"), rare);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("malformed model file: ") + e.what());
    }
  }

 private:
  std::vector<LexicalEntry> signature_entries(const std::string& word) const {
    std::vector<LexicalEntry> out;
    for (int level = 0; level < kSignatureLevels; ++level) {
      auto it = unknown_[level].find(word_signature(word, level));
      if (it == unknown_[level].end()) continue;
      for (const auto& e : it->second)
        if (std::none_of(out.begin(), out.end(), [&](const LexicalEntry& m) { return m.pos == e.pos; }))
          out.push_back(e);
    }
    std::sort(out.begin(), out.end(), [](const LexicalEntry& a, const LexicalEntry& b) { return a.pos < b.pos; });
    return out;
  }

  void finalize() {
    // ids are assigned in name order, so id order is name order.
    std::sort(binary_.begin(), binary_.end(), [](const BinaryRule& a, const BinaryRule& b) {
      return std::tie(a.lhs, a.left, a.right) < std::tie(b.lhs, b.left, b.right);
    });
    std::sort(unary_.begin(), unary_.end(),
              [](const UnaryRule& a, const UnaryRule& b) { return std::tie(a.lhs, a.child) < std::tie(b.lhs, b.child); });
    auto by_pos = [](const LexicalEntry& a, const LexicalEntry& b) { return a.pos < b.pos; };
    for (auto& [w, entries] : lexicon_) std::sort(entries.begin(), entries.end(), by_pos);
    for (auto& table : unknown_)
      for (auto& [s, entries] : table) std::sort(entries.begin(), entries.end(), by_pos);
    by_left_.assign(names_.size(), {});
    for (std::uint32_t i = 0; i < binary_.size(); ++i) by_left_[binary_[i].left].push_back(i);
    start_ok_.assign(names_.size(), false);
    for (std::size_t i = 0; i < names_.size(); ++i)
      start_ok_[i] = !is_intermediate_label(names_[i]) && base_label(names_[i]) == start_symbol_;
  }

  std::string start_symbol_;
  int rare_threshold_ = 1;
  std::vector<std::string> names_;
  std::map<std::string, SymbolId> ids_;
  std::vector<BinaryRule> binary_;
  std::vector<UnaryRule> unary_;
  std::vector<std::vector<std::uint32_t>> by_left_;
  std::unordered_map<std::string, std::vector<LexicalEntry>> lexicon_;
  std::map<std::string, std::vector<LexicalEntry>> unknown_[kSignatureLevels];
  std::set<std::string> rare_words_;
  std::vector<bool> start_ok_;
};

// Binarized rule counts of one tree: (lhs, rhs, is_lexical), pre-order.
inline std::vector<GrammarRule> binarized_rules(const ConstTree& tree) { return extract_rules(binarize(tree)); }

// Maximum-likelihood estimate over binarized trees. No smoothing in rule space;
// unknown words are scored by signature classes estimated from rare tokens.
inline Pcfg estimate_pcfg(const std::vector<ConstTree>& trees, const PcfgOptions& opts = {}) {
  if (trees.empty()) throw EmptyDistributionError("estimate_pcfg: empty treebank");
  std::string start = opts.start_symbol;
  for (const auto& t : trees) {
    const std::string& root = t.root().label;
    if (start.empty()) start = root;
    if (root != start)
      throw ConfigError("estimate_pcfg: trees do not share a start symbol ('" + start + "' vs '" + root +
                        "'); wrap them in a common ROOT");
  }

  std::map<GrammarRule, std::uint64_t> counts;
  std::map<std::string, std::uint64_t> lhs_totals;
  std::map<std::string, std::uint64_t> word_counts;
  for (const auto& t : trees) {
    for (auto& r : binarized_rules(t)) {
      ++lhs_totals[r.lhs];
      if (r.is_lexical) ++word_counts[r.rhs.front()];
      ++counts[std::move(r)];
    }
  }

  std::vector<Pcfg::RuleSpec> specs;
  specs.reserve(counts.size());
  for (const auto& [rule, n] : counts)
    specs.push_back({rule, static_cast<double>(n) / static_cast<double>(lhs_totals.at(rule.lhs))});

  // P_unk(signature | pos) = rare occurrences of pos with that signature / all lexical occurrences of pos.
  std::map<std::string, std::uint64_t> pos_lexical;
  for (const auto& [rule, n] : counts)
    if (rule.is_lexical) pos_lexical[rule.lhs] += n;
  std::map<std::tuple<int, std::string, std::string>, std::uint64_t> unk;
  for (const auto& [rule, n] : counts) {
    if (!rule.is_lexical) continue;
    const auto& w = rule.rhs.front();
    if (word_counts.at(w) > static_cast<std::uint64_t>(opts.rare_threshold)) continue;
    for (int level = 0; level < kSignatureLevels; ++level) unk[{level, word_signature(w, level), rule.lhs}] += n;
  }
  std::vector<Pcfg::UnknownSpec> unknown;
  for (const auto& [key, n] : unk) {
    const auto& [level, sig, pos] = key;
    unknown.push_back({level, sig, pos, static_cast<double>(n) / static_cast<double>(pos_lexical.at(pos))});
  }
  std::vector<std::string> rare;
  for (const auto& [w, n] : word_counts)
    if (n <= static_cast<std::uint64_t>(opts.rare_threshold)) rare.push_back(w);
  return Pcfg::from_rules(start, specs, unknown, opts.rare_threshold, rare);
}

inline Pcfg estimate_pcfg(const Treebank& tb, const PcfgOptions& opts = {}) { return estimate_pcfg(tb.trees, opts); }

// Log probability of the tree's binarized derivation; nullopt if any rule is unknown to the model.
inline std::optional<double> score_tree(const Pcfg& model, const ConstTree& tree) {
  double total = 0.0;
  for (const auto& r : binarized_rules(tree)) {
    auto lp = r.is_lexical ? model.lexical_log_prob(r.lhs, r.rhs.front()) : model.rule_log_prob(r.lhs, r.rhs);
    if (!lp) return std::nullopt;
    total += *lp;
  }
  return total;
}

inline void save_pcfg(const std::string& path, const Pcfg& model) { write_text_file(path, model.to_json().dump(1) + "\n"); }

inline Pcfg load_pcfg(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file '" + path + "': " + e.what());
  }
  return Pcfg::from_json(j);
}

}  // namespace selftrain
