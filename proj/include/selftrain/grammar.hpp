#pragma once

// Grammar-rule extraction and the rule/token distributions built from treebanks.

#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "selftrain/distribution.hpp"
#include "selftrain/error.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

// A production read off one tree node. Lexical rules rewrite a pre-terminal to its token.
struct GrammarRule {
  std::string lhs;
  std::vector<std::string> rhs;
  bool is_lexical = false;

  auto operator<=>(const GrammarRule&) const = default;
  bool operator==(const GrammarRule&) const = default;
};

inline std::string quote_terminal(std::string_view token) {
  std::string out = "\"";
  for (char c : token) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

// "S -> NP VP", "DT -> \"the\"".
inline std::string to_string(const GrammarRule& rule) {
  std::string out = rule.lhs + " ->";
  for (const auto& s : rule.rhs) {
    out += ' ';
    out += rule.is_lexical ? quote_terminal(s) : s;
  }
  return out;
}

// Compact arrow form used in prompts: "S→NP VP", "DT→the".
inline std::string to_prompt_string(const GrammarRule& rule) {
  std::string out = rule.lhs + "→";
  for (std::size_t i = 0; i < rule.rhs.size(); ++i) {
    if (i) out += ' ';
    out += rule.rhs[i];
  }
  return out;
}

// Parses the to_string() form back. Quoted symbols are terminals.
inline GrammarRule parse_rule(std::string_view line) {
  GrammarRule rule;
  std::size_t i = 0;
  auto skip = [&] {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  };
  auto read_symbol = [&](bool& quoted) {
    std::string sym;
    quoted = false;
    if (i < line.size() && line[i] == '"') {
      quoted = true;
      ++i;
      while (i < line.size() && line[i] != '"') {
        if (line[i] == '\\' && i + 1 < line.size()) ++i;
        sym += line[i++];
      }
      if (i >= line.size()) throw ValidationError("unterminated terminal in rule: " + std::string(line));
      ++i;
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') sym += line[i++];
    }
    return sym;
  };
  skip();
  bool quoted = false;
  rule.lhs = read_symbol(quoted);
  skip();
  if (line.substr(i, 2) != "->") throw ValidationError("missing '->' in rule: " + std::string(line));
  i += 2;
  bool any_quoted = false, any_plain = false;
  for (;;) {
    skip();
    if (i >= line.size()) break;
    rule.rhs.push_back(read_symbol(quoted));
    (quoted ? any_quoted : any_plain) = true;
  }
  if (rule.lhs.empty() || rule.rhs.empty()) throw ValidationError("incomplete rule: " + std::string(line));
  if (any_quoted && (any_plain || rule.rhs.size() != 1))
    throw ValidationError("lexical rule must have exactly one terminal: " + std::string(line));
  rule.is_lexical = any_quoted;
  return rule;
}

using RuleDistribution = Distribution<GrammarRule>;
using TokenDistribution = Distribution<std::string>;

// One rule per node in pre-order, pre-terminals included as lexical rules.
inline std::vector<GrammarRule> extract_rules(const ConstTree& tree) {
  std::vector<GrammarRule> rules;
  visit_preorder(tree.root(), [&](const TreeNode& n) {
    GrammarRule r;
    r.lhs = n.label;
    if (n.is_preterminal()) {
      r.rhs.push_back(n.word);
      r.is_lexical = true;
    } else {
      r.rhs.reserve(n.children.size());
      for (const auto& c : n.children) r.rhs.push_back(c.label);
    }
    rules.push_back(std::move(r));
  });
  return rules;
}

inline RuleDistribution rule_distribution_of(const ConstTree& tree) {
  RuleDistribution d;
  for (const auto& r : extract_rules(tree)) d.add(r);
  return d;
}

inline RuleDistribution build_rule_distribution(const std::vector<ConstTree>& trees) {
  if (trees.empty()) throw EmptyDistributionError("build_rule_distribution: empty treebank");
  RuleDistribution d;
  for (const auto& t : trees)
    for (const auto& r : extract_rules(t)) d.add(r);
  return d;
}

inline RuleDistribution build_rule_distribution(const Treebank& tb) { return build_rule_distribution(tb.trees); }

inline TokenDistribution token_distribution_of(const std::vector<std::string>& tokens) {
  TokenDistribution d;
  for (const auto& t : tokens) d.add(t);
  return d;
}

inline TokenDistribution build_token_distribution(const std::vector<std::vector<std::string>>& sentences) {
  TokenDistribution d;
  for (const auto& s : sentences)
    for (const auto& t : s) d.add(t);
  if (d.empty()) throw EmptyDistributionError("build_token_distribution: no tokens");
  return d;
}

// Sentences are whitespace-tokenized.
inline TokenDistribution build_token_distribution(const std::vector<std::string>& sentences) {
  std::vector<std::vector<std::string>> toks;
  toks.reserve(sentences.size());
  for (const auto& s : sentences) toks.push_back(split_whitespace(s));
  return build_token_distribution(toks);
}

inline TokenDistribution build_token_distribution(const Treebank& tb) {
  if (tb.empty()) throw EmptyDistributionError("build_token_distribution: empty treebank");
  TokenDistribution d;
  for (const auto& t : tb.trees)
    for (const auto& w : t.tokens()) d.add(w);
  return d;
}

inline double avg_sentence_length(const Treebank& tb) {
  if (tb.empty()) throw EmptyDistributionError("avg_sentence_length: empty treebank");
  double sum = 0.0;
  for (const auto& t : tb.trees) sum += static_cast<double>(t.size());
  return sum / static_cast<double>(tb.size());
}

// {"S -> NP VP": 12, ...}
inline nlohmann::json to_json(const RuleDistribution& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [r, n] : d.counts()) j[to_string(r)] = n;
  return j;
}

inline nlohmann::json to_json(const TokenDistribution& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [t, n] : d.counts()) j[t] = n;
  return j;
}

inline RuleDistribution rule_distribution_from_json(const nlohmann::json& j) {
  RuleDistribution d;
  for (const auto& [k, v] : j.items()) d.add(parse_rule(k), v.get<std::uint64_t>());
  return d;
}

}  // namespace selftrain
