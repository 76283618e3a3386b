#pragma once

// Grammar-rule-guided generation prompts.
//
// Per request: N ~ round(Normal(avg_len, 6)) rules drawn count-weighted without
// replacement, and two draws of round(Normal(N, 3)) giving the sorted length
// bounds L1 <= L2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "selftrain/error.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/rng.hpp"

namespace selftrain {

// Bumped whenever the rendered text changes.
inline constexpr int kPromptTemplateVersion = 1;

inline constexpr double kRuleCountStddev = 6.0;
inline constexpr double kLengthStddev = 3.0;
inline constexpr std::size_t kDefaultExampleCount = 5;

struct PromptSpec {
  std::size_t n_rules = 0;
  std::vector<GrammarRule> rules;
  std::size_t m_sentences = 0;
  std::vector<std::string> sample_sentences;
  std::size_t len_lo = 3;
  std::size_t len_hi = 3;
  // Used in place of example sentences when none are available.
  std::string domain_name;
};

struct LengthBounds {
  std::size_t min_len = 3;
  std::size_t max_len = 100;
};

inline std::size_t clamp_round(double x, std::size_t lo, std::size_t hi) {
  const double r = std::round(x);
  if (!(r >= static_cast<double>(lo))) return lo;
  if (r >= static_cast<double>(hi)) return hi;
  return static_cast<std::size_t>(r);
}

// Draws N, the N rules and the length bounds. Example sentences are left to the caller.
template <RandomSource Rng>
PromptSpec sample_prompt_params(const RuleDistribution& rule_dist, double avg_len, Rng& rng,
                                LengthBounds bounds = {}) {
  if (rule_dist.support_size() < 1) throw EmptyDistributionError("sample_prompt_params: no grammar rules");
  if (!(avg_len > 0.0)) throw ValidationError("sample_prompt_params: avg_len must be positive");
  PromptSpec spec;
  spec.n_rules = clamp_round(rng.normal(avg_len, kRuleCountStddev), 1, rule_dist.support_size());

  // Count-weighted draws without replacement, scanning in canonical rule order.
  std::vector<std::pair<const GrammarRule*, double>> pool;
  pool.reserve(rule_dist.support_size());
  double remaining = 0.0;
  for (const auto& [rule, n] : rule_dist.counts()) {
    pool.emplace_back(&rule, static_cast<double>(n));
    remaining += static_cast<double>(n);
  }
  for (std::size_t draw = 0; draw < spec.n_rules; ++draw) {
    double u = rng.uniform() * remaining;
    std::size_t pick = pool.size();
    std::size_t last_live = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].second <= 0.0) continue;
      last_live = i;
      if (u < pool[i].second) {
        pick = i;
        break;
      }
      u -= pool[i].second;
    }
    if (pick == pool.size()) pick = last_live;  // floating-point spill past the end
    spec.rules.push_back(*pool[pick].first);
    remaining -= pool[pick].second;
    pool[pick].second = 0.0;
  }

  const double centre = static_cast<double>(spec.n_rules);
  std::size_t a = clamp_round(rng.normal(centre, kLengthStddev), bounds.min_len, bounds.max_len);
  std::size_t b = clamp_round(rng.normal(centre, kLengthStddev), bounds.min_len, bounds.max_len);
  spec.len_lo = std::min(a, b);
  spec.len_hi = std::max(a, b);
  return spec;
}

inline std::string build_prompt(const PromptSpec& spec) {
  std::string out;
  out += "As a language assistant, you excel at creating sentences of a specific length while adhering to ";
  out += std::to_string(spec.n_rules);
  out += " grammar rules provided above. ";
  if (spec.sample_sentences.empty()) {
    out += "Please consider the " + (spec.domain_name.empty() ? std::string("target") : spec.domain_name) +
           " domain, generate one sentence of ";
  } else {
    out += "Please consider the " + std::to_string(spec.m_sentences) + " examples, generate one sentence of ";
  }
  out += std::to_string(spec.len_lo) + " ∼ " + std::to_string(spec.len_hi) + " words:\n";
  out += "GRs: ";
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    if (i) out += ", ";
    out += to_prompt_string(spec.rules[i]);
  }
  out += '\n';
  if (spec.sample_sentences.empty()) {
    out += "Domain: " + (spec.domain_name.empty() ? std::string("target") : spec.domain_name) + "\n";
  } else {
    out += "Snts:\n";
    for (std::size_t i = 0; i < spec.sample_sentences.size(); ++i)
      out += std::to_string(i + 1) + ". " + spec.sample_sentences[i] + "\n";
  }
  return out;
}

}  // namespace selftrain
