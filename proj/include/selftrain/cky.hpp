#pragma once

// Viterbi CKY over a binarized Pcfg.
//
// Ties (scores within a relative 1e-12) are broken toward the smaller split
// point, then toward the smaller rule identity (canonical rule order). For
// length-one spans lexical entries beat unary rules, and unary rules are
// ordered canonically. The top cell picks the best start candidate, ties to
// the smaller symbol name.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "selftrain/binarize.hpp"
#include "selftrain/error.hpp"
#include "selftrain/log.hpp"
#include "selftrain/pcfg.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

struct ParseResult {
  ConstTree tree;  // debinarized
  double log_prob = 0.0;
  double confidence = 0.0;  // log_prob / token count
};

struct ParserOptions {
  // Drop chart entries scoring more than `beam` nats below their cell's best. Infinity disables pruning.
  double beam = std::numeric_limits<double>::infinity();
};

inline Pcfg train(const Treebank& treebank, const PcfgOptions& opts = {}) { return estimate_pcfg(treebank, opts); }

namespace detail {

inline constexpr double kTieTolerance = 1e-12;

inline bool beats(double candidate, double incumbent) {
  if (incumbent == -std::numeric_limits<double>::infinity()) return candidate > incumbent;
  return candidate > incumbent + kTieTolerance * std::max(1.0, std::abs(incumbent));
}

inline bool ties(double candidate, double incumbent) {
  if (incumbent == -std::numeric_limits<double>::infinity()) return false;
  return !beats(candidate, incumbent) && !beats(incumbent, candidate);
}

class CkyChart {
 public:
  static constexpr std::int32_t kLexical = -1;

  struct Back {
    std::int32_t split = 0;  // span > 1: split point; span == 1: unused
    std::int32_t rule = 0;   // binary rule index, or unary rule index, or kLexical
  };

  explicit CkyChart(const Pcfg& model, ParserOptions opts = {}) : model_(model), opts_(opts) {}

  std::optional<ParseResult> parse(const std::vector<std::string>& tokens) {
    const std::size_t n = tokens.size();
    if (n == 0) throw ValidationError("parse_sentence: empty token sequence");
    const std::size_t nsym = model_.num_symbols();
    n_ = n;
    nsym_ = nsym;
    const std::size_t ncells = n * (n + 1) / 2;
    score_.assign(ncells * nsym, kNegInf);
    back_.assign(ncells * nsym, Back{});
    active_.assign(ncells, {});

    for (std::size_t i = 0; i < n; ++i) fill_lexical(i, tokens[i]);
    for (std::size_t span = 2; span <= n; ++span)
      for (std::size_t i = 0; i + span <= n; ++i) fill_binary(i, i + span);

    const std::size_t top = cell(0, n);
    std::int32_t best = -1;
    for (std::int32_t s : active_[top]) {
      if (!model_.is_start_candidate(s)) continue;
      if (best < 0 || beats(at(top, s), at(top, best)) || (ties(at(top, s), at(top, best)) && s < best)) best = s;
    }
    if (best < 0) return std::nullopt;

    ParseResult result;
    result.log_prob = at(top, best);
    result.tree = debinarize(ConstTree(build(0, n, best, tokens)));
    result.confidence = result.log_prob / static_cast<double>(n);
    return result;
  }

 private:
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::size_t cell(std::size_t i, std::size_t j) const {
    // cells ordered by span length, then start
    const std::size_t len = j - i;
    return (len - 1) * n_ - (len - 1) * (len - 2) / 2 + i;
  }
  double& at(std::size_t c, std::int32_t s) { return score_[c * nsym_ + static_cast<std::size_t>(s)]; }
  Back& back_at(std::size_t c, std::int32_t s) { return back_[c * nsym_ + static_cast<std::size_t>(s)]; }

  void fill_lexical(std::size_t i, const std::string& word) {
    const std::size_t c = cell(i, i + 1);
    for (const auto& e : model_.lexical_entries(word)) {
      at(c, e.pos) = e.log_prob;
      back_at(c, e.pos) = {0, kLexical};
    }
    // Unary rules read only lexical scores: one unary layer above pre-terminals.
    std::vector<double> lexical(score_.begin() + static_cast<std::ptrdiff_t>(c * nsym_),
                                score_.begin() + static_cast<std::ptrdiff_t>((c + 1) * nsym_));
    const auto& unary = model_.unary_rules();
    for (std::size_t u = 0; u < unary.size(); ++u) {
      const auto& r = unary[u];
      const double child = lexical[static_cast<std::size_t>(r.child)];
      if (child == kNegInf) continue;
      const double s = child + r.log_prob;
      if (beats(s, at(c, r.lhs))) {
        at(c, r.lhs) = s;
        back_at(c, r.lhs) = {0, static_cast<std::int32_t>(u)};
      }
    }
    collect_active(c);
  }

  void fill_binary(std::size_t i, std::size_t j) {
    const std::size_t c = cell(i, j);
    const auto& rules = model_.binary_rules();
    for (std::size_t k = i + 1; k < j; ++k) {
      const std::size_t lc = cell(i, k), rc = cell(k, j);
      if (active_[lc].empty() || active_[rc].empty()) continue;
      for (std::int32_t left : active_[lc]) {
        const double ls = at(lc, left);
        for (std::uint32_t idx : model_.binary_rules_with_left(left)) {
          const auto& r = rules[idx];
          const double rs = at(rc, r.right);
          if (rs == kNegInf) continue;
          const double s = ls + rs + r.log_prob;
          double& cur = at(c, r.lhs);
          Back& b = back_at(c, r.lhs);
          // splits are visited in increasing order, so a tie only needs the rule order check
          if (beats(s, cur) || (ties(s, cur) && b.split == static_cast<std::int32_t>(k) &&
                                static_cast<std::int32_t>(idx) < b.rule)) {
            cur = s;
            b = {static_cast<std::int32_t>(k), static_cast<std::int32_t>(idx)};
          }
        }
      }
    }
    collect_active(c);
  }

  void collect_active(std::size_t c) {
    auto& act = active_[c];
    double best = kNegInf;
    for (std::size_t s = 0; s < nsym_; ++s) best = std::max(best, score_[c * nsym_ + s]);
    for (std::size_t s = 0; s < nsym_; ++s) {
      double& v = score_[c * nsym_ + s];
      if (v == kNegInf) continue;
      if (best - v > opts_.beam) {
        v = kNegInf;
        continue;
      }
      act.push_back(static_cast<std::int32_t>(s));
    }
  }

  TreeNode build(std::size_t i, std::size_t j, std::int32_t sym, const std::vector<std::string>& tokens) {
    const std::size_t c = cell(i, j);
    const Back b = back_at(c, sym);
    if (j - i == 1) {
      if (b.rule == kLexical) return make_leaf(model_.symbol_name(sym), tokens[i]);
      const auto& u = model_.unary_rules()[static_cast<std::size_t>(b.rule)];
      std::vector<TreeNode> kids;
      kids.push_back(make_leaf(model_.symbol_name(u.child), tokens[i]));
      return make_node(model_.symbol_name(sym), std::move(kids));
    }
    const auto& r = model_.binary_rules()[static_cast<std::size_t>(b.rule)];
    const auto k = static_cast<std::size_t>(b.split);
    std::vector<TreeNode> kids;
    kids.push_back(build(i, k, r.left, tokens));
    kids.push_back(build(k, j, r.right, tokens));
    return make_node(model_.symbol_name(sym), std::move(kids));
  }

  const Pcfg& model_;
  ParserOptions opts_;
  std::size_t n_ = 0;
  std::size_t nsym_ = 0;
  std::vector<double> score_;
  std::vector<Back> back_;
  std::vector<std::vector<std::int32_t>> active_;
};

}  // namespace detail

// Best derivation for the sentence, or nullopt when the start symbol is unreachable.
inline std::optional<ParseResult> parse_sentence(const Pcfg& model, const std::vector<std::string>& tokens,
                                                 const ParserOptions& opts = {}) {
  return detail::CkyChart(model, opts).parse(tokens);
}

struct PoolParse {
  std::vector<ParseResult> results;       // parseable sentences, input order
  std::vector<std::size_t> source_index;  // input index of each result
  std::vector<std::size_t> no_parse;      // input indices without a derivation
};

// Parses every sentence; output is identical for any worker count.
inline PoolParse parse_pool(const Pcfg& model, const std::vector<std::vector<std::string>>& sentences,
                            unsigned workers = 0, const ParserOptions& opts = {}) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(1, sentences.size())));
  std::vector<std::optional<ParseResult>> slots(sentences.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto work = [&] {
    detail::CkyChart chart(model, opts);
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sentences.size() || failed.load()) return;
      try {
        slots[i] = chart.parse(sentences[i]);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  PoolParse out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      out.results.push_back(std::move(*slots[i]));
      out.source_index.push_back(i);
    } else {
      out.no_parse.push_back(i);
    }
  }
  if (!out.no_parse.empty()) {
    std::string idx;
    for (std::size_t k = 0; k < out.no_parse.size() && k < 20; ++k) idx += (k ? "," : "") + std::to_string(out.no_parse[k]);
    if (out.no_parse.size() > 20) idx += ",...";
    log_debug("stage=parse no_parse=", out.no_parse.size(), " indices=", idx);
  }
  return out;
}

}  // namespace selftrain
