// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "selftrain/selftrain.hpp"

namespace st = selftrain;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kData = SELFTRAIN_TEST_DATA;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

st::WeightedGrammar source_grammar() { return st::WeightedGrammar::load(kData + "/source.grammar"); }

// Source and target share 60% of each left-hand side's rule mass.
st::WeightedGrammar target_grammar() {
  return source_grammar().blend(st::WeightedGrammar::load(kData + "/target_specific.grammar"), 0.6);
}

st::Treebank sample_treebank(const st::WeightedGrammar& g, std::size_t n, std::uint64_t seed) {
  st::SeededRng rng(seed);
  st::Treebank tb;
  for (std::size_t i = 0; i < n; ++i) tb.add(g.sample_tree(rng));
  return tb;
}

// ---------------------------------------------------------------------------

Outcome cky_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2024);
  std::size_t sentences = 0, parses = 0;
  for (int g = 0; g < 50 && o.pass; ++g) {
    const auto toy = oracle::random_grammar(gen);
    o.require(toy.rules.size() <= 20, "grammar has more than 20 rules");
    const auto model = st::Pcfg::from_rules("S", toy.rules);
    oracle::BruteForceParser brute(toy.rules);
    for (const auto& words : oracle::all_sentences(toy.terminals, 6)) {
      ++sentences;
      const auto fast = st::parse_sentence(model, words);
      const auto slow = brute.parse(words);
      const std::string where = "grammar " + std::to_string(g) + " sentence '" + st::sentence_text(words) + "'";
      o.require(fast.has_value() == slow.has_value(), "coverage differs on " + where);
      if (!fast || !slow) continue;
      ++parses;
      const double rel = std::abs(fast->log_prob - slow->log_prob) / std::max(1.0, std::abs(slow->log_prob));
      o.require(rel <= 1e-9, "log-prob differs on " + where);
      o.require(fast->tree == slow->tree, "tree differs on " + where + ": " + st::write_bracketed(fast->tree) +
                                              " vs " + st::write_bracketed(slow->tree));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + fmt(secs, 1) + "s");
  if (o.pass)
    o.detail = "50 grammars, " + std::to_string(sentences) + " sentences, " + std::to_string(parses) +
               " parses, " + fmt(secs, 1) + "s";
  return o;
}

Outcome js_suite() {
  Outcome o;
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 500; ++trial) {
    st::Distribution<std::string> p, q;
    for (int k = 0; k < 8; ++k) {
      if (int c = count(gen)) p.add("k" + std::to_string(k), static_cast<std::uint64_t>(c));
      if (int c = count(gen)) q.add("k" + std::to_string(k), static_cast<std::uint64_t>(c));
    }
    if (p.empty() || q.empty()) continue;
    const double pq = st::js_divergence(p, q), qp = st::js_divergence(q, p);
    o.require(pq == qp, "asymmetric");
    o.require(st::js_divergence(p, p) == 0.0, "JS(P,P) != 0");
    o.require(std::abs(pq - oracle::js(oracle::normalized(p.counts()), oracle::normalized(q.counts()))) < 1e-12,
              "differs from the reference formula");
  }
  st::Distribution<std::string> a, b, half, point;
  a.add("a");
  b.add("b");
  o.require(st::js_divergence(a, b) == 1.0, "disjoint point masses != 1");
  half.add("a");
  half.add("b");
  point.add("a");
  const double pinned = st::js_divergence(half, point);
  o.require(std::abs(pinned - 0.311278) <= 1e-6, "JS({.5,.5},{1,0}) = " + fmt(pinned, 9));
  st::Distribution<std::string> s, c;
  s.add("r1", 100);
  c.add("r1", 2);
  o.require(st::distance_to_source(c, s) == 0.0, "point-mass distance not exactly 0");
  if (o.pass) o.detail = "JS({.5,.5},{1,0}) = " + fmt(pinned, 9);
  return o;
}

Outcome selection_oracles() {
  Outcome o;
  std::mt19937_64 gen(99);
  const st::Criterion crits[] = {st::Criterion::kToken, st::Criterion::kConf, st::Criterion::kGrs,
                                 st::Criterion::kGrsConf};
  const double factors[] = {1.0, 1.5, 2.0, 3.0};
  for (int set = 0; set < 1000 && o.pass; ++set) {
    const std::size_t n = 1 + gen() % 50;
    // coarse values so ties are frequent
    std::uniform_int_distribution<int> level(0, static_cast<int>(2 + gen() % 20));
    std::vector<oracle::Scored> scored;
    std::vector<st::PseudoInstance> cands;
    for (std::size_t i = 0; i < n; ++i) {
      oracle::Scored sc{-0.1 * level(gen), 0.01 * level(gen), 0.01 * level(gen)};
      scored.push_back(sc);
      st::PseudoInstance inst;
      inst.id = 1000 + i;
      inst.confidence = sc.confidence;
      inst.token_distance = sc.token_distance;
      inst.grs_distance = sc.grs_distance;
      cands.push_back(inst);
    }
    const std::size_t k = 1 + gen() % (n + 3);
    const double factor = factors[gen() % 4];
    for (auto crit : crits) {
      st::SelectionConfig cfg{crit, k, factor};
      st::set_log_level(st::LogLevel::kError);
      const auto got = st::rank_and_select(cands, cfg);
      st::set_log_level(st::LogLevel::kInfo);
      const auto want = oracle::select(scored, crit, k, factor);
      std::vector<std::size_t> got_idx;
      for (const auto& s : got.selected) got_idx.push_back(s.id - 1000);
      const std::string where = "set " + std::to_string(set) + " " + std::string(st::criterion_name(crit));
      o.require(got_idx == want, "selection differs on " + where);
      std::set<std::size_t> chosen(want.begin(), want.end());
      std::vector<std::size_t> rejected_want, rejected_got;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen.count(i)) rejected_want.push_back(i);
      for (const auto& r : got.rejected) rejected_got.push_back(r.id - 1000);
      o.require(rejected_got == rejected_want, "rejected set differs on " + where);
      if (crit == st::Criterion::kGrsConf) {
        const auto m = static_cast<std::size_t>(std::ceil(factor * static_cast<double>(k)));
        const auto pool = oracle::select(scored, st::Criterion::kGrs, m, factor);
        const std::set<std::size_t> pre(pool.begin(), pool.end());
        for (auto i : got_idx) o.require(pre.count(i) == 1, "GRsConf pick outside the GRs pool on " + where);
      }
    }
  }
  if (o.pass) o.detail = "1000 candidate sets x 4 criteria";
  return o;
}

Outcome treebank_round_trips() {
  Outcome o;
  const std::string text = st::read_text_file(kData + "/synthetic_200.mrg");
  const auto trees = st::parse_bracketed(text);
  o.require(trees.size() == 200, "expected 200 trees, read " + std::to_string(trees.size()));
  o.require(st::write_bracketed(trees) == text, "parse/write is not byte-exact");
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto bin = st::binarize(trees[i]);
    const auto back = st::debinarize(bin);
    o.require(back == trees[i], "debinarize(binarize(t)) != t at tree " + std::to_string(i));
    o.require(st::write_bracketed(back) == st::write_bracketed(trees[i]), "binarized round trip bytes differ at " +
                                                                              std::to_string(i));
    st::BracketedOptions raw{.strip_function_tags = false, .allow_reserved_labels = true};
    o.require(st::parse_bracketed(st::write_bracketed(bin), raw).front() == bin,
              "binarized tree does not re-read at " + std::to_string(i));
  }
  if (o.pass) o.detail = "200 trees";
  return o;
}

Outcome f1_scorer() {
  Outcome o;
  const auto gold = st::parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBZ barks)))");
  const auto pred = st::parse_bracketed("(S (NP (DT the) (NN dog)) (VBZ barks))");
  const auto same = st::score_trees(gold, gold);
  o.require(same.precision() == 100.0 && same.recall() == 100.0 && same.f1() == 100.0, "identical trees != 100");
  const auto synth = st::parse_bracketed(st::read_text_file(kData + "/synthetic_200.mrg"));
  o.require(st::score_trees(synth, synth).f1() == 100.0, "identical synthetic treebank != 100");
  const auto s = st::score_trees(gold, pred);
  o.require(std::abs(s.precision() - 100.0) <= 0.01, "P = " + fmt(s.precision(), 4));
  o.require(std::abs(s.recall() - 66.67) <= 0.01, "R = " + fmt(s.recall(), 4));
  o.require(std::abs(s.f1() - 80.0) <= 0.01, "F1 = " + fmt(s.f1(), 4));
  if (o.pass) o.detail = s.summary();
  return o;
}

// ---------------------------------------------------------------------------

st::RunConfig pipeline_config() {
  st::RunConfig cfg;
  cfg.iterations = 4;
  cfg.seed = 11;
  cfg.selection.top_k = 50;
  cfg.selection.criterion = st::Criterion::kGrsConf;
  cfg.generation.corpus_size = 500;
  cfg.generation.retry_base_delay_ms = 1;
  cfg.pcfg.rare_threshold = 8;
  cfg.source_treebank = "<memory>";
  return cfg;
}

st::RunInputs pipeline_inputs() {
  st::RunInputs in;
  in.source = sample_treebank(source_grammar(), 300, 301);
  st::SeededRng rng(302);
  const auto tgt = target_grammar();
  for (int i = 0; i < 20; ++i) in.target_samples.push_back(st::sentence_text(tgt.sample_sentence(rng)));
  return in;
}

Outcome pipeline_bookkeeping() {
  Outcome o;
  const auto t0 = Clock::now();
  st::set_log_level(st::LogLevel::kWarning);

  const auto cfg = pipeline_config();
  auto run_llm = [&] {
    auto backend = std::make_shared<st::MockBackend>(target_grammar(), cfg.seed);
    st::SelfTrainer trainer(cfg, pipeline_inputs(), backend);
    std::vector<st::IterationState> states{trainer.initial_state()};
    for (int i = 0; i < cfg.iterations; ++i) states.push_back(trainer.run_iteration(states.back()));
    return std::make_pair(states, trainer.finish(states.back()));
  };
  const auto [states, result] = run_llm();
  o.require(result.pseudo_treebank.size() == 200, "|pseudo| = " + std::to_string(result.pseudo_treebank.size()));
  const std::size_t want_sizes[] = {300, 350, 400, 450, 500};
  for (std::size_t i = 0; i < states.size(); ++i) {
    o.require(states[i].treebank.size() == want_sizes[i],
              "treebank size after iteration " + std::to_string(i) + " = " + std::to_string(states[i].treebank.size()));
    if (i > 0) o.require(states[i].metrics.back().treebank_size == want_sizes[i], "metrics treebank_size mismatch");
  }
  const auto source_rules = st::build_rule_distribution(states.front().treebank);
  for (std::size_t i = 1; i < states.size(); ++i) {
    const auto& rules = states[i].rule_dist;
    o.require(rules == st::build_rule_distribution(states[i].treebank), "rule distribution drifted at " +
                                                                             std::to_string(i));
    for (const auto& [r, c] : states[i - 1].rule_dist.counts())
      o.require(rules.count(r) >= c, "GRs not a superset at iteration " + std::to_string(i) + ": " + st::to_string(r));
    for (const auto& [r, c] : source_rules.counts())
      o.require(rules.count(r) >= c, "source rule lost at iteration " + std::to_string(i));
    for (std::size_t t = 0; t < 300; ++t)
      o.require(states[i].treebank.provenance[t] == st::kSourceProvenance, "source tree relabelled");
  }
  const auto again = run_llm();
  o.require(st::write_metrics_jsonl(result.metrics) == st::write_metrics_jsonl(again.second.metrics),
            "metrics differ between identical runs");
  o.require(states.back() == again.first.back(), "final state differs between identical runs");

  // vanilla mode: the selected sentences leave the pool
  auto vcfg = cfg;
  vcfg.mode = st::RunMode::kVanilla;
  vcfg.vanilla_pool_path = "<memory>";
  auto vin = pipeline_inputs();
  {
    st::SeededRng rng(303);
    std::set<std::vector<std::string>> seen;
    const auto tgt = target_grammar();
    while (vin.raw_pool.size() < 1000) {
      auto s = tgt.sample_sentence(rng);
      if (s.size() >= 3 && seen.insert(s).second) vin.raw_pool.push_back(std::move(s));
    }
  }
  st::SelfTrainer vtrainer(vcfg, vin, nullptr);
  auto vst = vtrainer.initial_state();
  for (int i = 0; i < vcfg.iterations; ++i) {
    auto next = vtrainer.run_iteration(vst);
    std::set<std::vector<std::string>> remaining(next.pool.begin(), next.pool.end());
    const auto& added = next.selected;
    o.require(next.pool.size() + 50 == vst.pool.size(), "pool did not shrink by top_k at iteration " +
                                                            std::to_string(i + 1));
    for (std::size_t t = vst.selected.size(); t < added.size(); ++t)
      o.require(!remaining.count(added.trees[t].tokens()), "selected sentence still in the pool");
    vst = std::move(next);
  }
  o.require(vst.treebank.size() == 500, "vanilla treebank size " + std::to_string(vst.treebank.size()));

  st::set_log_level(st::LogLevel::kInfo);
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "took " + fmt(secs, 1) + "s");
  if (o.pass) o.detail = "sizes 300/350/400/450/500, |pseudo|=200, " + fmt(secs, 1) + "s";
  return o;
}

// ---------------------------------------------------------------------------

struct DriftRun {
  st::RunResult result;
  double seconds;
};

const DriftRun& drift_run() {
  static const DriftRun run = [] {
    const auto t0 = Clock::now();
    st::set_log_level(st::LogLevel::kWarning);
    st::RunConfig cfg;
    cfg.iterations = 4;
    cfg.seed = 5;
    cfg.selection.criterion = st::Criterion::kGrsConf;
    cfg.selection.top_k = 100;
    cfg.generation.corpus_size = 600;
    cfg.generation.retry_base_delay_ms = 1;
    cfg.pcfg.rare_threshold = 8;
    cfg.source_treebank = "<memory>";

    st::RunInputs in;
    in.source = sample_treebank(source_grammar(), 300, 501);
    const auto target = target_grammar();
    in.eval = sample_treebank(target, 500, 502);
    in.target_trees = in.eval;
    st::SeededRng rng(503);
    for (int i = 0; i < 20; ++i) in.target_samples.push_back(st::sentence_text(target.sample_sentence(rng)));

    auto backend = std::make_shared<st::MockBackend>(target, cfg.seed, source_grammar(), cfg.iterations);
    st::SelfTrainer trainer(cfg, std::move(in), backend);
    DriftRun out{trainer.run(false), 0.0};
    st::set_log_level(st::LogLevel::kInfo);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return run;
}

Outcome distance_trend() {
  Outcome o;
  const auto& run = drift_run();
  const auto& m = run.result.metrics;
  o.require(m.size() == 4, "expected 4 iterations");
  if (!o.pass) return o;
  o.require(m[0].js_to_target && m[3].js_to_target && m[0].js_to_source && m[3].js_to_source, "missing distances");
  if (!o.pass) return o;
  const double t1 = *m[0].js_to_target, t4 = *m[3].js_to_target;
  const double s1 = *m[0].js_to_source, s4 = *m[3].js_to_source;
  o.require(t1 - t4 >= 0.02, "js_to_target " + fmt(t1) + " -> " + fmt(t4));
  o.require(s4 > s1, "js_to_source " + fmt(s1) + " -> " + fmt(s4));
  o.require(run.seconds < 300.0, "took " + fmt(run.seconds, 1) + "s");
  std::string trail;
  for (const auto& x : m) trail += (trail.empty() ? "" : " ") + fmt(*x.js_to_target, 4);
  if (o.pass)
    o.detail = "js_to_target " + trail + "; js_to_source " + fmt(s1, 4) + " -> " + fmt(s4, 4) + ", " +
               fmt(run.seconds, 1) + "s";
  return o;
}

Outcome adaptation_benefit() {
  Outcome o;
  const auto& run = drift_run();
  const auto& m = run.result.metrics;
  o.require(!m.empty() && m.front().eval && run.result.final_eval, "missing F1");
  if (!o.pass) return o;
  const double f0 = m.front().eval->f1(), fin = run.result.final_eval->f1();
  o.require(fin > f0, "F1 " + fmt(f0, 2) + " -> " + fmt(fin, 2));
  if (o.pass) o.detail = "F1 " + fmt(f0, 2) + " -> " + fmt(fin, 2);
  return o;
}

Outcome filter_conformance() {
  Outcome o;
  st::set_log_level(st::LogLevel::kWarning);
  st::GenerationConfig cfg;
  cfg.corpus_size = 10000;
  cfg.retry_base_delay_ms = 1;
  cfg.max_in_flight = 8;
  // short synthetic sentences repeat often; leave room for the deduplication
  cfg.attempt_factor = 6;
  const auto tb = sample_treebank(source_grammar(), 200, 901);
  const auto rules = st::build_rule_distribution(tb);
  const double avg = st::avg_sentence_length(tb);
  // the mock also emits 1- and 2-token completions so the short filter is exercised
  auto g = target_grammar();
  g.add({"S", {"NN"}, false}, 3.0);
  g.add({"S", {"UH", "."}, false}, 3.0);
  st::MockBackend backend(g, 17);
  std::size_t total = 0, rejected = 0;
  for (int it = 1; it <= 2; ++it) {
    st::SeededRng rng(st::mix_seed(17, static_cast<std::uint64_t>(it)));
    const auto res = st::generate_corpus(cfg, backend, rules, avg, {}, rng, it);
    std::set<std::string> seen;
    for (const auto& s : res.sentences) {
      o.require(s.tokens.size() >= 3 && s.tokens.size() <= 100, "sentence of length " +
                                                                    std::to_string(s.tokens.size()));
      o.require(seen.insert(s.text()).second, "duplicate in iteration " + std::to_string(it));
    }
    o.require(res.stats.requests >= 10000, "only " + std::to_string(res.stats.requests) + " generations");
    total += res.sentences.size();
    rejected += res.stats.too_short + res.stats.too_long;
    o.require(res.sentences.size() == cfg.corpus_size, "iteration " + std::to_string(it) + " produced " +
                                                           std::to_string(res.sentences.size()));
  }
  st::set_log_level(st::LogLevel::kInfo);
  if (o.pass) o.detail = std::to_string(total) + " sentences kept, " + std::to_string(rejected) + " filtered by length";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 CKY oracle equivalence", cky_oracle},
      {"2 JS suite", js_suite},
      {"3 selection oracles", selection_oracles},
      {"4 treebank round trips", treebank_round_trips},
      {"5 F1 scorer", f1_scorer},
      {"6 pipeline bookkeeping", pipeline_bookkeeping},
      {"7 distance trend", distance_trend},
      {"8 adaptation benefit", adaptation_benefit},
      {"9 filter conformance", filter_conformance},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << (o.detail.empty() ? "" : " (" + o.detail + ")") << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
