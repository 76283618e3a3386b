#pragma once

// The self-training loop. Each iteration: obtain candidates (LLM generation or
// the remaining raw pool), train on the current treebank, parse, score, select
// top-k, append the selection to the treebank, re-extract the grammar rules.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "selftrain/backend.hpp"
#include "selftrain/cky.hpp"
#include "selftrain/config.hpp"
#include "selftrain/distribution.hpp"
#include "selftrain/error.hpp"
#include "selftrain/evaluation.hpp"
#include "selftrain/generation.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/log.hpp"
#include "selftrain/pcfg.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/sampler.hpp"
#include "selftrain/selection.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr std::uint64_t kPoolStream = 0x706f6f6cULL;

using Sentence = std::vector<std::string>;

// JS between aggregate grammar-rule distributions.
inline double measure_domain_distance(const Treebank& pseudo, const Treebank& reference) {
  if (pseudo.empty() || reference.empty()) throw EmptyDistributionError("measure_domain_distance: empty side");
  return js_divergence(build_rule_distribution(pseudo), build_rule_distribution(reference));
}

// Sentence-only reference: JS between token distributions.
inline double measure_domain_distance(const Treebank& pseudo, const std::vector<Sentence>& reference) {
  if (pseudo.empty() || reference.empty()) throw EmptyDistributionError("measure_domain_distance: empty side");
  return js_divergence(build_token_distribution(pseudo), build_token_distribution(reference));
}

struct IterationMetrics {
  int iteration = 0;
  std::size_t pool_size = 0;
  std::size_t parsed = 0;
  std::size_t no_parse = 0;
  std::size_t selected = 0;
  std::size_t treebank_size = 0;
  std::optional<double> mean_confidence;
  std::optional<double> mean_token_distance;
  std::optional<double> mean_grs_distance;
  std::optional<double> mean_token_distance_source;
  std::optional<double> mean_grs_distance_source;
  std::optional<double> js_to_source;
  std::optional<double> js_to_target;
  std::optional<BracketScore> eval;
  std::optional<GenerationStats> generation;

  std::optional<double> f1() const {
    if (!eval) return std::nullopt;
    return eval->f1();
  }

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j = {{"iteration", iteration},
                        {"pool_size", pool_size},
                        {"parsed", parsed},
                        {"no_parse", no_parse},
                        {"selected", selected},
                        {"treebank_size", treebank_size},
                        {"mean_confidence", opt(mean_confidence)},
                        {"mean_token_distance", opt(mean_token_distance)},
                        {"mean_grs_distance", opt(mean_grs_distance)},
                        {"mean_token_distance_source", opt(mean_token_distance_source)},
                        {"mean_grs_distance_source", opt(mean_grs_distance_source)},
                        {"js_to_source", opt(js_to_source)},
                        {"js_to_target", opt(js_to_target)},
                        {"f1", opt(f1())}};
    j["eval"] = eval ? eval->to_json() : nlohmann::json(nullptr);
    j["generation"] = generation ? generation->to_json() : nlohmann::json(nullptr);
    return j;
  }

  static IterationMetrics from_json(const nlohmann::json& j) {
    auto opt = [&](const char* k) -> std::optional<double> {
      if (!j.contains(k) || j[k].is_null()) return std::nullopt;
      return j[k].get<double>();
    };
    IterationMetrics m;
    m.iteration = j.at("iteration");
    m.pool_size = j.at("pool_size");
    m.parsed = j.at("parsed");
    m.no_parse = j.at("no_parse");
    m.selected = j.at("selected");
    m.treebank_size = j.value("treebank_size", std::size_t{0});
    m.mean_confidence = opt("mean_confidence");
    m.mean_token_distance = opt("mean_token_distance");
    m.mean_grs_distance = opt("mean_grs_distance");
    m.mean_token_distance_source = opt("mean_token_distance_source");
    m.mean_grs_distance_source = opt("mean_grs_distance_source");
    m.js_to_source = opt("js_to_source");
    m.js_to_target = opt("js_to_target");
    if (j.contains("eval") && !j["eval"].is_null()) {
      BracketScore s;
      s.matched = j["eval"].at("matched");
      s.gold_total = j["eval"].at("gold");
      s.pred_total = j["eval"].at("pred");
      m.eval = s;
    }
    if (j.contains("generation") && !j["generation"].is_null()) {
      const auto& g = j["generation"];
      GenerationStats st;
      st.requests = g.at("requests");
      st.transport_failures = g.at("transport_failures");
      st.retries = g.at("retries");
      st.malformed = g.at("malformed");
      st.too_short = g.at("too_short");
      st.too_long = g.at("too_long");
      st.duplicates = g.at("duplicates");
      st.accepted = g.at("accepted");
      st.partial = g.at("partial");
      m.generation = st;
    }
    return m;
  }
};

struct IterationState {
  int iteration = 0;
  Treebank treebank;           // source + accumulated pseudo-trees
  RuleDistribution rule_dist;  // always build_rule_distribution(treebank)
  std::vector<Sentence> pool;  // remaining raw sentences (vanilla mode)
  Treebank selected;           // cumulative pseudo-treebank
  std::vector<IterationMetrics> metrics;
  std::string selection_report;  // JSON-lines of the latest iteration

  friend bool operator==(const IterationState& a, const IterationState& b) {
    if (a.metrics.size() != b.metrics.size()) return false;
    for (std::size_t i = 0; i < a.metrics.size(); ++i)
      if (a.metrics[i].to_json() != b.metrics[i].to_json()) return false;
    return a.iteration == b.iteration && a.treebank == b.treebank && a.rule_dist == b.rule_dist &&
           a.pool == b.pool && a.selected == b.selected && a.selection_report == b.selection_report;
  }
};

struct RunInputs {
  Treebank source;
  std::vector<std::string> target_samples;
  std::vector<Sentence> raw_pool;
  std::optional<Treebank> eval;
  std::optional<Treebank> target_trees;
  std::optional<std::vector<Sentence>> target_sentences;
};

struct RunResult {
  Pcfg model;
  Treebank pseudo_treebank;
  Treebank final_treebank;
  std::vector<IterationMetrics> metrics;
  std::optional<BracketScore> final_eval;
};

inline bool looks_like_treebank(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '(';
  }
  return false;
}

// Length-filtered, seeded uniform sample of the raw corpus, in file order.
inline std::vector<Sentence> build_vanilla_pool(std::vector<Sentence> raw, std::size_t pool_size, std::size_t min_len,
                                                std::size_t max_len, std::uint64_t seed) {
  std::erase_if(raw, [&](const Sentence& s) { return s.size() < min_len || s.size() > max_len; });
  if (raw.size() <= pool_size) return raw;
  SeededRng rng(mix_seed(seed, kPoolStream));
  std::vector<std::size_t> idx(raw.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < pool_size; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(pool_size);
  std::sort(idx.begin(), idx.end());
  std::vector<Sentence> out;
  out.reserve(pool_size);
  for (auto i : idx) out.push_back(std::move(raw[i]));
  return out;
}

// Reads every input named by the config; any failure surfaces before the first iteration.
inline RunInputs load_run_inputs(const RunConfig& cfg) {
  cfg.validate();
  RunInputs in;
  in.source = load_treebank(cfg.source_treebank);
  if (in.source.empty()) throw ConfigError("source treebank '" + cfg.source_treebank + "' contains no trees");
  if (!cfg.target_samples.empty())
    for (const auto& s : load_sentences(cfg.target_samples)) in.target_samples.push_back(sentence_text(s));
  if (cfg.mode == RunMode::kVanilla)
    in.raw_pool = build_vanilla_pool(load_sentences(cfg.vanilla_pool_path), cfg.pool_size, cfg.generation.min_len,
                                     cfg.generation.max_len, cfg.seed);
  if (!cfg.eval_treebank_path.empty()) in.eval = load_treebank(cfg.eval_treebank_path);
  if (!cfg.target_reference_path.empty()) {
    const std::string text = read_text_file(cfg.target_reference_path);
    if (looks_like_treebank(text))
      in.target_trees = Treebank::from_trees(parse_bracketed(text));
    else
      in.target_sentences = load_sentences(cfg.target_reference_path);
  } else if (in.eval) {
    in.target_trees = in.eval;
  }
  return in;
}

inline std::shared_ptr<Backend> make_backend(const RunConfig& cfg) {
  if (cfg.mode != RunMode::kLlm) return nullptr;
  if (cfg.backend == "http") return std::make_shared<ChatCompletionsBackend>(cfg.endpoint, cfg.api_key_env);
  auto target = WeightedGrammar::load(cfg.mock_grammar);
  if (!cfg.mock_base_grammar.empty())
    return std::make_shared<MockBackend>(std::move(target), cfg.seed, WeightedGrammar::load(cfg.mock_base_grammar),
                                         cfg.iterations);
  return std::make_shared<MockBackend>(std::move(target), cfg.seed);
}

namespace fs = std::filesystem;

inline std::string iteration_dir_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%03d", iteration);
  return buf;
}

inline std::string write_sentences(const std::vector<Sentence>& sents) {
  std::string out;
  for (const auto& s : sents) {
    out += sentence_text(s);
    out += '\n';
  }
  return out;
}

inline std::string write_metrics_jsonl(const std::vector<IterationMetrics>& metrics) {
  std::string out;
  for (const auto& m : metrics) {
    out += m.to_json().dump();
    out += '\n';
  }
  return out;
}

// Writes <dir>/iter_NNN atomically: files go to a temporary sibling that is renamed into place.
inline void save_checkpoint(const std::string& dir, const IterationState& st, std::uint64_t seed) {
  const fs::path final_dir = fs::path(dir) / iteration_dir_name(st.iteration);
  const fs::path tmp = fs::path(dir) / (iteration_dir_name(st.iteration) + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  save_treebank((tmp / "treebank.mrg").string(), st.treebank);
  save_treebank((tmp / "pseudo.mrg").string(), st.selected);
  write_text_file((tmp / "pool.txt").string(), write_sentences(st.pool));
  write_text_file((tmp / "selection.jsonl").string(), st.selection_report);
  const nlohmann::json metrics = st.metrics.empty() ? nlohmann::json(nullptr) : st.metrics.back().to_json();
  write_text_file((tmp / "metrics.json").string(), metrics.dump(1) + "\n");
  nlohmann::json state = {{"format_version", kCheckpointFormatVersion},
                          {"iteration", st.iteration},
                          {"seed", seed},
                          {"next_rng_seed", mix_seed(seed, static_cast<std::uint64_t>(st.iteration + 1))},
                          {"metrics", nlohmann::json::array()}};
  for (const auto& m : st.metrics) state["metrics"].push_back(m.to_json());
  write_text_file((tmp / "state.json").string(), state.dump(1) + "\n");
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

inline IterationState load_checkpoint(const std::string& iter_dir) {
  const fs::path d(iter_dir);
  nlohmann::json state;
  try {
    state = nlohmann::json::parse(read_text_file((d / "state.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint '" + iter_dir + "': " + e.what());
  }
  if (state.value("format_version", 0) != kCheckpointFormatVersion)
    throw ValidationError("checkpoint '" + iter_dir + "' has an unsupported format_version");
  IterationState st;
  st.iteration = state.at("iteration");
  st.treebank = load_treebank((d / "treebank.mrg").string());
  st.selected = load_treebank((d / "pseudo.mrg").string());
  st.rule_dist = build_rule_distribution(st.treebank);
  st.pool = load_sentences((d / "pool.txt").string());
  st.selection_report = read_text_file((d / "selection.jsonl").string());
  for (const auto& m : state.at("metrics")) st.metrics.push_back(IterationMetrics::from_json(m));
  return st;
}

// Latest complete iteration directory under `dir`, if any.
inline std::optional<std::string> latest_checkpoint(const std::string& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<std::string> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("iter_", 0) != 0 || name.size() != 8) continue;
    if (!fs::exists(e.path() / "state.json")) continue;
    if (!best || name > fs::path(*best).filename().string()) best = e.path().string();
  }
  return best;
}

class SelfTrainer {
 public:
  SelfTrainer(RunConfig cfg, RunInputs inputs, std::shared_ptr<Backend> backend)
      : cfg_(std::move(cfg)), in_(std::move(inputs)), backend_(std::move(backend)) {
    if (cfg_.iterations < 1) throw ConfigError("iterations must be >= 1");
    if (in_.source.empty()) throw ConfigError("empty source treebank");
    if (cfg_.mode == RunMode::kLlm && !backend_) throw ConfigError("llm mode needs a generation backend");
    source_tokens_ = build_token_distribution(in_.source);
    source_rules_ = build_rule_distribution(in_.source);
  }

  const RunConfig& config() const { return cfg_; }
  const RunInputs& inputs() const { return in_; }

  IterationState initial_state() const {
    IterationState st;
    st.treebank = in_.source;
    st.rule_dist = source_rules_;
    st.pool = in_.raw_pool;
    return st;
  }

  // One loop turn; `state` is left untouched.
  IterationState run_iteration(const IterationState& state) const {
    const int it = state.iteration + 1;
    SeededRng rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(it)));
    IterationMetrics m;
    m.iteration = it;

    // 1. candidates
    std::vector<Sentence> candidates;
    if (cfg_.mode == RunMode::kLlm) {
      auto gen = generate_corpus(cfg_.generation, *backend_, state.rule_dist, avg_sentence_length(state.treebank),
                                 in_.target_samples, rng, it);
      for (auto& s : gen.sentences) candidates.push_back(std::move(s.tokens));
      m.generation = gen.stats;
    } else {
      candidates = state.pool;
    }
    m.pool_size = candidates.size();

    // 2. train, 3. parse
    const Pcfg model = train(state.treebank, cfg_.pcfg);
    PoolParse parsed = parse_pool(model, candidates, cfg_.threads);
    m.parsed = parsed.results.size();
    m.no_parse = parsed.no_parse.size();
    log_info("stage=parse iteration=", it, " candidates=", candidates.size(), " parsed=", m.parsed,
             " no_parse=", m.no_parse);

    // 4. score against the current treebank (and, for reporting, the original source)
    const TokenDistribution cur_tokens = build_token_distribution(state.treebank);
    std::vector<PseudoInstance> insts;
    insts.reserve(parsed.results.size());
    for (std::size_t r = 0; r < parsed.results.size(); ++r) {
      PseudoInstance inst;
      inst.id = parsed.source_index[r];
      inst.sentence = candidates[inst.id];
      inst.tree = std::move(parsed.results[r].tree);
      inst.confidence = parsed.results[r].confidence;
      score_against(inst, cur_tokens, state.rule_dist);
      inst.token_distance_source = distance_to_source(token_distribution_of(inst.sentence), source_tokens_);
      inst.grs_distance_source = distance_to_source(rule_distribution_of(inst.tree), source_rules_);
      insts.push_back(std::move(inst));
    }

    // 5. select
    IterationState next;
    next.iteration = it;
    next.treebank = state.treebank;
    next.selected = state.selected;
    SelectionResult sel;
    if (!insts.empty()) {
      if (insts.size() < cfg_.selection.top_k)
        log_warning("stage=select iteration=", it, " only ", insts.size(), " parsed candidates for top_k=",
                    cfg_.selection.top_k);
      sel = rank_and_select(insts, cfg_.selection);
    } else {
      log_warning("stage=select iteration=", it, " no parseable candidates; nothing added");
    }
    next.selection_report = write_selection_report(sel, cfg_.selection.criterion, it);

    // 6. update treebank, pool and rules
    Treebank chosen;
    std::set<std::size_t> taken;
    for (const auto& s : sel.selected) {
      chosen.add(s.tree, pseudo_provenance(it));
      taken.insert(s.id);
    }
    next.treebank.append(chosen);
    next.selected.append(chosen);
    if (cfg_.mode == RunMode::kVanilla) {
      for (std::size_t i = 0; i < state.pool.size(); ++i)
        if (!taken.count(i)) next.pool.push_back(state.pool[i]);
    }
    next.rule_dist = build_rule_distribution(next.treebank);

    m.selected = sel.selected.size();
    m.treebank_size = next.treebank.size();
    if (!sel.selected.empty()) {
      double conf = 0, td = 0, gd = 0, tds = 0, gds = 0;
      for (const auto& s : sel.selected) {
        conf += s.confidence;
        td += s.token_distance;
        gd += s.grs_distance;
        tds += s.token_distance_source;
        gds += s.grs_distance_source;
      }
      const double n = static_cast<double>(sel.selected.size());
      m.mean_confidence = conf / n;
      m.mean_token_distance = td / n;
      m.mean_grs_distance = gd / n;
      m.mean_token_distance_source = tds / n;
      m.mean_grs_distance_source = gds / n;
      m.js_to_source = measure_domain_distance(chosen, in_.source);
      if (in_.target_trees && !in_.target_trees->empty())
        m.js_to_target = measure_domain_distance(chosen, *in_.target_trees);
      else if (in_.target_sentences && !in_.target_sentences->empty())
        m.js_to_target = measure_domain_distance(chosen, *in_.target_sentences);
    }

    // 7. evaluate the parser trained this iteration
    if (in_.eval) m.eval = evaluate(model, *in_.eval);

    log_info("stage=update iteration=", it, " selected=", m.selected, " treebank=", m.treebank_size,
             m.eval ? " f1=" + std::to_string(m.eval->f1()) : std::string());
    next.metrics = state.metrics;
    next.metrics.push_back(std::move(m));
    return next;
  }

  BracketScore evaluate(const Pcfg& model, const Treebank& gold) const {
    std::vector<Sentence> sents;
    sents.reserve(gold.size());
    for (const auto& t : gold.trees) sents.push_back(t.tokens());
    PoolParse parsed = parse_pool(model, sents, cfg_.threads);
    std::vector<std::optional<ConstTree>> pred(gold.size());
    for (std::size_t r = 0; r < parsed.results.size(); ++r) pred[parsed.source_index[r]] = std::move(parsed.results[r].tree);
    return score_trees(gold.trees, pred);
  }

  // Folds run_iteration up to cfg.iterations, checkpointing each state, then retrains on the final treebank.
  RunResult run(bool checkpoint = true) const {
    IterationState st = initial_state();
    const std::string ckdir = cfg_.effective_checkpoint_dir();
    if (checkpoint) {
      if (cfg_.resume) {
        if (auto latest = latest_checkpoint(ckdir)) {
          st = load_checkpoint(*latest);
          log_info("stage=resume iteration=", st.iteration, " from=", *latest);
        }
      } else if (fs::exists(ckdir)) {
        for (const auto& e : fs::directory_iterator(ckdir))
          if (e.path().filename().string().rfind("iter_", 0) == 0) fs::remove_all(e.path());
      }
      fs::create_directories(ckdir);
    }
    while (st.iteration < cfg_.iterations) {
      st = run_iteration(st);
      if (checkpoint) save_checkpoint(ckdir, st, cfg_.seed);
    }
    return finish(st);
  }

  RunResult finish(const IterationState& st) const {
    RunResult res;
    res.model = train(st.treebank, cfg_.pcfg);
    res.pseudo_treebank = st.selected;
    res.final_treebank = st.treebank;
    res.metrics = st.metrics;
    if (in_.eval) res.final_eval = evaluate(res.model, *in_.eval);
    return res;
  }

 private:
  RunConfig cfg_;
  RunInputs in_;
  std::shared_ptr<Backend> backend_;
  TokenDistribution source_tokens_;
  RuleDistribution source_rules_;
};

inline nlohmann::json run_summary(const RunConfig& cfg, const RunResult& res) {
  nlohmann::json j;
  j["mode"] = cfg.mode == RunMode::kLlm ? "llm" : "vanilla";
  j["iterations"] = cfg.iterations;
  j["seed"] = cfg.seed;
  j["criterion"] = criterion_name(cfg.selection.criterion);
  j["top_k"] = cfg.selection.top_k;
  j["pseudo_treebank_size"] = res.pseudo_treebank.size();
  j["final_treebank_size"] = res.final_treebank.size();
  j["initial_f1"] = (!res.metrics.empty() && res.metrics.front().eval) ? nlohmann::json(res.metrics.front().eval->f1())
                                                                       : nlohmann::json(nullptr);
  j["final_eval"] = res.final_eval ? res.final_eval->to_json() : nlohmann::json(nullptr);
  return j;
}

// model.json, pseudo_treebank.mrg (+ provenance), treebank.mrg, metrics.jsonl, summary.json.
inline void write_run_outputs(const std::string& dir, const RunConfig& cfg, const RunResult& res) {
  fs::create_directories(dir);
  save_pcfg((fs::path(dir) / "model.json").string(), res.model);
  save_treebank((fs::path(dir) / "pseudo_treebank.mrg").string(), res.pseudo_treebank);
  save_treebank((fs::path(dir) / "treebank.mrg").string(), res.final_treebank);
  write_text_file((fs::path(dir) / "metrics.jsonl").string(), write_metrics_jsonl(res.metrics));
  write_text_file((fs::path(dir) / "summary.json").string(), run_summary(cfg, res).dump(1) + "\n");
}

}  // namespace selftrain
