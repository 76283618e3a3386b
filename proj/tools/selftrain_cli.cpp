// selftrain: command-line front end for the self-training toolkit.
//
//   selftrain train      --treebank S.mrg --out model.json
//   selftrain parse      --model model.json --input raw.txt --out parsed.mrg
//   selftrain generate   --source_treebank S.mrg --backend mock --mock_grammar g.txt --out gen.jsonl
//   selftrain select     --treebank S.mrg --candidates parsed.mrg --criterion GRsConf --top_k 100 --out sel.mrg
//   selftrain self-train --config run.toml [--key value ...]
//   selftrain score      --gold gold.mrg --pred parsed.mrg
//   selftrain report     RUN_DIR
//   selftrain validate   FILE...
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "selftrain/selftrain.hpp"

namespace st = selftrain;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return key;
}

// Registers every run-config key as "--key" (and "--key-with-dashes") on a subcommand.
void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& sink) {
  for (const auto& key : st::config_keys()) {
    std::string names = "--" + key.name;
    if (dashed(key.name) != key.name) names += ",--" + dashed(key.name);
    cmd->add_option_function<std::string>(
        names, [&sink, name = key.name](const std::string& v) { sink[name] = v; }, key.help);
  }
}

std::string default_path(const std::string& given, const std::string& fallback) { return given.empty() ? fallback : given; }

struct ScoreRecord {
  std::size_t index;
  double log_prob;
  double confidence;
};

std::vector<ScoreRecord> read_scores(const std::string& path) {
  std::vector<ScoreRecord> out;
  std::istringstream in(st::read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (st::split_whitespace(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("index"), j.at("log_prob"), j.at("confidence")});
    } catch (const nlohmann::json::exception& e) {
      throw st::ValidationError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string scores_path_for(const std::string& trees_path) { return trees_path + ".scores.jsonl"; }

int cmd_train(const std::string& treebank, const std::string& out, int rare_threshold, const std::string& start) {
  st::PcfgOptions opts;
  opts.rare_threshold = rare_threshold;
  opts.start_symbol = start;
  const auto tb = st::load_treebank(treebank);
  const auto model = st::train(tb, opts);
  st::save_pcfg(out, model);
  st::log_info("stage=train trees=", tb.size(), " symbols=", model.num_symbols(), " out=", out);
  return 0;
}

int cmd_parse(const std::string& model_path, const std::string& input, const std::string& out,
              const std::string& scores, unsigned threads, double beam) {
  const auto model = st::load_pcfg(model_path);
  const auto sentences = st::load_sentences(input);
  st::ParserOptions popts;
  popts.beam = beam;
  const auto parsed = st::parse_pool(model, sentences, threads, popts);
  std::vector<st::ConstTree> trees;
  std::string score_lines;
  for (std::size_t r = 0; r < parsed.results.size(); ++r) {
    trees.push_back(parsed.results[r].tree);
    score_lines += nlohmann::json{{"index", parsed.source_index[r]},
                                  {"log_prob", parsed.results[r].log_prob},
                                  {"confidence", parsed.results[r].confidence}}
                       .dump() +
                   "\n";
  }
  st::write_text_file(out, st::write_bracketed(trees));
  st::write_text_file(default_path(scores, scores_path_for(out)), score_lines);
  st::log_info("stage=parse sentences=", sentences.size(), " parsed=", parsed.results.size(),
               " no_parse=", parsed.no_parse.size());
  if (!parsed.no_parse.empty()) {
    std::string idx;
    for (std::size_t i = 0; i < parsed.no_parse.size(); ++i) idx += (i ? "," : "") + std::to_string(parsed.no_parse[i]);
    st::log_info("stage=parse no_parse_indices=", idx);
  }
  return 0;
}

int cmd_generate(const std::map<std::string, std::string>& settings, const std::string& config_path, int iteration,
                 const std::string& out) {
  std::map<std::string, std::string> file;
  if (!config_path.empty()) file = st::parse_flat_config(st::read_text_file(config_path));
  auto cfg = st::run_config_from(st::merge_settings(file, settings));
  cfg.mode = st::RunMode::kLlm;
  if (cfg.source_treebank.empty()) throw st::ConfigError("missing required key 'source_treebank'");
  cfg.generation.validate();
  if (cfg.backend == "mock" && cfg.mock_grammar.empty()) throw st::ConfigError("backend 'mock' requires key 'mock_grammar'");
  if (cfg.backend == "http" && cfg.endpoint.empty()) throw st::ConfigError("backend 'http' requires key 'endpoint'");
  const auto tb = st::load_treebank(cfg.source_treebank);
  std::vector<std::string> samples;
  if (!cfg.target_samples.empty())
    for (const auto& s : st::load_sentences(cfg.target_samples)) samples.push_back(st::sentence_text(s));
  auto backend = st::make_backend(cfg);
  st::SeededRng rng(st::mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration)));
  auto res = st::generate_corpus(cfg.generation, *backend, st::build_rule_distribution(tb), st::avg_sentence_length(tb),
                                 samples, rng, iteration);
  st::write_text_file(out, st::write_generated_jsonl(res.sentences));
  return 0;
}

int cmd_select(const std::string& treebank, const std::string& candidates, const std::string& scores,
               const std::string& criterion, std::size_t top_k, double factor, int iteration, const std::string& out,
               const std::string& report) {
  st::SelectionConfig cfg;
  cfg.criterion = st::parse_criterion(criterion);
  cfg.top_k = top_k;
  cfg.grsconf_pool_factor = factor;
  if (top_k < 1) throw st::ConfigError("top_k must be >= 1");
  const auto tb = st::load_treebank(treebank);
  const auto cands = st::parse_bracketed(st::read_text_file(candidates));
  const auto score_recs = read_scores(default_path(scores, scores_path_for(candidates)));
  if (score_recs.size() != cands.size())
    throw st::ValidationError("candidate trees (" + std::to_string(cands.size()) + ") and score records (" +
                              std::to_string(score_recs.size()) + ") differ in count");
  const auto tokens = st::build_token_distribution(tb);
  const auto rules = st::build_rule_distribution(tb);
  std::vector<st::PseudoInstance> insts;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    st::PseudoInstance inst;
    inst.id = score_recs[i].index;
    inst.sentence = cands[i].tokens();
    inst.tree = cands[i];
    inst.confidence = score_recs[i].confidence;
    st::score_against(inst, tokens, rules);
    inst.token_distance_source = inst.token_distance;
    inst.grs_distance_source = inst.grs_distance;
    insts.push_back(std::move(inst));
  }
  const auto sel = st::rank_and_select(insts, cfg);
  std::vector<st::ConstTree> chosen;
  for (const auto& s : sel.selected) chosen.push_back(s.tree);
  st::write_text_file(out, st::write_bracketed(chosen));
  st::write_text_file(default_path(report, out + ".selection.jsonl"),
                      st::write_selection_report(sel, cfg.criterion, iteration));
  st::log_info("stage=select candidates=", insts.size(), " selected=", sel.selected.size(),
               " criterion=", st::criterion_name(cfg.criterion));
  return 0;
}

int cmd_self_train(const std::map<std::string, std::string>& settings, const std::string& config_path) {
  std::map<std::string, std::string> file;
  if (!config_path.empty()) file = st::parse_flat_config(st::read_text_file(config_path));
  const auto cfg = st::run_config_from(st::merge_settings(file, settings));
  cfg.validate();
  auto inputs = st::load_run_inputs(cfg);
  auto backend = st::make_backend(cfg);
  st::SelfTrainer trainer(cfg, std::move(inputs), backend);
  const auto result = trainer.run();
  st::write_run_outputs(cfg.output_dir, cfg, result);
  st::log_info("stage=done out=", cfg.output_dir, " pseudo_trees=", result.pseudo_treebank.size());
  return 0;
}

// Aligns predictions to gold by the index sidecar when the prediction has fewer trees.
int cmd_score(const std::string& gold_path, const std::string& pred_path, const std::string& json_out) {
  const auto gold = st::load_treebank(gold_path).trees;
  const auto pred_trees = st::parse_bracketed(st::read_text_file(pred_path));
  std::vector<std::optional<st::ConstTree>> pred(gold.size());
  const std::string sidecar = scores_path_for(pred_path);
  if (pred_trees.size() != gold.size() && fs::exists(sidecar)) {
    const auto recs = read_scores(sidecar);
    if (recs.size() != pred_trees.size()) throw st::ValidationError("score sidecar does not match prediction count");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].index >= gold.size()) throw st::AlignmentError("prediction index out of range", recs[i].index);
      pred[recs[i].index] = pred_trees[i];
    }
  } else {
    if (pred_trees.size() != gold.size())
      throw st::AlignmentError("gold has " + std::to_string(gold.size()) + " trees, prediction has " +
                                   std::to_string(pred_trees.size()) + " and no index sidecar",
                               std::min(gold.size(), pred_trees.size()));
    for (std::size_t i = 0; i < gold.size(); ++i) pred[i] = pred_trees[i];
  }
  const auto score = st::score_trees(gold, pred);
  std::cout << score.summary() << '\n';
  if (!json_out.empty()) st::write_text_file(json_out, score.to_json().dump(1) + "\n");
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const auto metrics = st::load_run_metrics(run_dir);
  const auto table = st::build_report(metrics);
  const std::string text = st::to_text(table);
  st::write_text_file((fs::path(run_dir) / "report.csv").string(), st::to_csv(table));
  st::write_text_file((fs::path(run_dir) / "report.txt").string(), text);
  std::cout << text;
  return 0;
}

int cmd_validate(const std::vector<std::string>& files) {
  int bad = 0;
  for (const auto& f : files) {
    try {
      const auto tb = st::load_treebank(f);
      std::size_t tokens = 0, nodes = 0;
      for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto& t = tb.trees[i];
        if (auto problem = st::check_tree(t); !problem.empty())
          throw st::ValidationError("tree " + std::to_string(i) + ": " + problem);
        if (st::debinarize(st::binarize(t)) != t)
          throw st::ValidationError("tree " + std::to_string(i) + ": binarization is not invertible");
        tokens += t.size();
        nodes += st::count_internal_nodes(t);
      }
      std::cout << f << ": ok trees=" << tb.size() << " tokens=" << tokens << " nodes=" << nodes << '\n';
    } catch (const st::Error& e) {
      std::cout << f << ": INVALID " << e.what() << '\n';
      ++bad;
    }
  }
  return bad ? kExitRuntime : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCFG self-training toolkit"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "only warnings and errors on stderr");
  app.add_flag("-v,--verbose", verbose, "debug output on stderr");

  std::string treebank, out, model, input, scores, start, criterion = "GRsConf", candidates, report, gold, pred,
                                                         json_out, config_path, run_dir;
  int rare_threshold = 1, iteration = 0;
  unsigned threads = 0;
  double beam = std::numeric_limits<double>::infinity(), factor = 2.0;
  std::size_t top_k = 2000;
  std::vector<std::string> files;
  std::map<std::string, std::string> gen_settings, run_settings;

  auto* train = app.add_subcommand("train", "estimate a PCFG from a treebank");
  train->add_option("--treebank", treebank, "bracketed training trees")->required();
  train->add_option("--out", out, "model JSON to write")->required();
  train->add_option("--rare_threshold,--rare-threshold", rare_threshold, "unknown-word model threshold");
  train->add_option("--start_symbol,--start-symbol", start, "start symbol (default: shared root label)");

  auto* parse = app.add_subcommand("parse", "parse raw sentences with a trained model");
  parse->add_option("--model", model, "model JSON")->required();
  parse->add_option("--input", input, "one whitespace-tokenized sentence per line")->required();
  parse->add_option("--out", out, "parsed trees (parseable sentences only)")->required();
  parse->add_option("--scores", scores, "JSON-lines {index, log_prob, confidence} (default <out>.scores.jsonl)");
  parse->add_option("--threads", threads, "worker threads (0 = hardware)");
  parse->add_option("--beam", beam, "prune chart entries this many nats below the cell best");

  auto* generate = app.add_subcommand("generate", "generate a raw target corpus through a backend");
  generate->add_option("--config", config_path, "flat key = value config file");
  generate->add_option("--iteration", iteration, "iteration tag for request ids and output");
  generate->add_option("--out", out, "JSON-lines output")->required();
  add_config_flags(generate, gen_settings);

  auto* select = app.add_subcommand("select", "rank parsed candidates and keep the top k");
  select->add_option("--treebank", treebank, "current treebank S")->required();
  select->add_option("--candidates", candidates, "parsed candidate trees")->required();
  select->add_option("--scores", scores, "score sidecar (default <candidates>.scores.jsonl)");
  select->add_option("--criterion", criterion, "Token | Conf | GRs | GRsConf");
  select->add_option("--top_k,--top-k", top_k, "number of trees to keep");
  select->add_option("--grsconf_pool_factor,--grsconf-pool-factor", factor, "GRsConf pre-filter multiplier");
  select->add_option("--iteration", iteration, "iteration tag for the report");
  select->add_option("--out", out, "selected trees")->required();
  select->add_option("--report", report, "selection report (default <out>.selection.jsonl)");

  auto* self_train = app.add_subcommand("self-train", "run the full self-training loop");
  self_train->add_option("--config", config_path, "flat key = value config file");
  add_config_flags(self_train, run_settings);

  auto* score = app.add_subcommand("score", "labeled-bracket P/R/F1 against gold trees");
  score->add_option("--gold", gold, "gold trees")->required();
  score->add_option("--pred", pred, "predicted trees")->required();
  score->add_option("--json", json_out, "also write the score as JSON");

  auto* rep = app.add_subcommand("report", "per-iteration tables from a run directory");
  rep->add_option("run_dir", run_dir, "output directory of self-train")->required();

  auto* validate = app.add_subcommand("validate", "check treebank files");
  validate->add_option("files", files, "treebank files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (quiet) st::set_log_level(st::LogLevel::kWarning);
  if (verbose) st::set_log_level(st::LogLevel::kDebug);

  try {
    if (*train) return cmd_train(treebank, out, rare_threshold, start);
    if (*parse) return cmd_parse(model, input, out, scores, threads, beam);
    if (*generate) return cmd_generate(gen_settings, config_path, iteration, out);
    if (*select) return cmd_select(treebank, candidates, scores, criterion, top_k, factor, iteration, out, report);
    if (*self_train) return cmd_self_train(run_settings, config_path);
    if (*score) return cmd_score(gold, pred, json_out);
    if (*rep) return cmd_report(run_dir);
    if (*validate) return cmd_validate(files);
  } catch (const st::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
