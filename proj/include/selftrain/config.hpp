#pragma once

// Run configuration: a flat `key = value` file (TOML subset) whose keys are
// mirrored one-to-one by CLI flags. Precedence: flag > file > default.

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "selftrain/error.hpp"
#include "selftrain/generation.hpp"
#include "selftrain/pcfg.hpp"
#include "selftrain/selection.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

enum class RunMode { kLlm, kVanilla };

struct RunConfig {
  RunMode mode = RunMode::kLlm;
  int iterations = 4;
  std::uint64_t seed = 0;
  SelectionConfig selection;
  GenerationConfig generation;
  PcfgOptions pcfg;

  std::string source_treebank;
  std::string target_samples;  // small raw target corpus shown to the generator
  std::string vanilla_pool_path;
  std::size_t pool_size = 40000;
  std::string eval_treebank_path;
  std::string target_reference_path;  // trees or sentences; defaults to the eval treebank

  std::string backend = "mock";  // mock | http
  std::string endpoint;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string mock_grammar;
  std::string mock_base_grammar;

  std::string output_dir = "run";
  std::string checkpoint_dir;  // default: <output_dir>/checkpoints
  bool resume = true;
  unsigned threads = 0;

  std::string effective_checkpoint_dir() const {
    return checkpoint_dir.empty() ? output_dir + "/checkpoints" : checkpoint_dir;
  }

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1 (got " + std::to_string(iterations) + ")");
    if (source_treebank.empty()) throw ConfigError("missing required key 'source_treebank'");
    if (selection.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (!(selection.grsconf_pool_factor >= 1.0)) throw ConfigError("grsconf_pool_factor must be >= 1");
    if (pcfg.rare_threshold < 0) throw ConfigError("rare_threshold must be >= 0");
    if (mode == RunMode::kLlm) {
      generation.validate();
      if (backend == "mock") {
        if (mock_grammar.empty()) throw ConfigError("backend 'mock' requires key 'mock_grammar'");
      } else if (backend == "http") {
        if (endpoint.empty()) throw ConfigError("backend 'http' requires key 'endpoint'");
      } else {
        throw ConfigError("unknown backend '" + backend + "' (expected mock or http)");
      }
    } else {
      if (vanilla_pool_path.empty()) throw ConfigError("vanilla mode requires key 'vanilla_pool_path'");
      if (pool_size < 1) throw ConfigError("pool_size must be >= 1");
    }
  }
};

namespace detail {

inline long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  auto x = to_integer(key, v);
  if (x < 0) throw ConfigError("key '" + key + "' must be non-negative, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> apply;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys = {
      {"mode", "llm | vanilla",
       [](RunConfig& c, const std::string& v) {
         if (v == "llm" || v == "llm-enhanced") c.mode = RunMode::kLlm;
         else if (v == "vanilla") c.mode = RunMode::kVanilla;
         else throw ConfigError("key 'mode' expects llm or vanilla, got '" + v + "'");
       }},
      {"iterations", "self-training iterations (>= 1)",
       [](RunConfig& c, const std::string& v) { c.iterations = static_cast<int>(to_integer("iterations", v)); }},
      {"seed", "seed for every stochastic choice",
       [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_count("seed", v)); }},
      {"criterion", "Token | Conf | GRs | GRsConf",
       [](RunConfig& c, const std::string& v) { c.selection.criterion = parse_criterion(v); }},
      {"top_k", "pseudo-trees selected per iteration",
       [](RunConfig& c, const std::string& v) { c.selection.top_k = to_count("top_k", v); }},
      {"grsconf_pool_factor", "GRsConf pre-filter size as a multiple of top_k",
       [](RunConfig& c, const std::string& v) { c.selection.grsconf_pool_factor = to_real("grsconf_pool_factor", v); }},
      {"rare_threshold", "max training count of a token feeding the unknown-word model",
       [](RunConfig& c, const std::string& v) { c.pcfg.rare_threshold = static_cast<int>(to_integer("rare_threshold", v)); }},
      {"source_treebank", "bracketed source treebank",
       [](RunConfig& c, const std::string& v) { c.source_treebank = v; }},
      {"target_samples", "raw target sentences used as prompt examples",
       [](RunConfig& c, const std::string& v) { c.target_samples = v; }},
      {"vanilla_pool_path", "raw sentence file for vanilla mode",
       [](RunConfig& c, const std::string& v) { c.vanilla_pool_path = v; }},
      {"pool_size", "sentences sampled from the vanilla raw corpus",
       [](RunConfig& c, const std::string& v) { c.pool_size = to_count("pool_size", v); }},
      {"eval_treebank_path", "held-out gold trees for per-iteration F1",
       [](RunConfig& c, const std::string& v) { c.eval_treebank_path = v; }},
      {"target_reference_path", "target trees or sentences for distance tracking",
       [](RunConfig& c, const std::string& v) { c.target_reference_path = v; }},
      {"backend", "mock | http", [](RunConfig& c, const std::string& v) { c.backend = v; }},
      {"endpoint", "chat-completions URL for the http backend",
       [](RunConfig& c, const std::string& v) { c.endpoint = v; }},
      {"model", "model name sent to the backend", [](RunConfig& c, const std::string& v) { c.generation.model = v; }},
      {"api_key_env", "environment variable holding the API key",
       [](RunConfig& c, const std::string& v) { c.api_key_env = v; }},
      {"mock_grammar", "weighted grammar sampled by the mock backend",
       [](RunConfig& c, const std::string& v) { c.mock_grammar = v; }},
      {"mock_base_grammar", "optional grammar the mock drifts away from over the iterations",
       [](RunConfig& c, const std::string& v) { c.mock_base_grammar = v; }},
      {"temperature", "sampling temperature",
       [](RunConfig& c, const std::string& v) { c.generation.temperature = to_real("temperature", v); }},
      {"corpus_size", "generated sentences per iteration",
       [](RunConfig& c, const std::string& v) { c.generation.corpus_size = to_count("corpus_size", v); }},
      {"min_len", "minimum tokens per generated sentence",
       [](RunConfig& c, const std::string& v) { c.generation.min_len = to_count("min_len", v); }},
      {"max_len", "maximum tokens per generated sentence",
       [](RunConfig& c, const std::string& v) { c.generation.max_len = to_count("max_len", v); }},
      {"m_sentences", "example sentences per prompt",
       [](RunConfig& c, const std::string& v) { c.generation.m_sentences = to_count("m_sentences", v); }},
      {"domain_name", "target domain name used when no examples exist",
       [](RunConfig& c, const std::string& v) { c.generation.domain_name = v; }},
      {"attempt_factor", "request budget as a multiple of corpus_size",
       [](RunConfig& c, const std::string& v) { c.generation.attempt_factor = to_count("attempt_factor", v); }},
      {"max_in_flight", "concurrent backend requests",
       [](RunConfig& c, const std::string& v) { c.generation.max_in_flight = to_count("max_in_flight", v); }},
      {"retry_budget", "retries per request on transport failure",
       [](RunConfig& c, const std::string& v) { c.generation.retry_budget = to_count("retry_budget", v); }},
      {"retry_base_delay_ms", "first retry delay; doubles each retry",
       [](RunConfig& c, const std::string& v) { c.generation.retry_base_delay_ms = to_count("retry_base_delay_ms", v); }},
      {"output_dir", "directory for model, pseudo-treebank and metrics",
       [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"checkpoint_dir", "per-iteration checkpoints (default <output_dir>/checkpoints)",
       [](RunConfig& c, const std::string& v) { c.checkpoint_dir = v; }},
      {"resume", "continue from the latest checkpoint if present",
       [](RunConfig& c, const std::string& v) { c.resume = to_bool("resume", v); }},
      {"threads", "parser worker threads (0 = hardware)",
       [](RunConfig& c, const std::string& v) { c.threads = static_cast<unsigned>(to_count("threads", v)); }},
  };
  return keys;
}

// Parses `key = value` lines. '#' starts a comment; values may be double-quoted.
inline std::map<std::string, std::string> parse_flat_config(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      if (c == '#' && !quoted) break;
      body += c;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[')
      throw ConfigError("config line " + std::to_string(lineno) + ": sections are not supported (flat keys only)");
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = value;
  }
  return out;
}

// Applies settings over the defaults; unknown keys are rejected.
inline RunConfig run_config_from(const std::map<std::string, std::string>& settings) {
  RunConfig cfg;
  std::map<std::string, const ConfigKey*> table;
  for (const auto& k : config_keys()) table[k.name] = &k;
  for (const auto& [key, value] : settings) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second->apply(cfg, value);
  }
  return cfg;
}

// Later maps win.
inline std::map<std::string, std::string> merge_settings(std::map<std::string, std::string> base,
                                                         const std::map<std::string, std::string>& overrides) {
  for (const auto& [k, v] : overrides) base[k] = v;
  return base;
}

}  // namespace selftrain
