#pragma once

// Raw target-domain corpus generation: one prompt per request, freshly sampled
// each time, responses filtered by length and de-duplicated.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <future>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "selftrain/backend.hpp"
#include "selftrain/error.hpp"
#include "selftrain/grammar.hpp"
#include "selftrain/log.hpp"
#include "selftrain/prompt.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

struct GenerationConfig {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::size_t corpus_size = 10000;
  std::size_t min_len = 3;
  std::size_t max_len = 100;
  std::size_t m_sentences = kDefaultExampleCount;
  std::string domain_name = "target";
  // Requests allowed per iteration = attempt_factor * corpus_size.
  std::size_t attempt_factor = 3;
  std::size_t max_in_flight = 4;
  // Transport failures are retried this many times with doubling delays.
  std::size_t retry_budget = 3;
  std::size_t retry_base_delay_ms = 500;

  void validate() const {
    if (corpus_size < 1) throw ConfigError("corpus_size must be >= 1");
    if (!(min_len < max_len)) throw ConfigError("min_len must be < max_len");
    if (m_sentences < 1) throw ConfigError("m_sentences must be >= 1");
    if (attempt_factor < 1) throw ConfigError("attempt_factor must be >= 1");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  }
};

struct GeneratedSentence {
  std::vector<std::string> tokens;
  int iteration = 0;
  std::uint64_t prompt_id = 0;
  std::size_t n_rules = 0;
  std::size_t len_lo = 0;
  std::size_t len_hi = 0;
  std::string raw_response;

  std::string text() const { return sentence_text(tokens); }
};

struct GenerationStats {
  std::size_t requests = 0;
  std::size_t transport_failures = 0;  // requests skipped after the retry budget
  std::size_t retries = 0;
  std::size_t malformed = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t duplicates = 0;
  std::size_t accepted = 0;
  bool partial = false;

  nlohmann::json to_json() const {
    return {{"requests", requests},     {"transport_failures", transport_failures},
            {"retries", retries},       {"malformed", malformed},
            {"too_short", too_short},   {"too_long", too_long},
            {"duplicates", duplicates}, {"accepted", accepted},
            {"partial", partial}};
  }
};

struct GenerationResult {
  std::vector<GeneratedSentence> sentences;
  GenerationStats stats;
};

// First non-empty line, with list numbering ("3. ", "3) ") and wrapping quotes removed, whitespace-tokenized.
inline std::vector<std::string> clean_completion(std::string_view text) {
  std::string line;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view cand = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!split_whitespace(cand).empty()) {
      line = std::string(cand);
      break;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  auto toks = split_whitespace(line);
  if (!toks.empty()) {
    const std::string& f = toks.front();
    std::size_t d = 0;
    while (d < f.size() && std::isdigit(static_cast<unsigned char>(f[d]))) ++d;
    if (d > 0 && d + 1 == f.size() && (f[d] == '.' || f[d] == ')')) toks.erase(toks.begin());
  }
  if (!toks.empty() && toks.front().size() > 1 && toks.front().front() == '"') toks.front().erase(0, 1);
  if (!toks.empty() && toks.back().size() > 1 && toks.back().back() == '"') toks.back().pop_back();
  return toks;
}

inline std::uint64_t make_request_id(int iteration, std::size_t attempt) {
  return (static_cast<std::uint64_t>(iteration) << 32) | static_cast<std::uint64_t>(attempt);
}

namespace detail {

struct Outcome {
  std::string content;
  std::size_t retries = 0;
  bool transport_failed = false;
  bool malformed = false;
};

inline Outcome call_with_retry(Backend& backend, const CompletionRequest& req, const GenerationConfig& cfg) {
  Outcome out;
  std::size_t delay = cfg.retry_base_delay_ms;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      out.content = backend.complete(req);
      return out;
    } catch (const MalformedCompletion& e) {
      log_debug("stage=generate request=", req.request_id, " malformed: ", e.what());
      out.malformed = true;
      return out;
    } catch (const TransportError& e) {
      if (attempt >= cfg.retry_budget) {
        log_warning("stage=generate request=", req.request_id, " skipped after ", attempt + 1, " attempts: ", e.what());
        out.transport_failed = true;
        return out;
      }
      ++out.retries;
      if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }
}

}  // namespace detail

// Draws M example sentences without replacement.
template <RandomSource Rng>
std::vector<std::string> sample_examples(const std::vector<std::string>& pool, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t take = std::min(m, pool.size());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t remaining = idx.size() - i;
    std::size_t j = i + std::min(remaining - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(remaining)));
    std::swap(idx[i], idx[j]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

// Prompts are sampled on the calling thread in issue order and responses are
// consumed in the same order, so the output depends only on the rng and the
// backend's per-request answers, never on completion timing.
template <RandomSource Rng>
GenerationResult generate_corpus(const GenerationConfig& cfg, Backend& backend, const RuleDistribution& rule_dist,
                                 double avg_len, const std::vector<std::string>& target_samples, Rng& rng,
                                 int iteration = 0) {
  cfg.validate();
  GenerationResult result;
  auto& st = result.stats;
  std::unordered_set<std::string> seen;
  const std::size_t budget = cfg.attempt_factor * cfg.corpus_size;
  std::size_t issued = 0;

  struct Pending {
    PromptSpec spec;
    CompletionRequest request;
  };

  while (result.sentences.size() < cfg.corpus_size && issued < budget) {
    const std::size_t batch = std::min(cfg.max_in_flight, budget - issued);
    std::vector<Pending> pending;
    pending.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      Pending p;
      p.spec = sample_prompt_params(rule_dist, avg_len, rng, {cfg.min_len, cfg.max_len});
      p.spec.sample_sentences = sample_examples(target_samples, cfg.m_sentences, rng);
      p.spec.m_sentences = p.spec.sample_sentences.size();
      p.spec.domain_name = cfg.domain_name;
      p.request.model = cfg.model;
      p.request.temperature = cfg.temperature;
      p.request.messages = {{"user", build_prompt(p.spec)}};
      p.request.request_id = make_request_id(iteration, issued + b);
      p.request.iteration = iteration;
      pending.push_back(std::move(p));
    }
    issued += batch;

    std::vector<detail::Outcome> outcomes(batch);
    if (batch == 1) {
      outcomes[0] = detail::call_with_retry(backend, pending[0].request, cfg);
    } else {
      std::vector<std::future<detail::Outcome>> futures;
      futures.reserve(batch);
      for (std::size_t b = 0; b < batch; ++b)
        futures.push_back(std::async(std::launch::async, [&, b] { return detail::call_with_retry(backend, pending[b].request, cfg); }));
      for (std::size_t b = 0; b < batch; ++b) outcomes[b] = futures[b].get();
    }

    for (std::size_t b = 0; b < batch && result.sentences.size() < cfg.corpus_size; ++b) {
      const auto& o = outcomes[b];
      ++st.requests;
      st.retries += o.retries;
      if (o.transport_failed) {
        ++st.transport_failures;
        continue;
      }
      auto toks = o.malformed ? std::vector<std::string>{} : clean_completion(o.content);
      if (toks.empty()) {
        ++st.malformed;
        continue;
      }
      if (toks.size() < cfg.min_len) {
        ++st.too_short;
        continue;
      }
      if (toks.size() > cfg.max_len) {
        ++st.too_long;
        continue;
      }
      if (!seen.insert(sentence_text(toks)).second) {
        ++st.duplicates;
        continue;
      }
      GeneratedSentence s;
      s.tokens = std::move(toks);
      s.iteration = iteration;
      s.prompt_id = pending[b].request.request_id;
      s.n_rules = pending[b].spec.n_rules;
      s.len_lo = pending[b].spec.len_lo;
      s.len_hi = pending[b].spec.len_hi;
      s.raw_response = o.content;
      result.sentences.push_back(std::move(s));
    }
  }
  st.accepted = result.sentences.size();
  if (st.accepted < cfg.corpus_size) {
    st.partial = true;
    log_warning("stage=generate iteration=", iteration, " attempt budget exhausted: ", st.accepted, "/",
                cfg.corpus_size, " sentences after ", st.requests, " requests");
  }
  log_info("stage=generate iteration=", iteration, " requests=", st.requests, " accepted=", st.accepted,
           " duplicates=", st.duplicates, " filtered=", st.too_short + st.too_long, " failed=",
           st.transport_failures + st.malformed);
  return result;
}

inline nlohmann::json to_json(const GeneratedSentence& s) {
  return {{"text", s.text()},
          {"iteration", s.iteration},
          {"prompt_id", s.prompt_id},
          {"n_rules", s.n_rules},
          {"len_bounds", {s.len_lo, s.len_hi}}};
}

inline std::string write_generated_jsonl(const std::vector<GeneratedSentence>& sents) {
  std::string out;
  for (const auto& s : sents) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

}  // namespace selftrain
