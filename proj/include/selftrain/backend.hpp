#pragma once

// Chat-completion providers: an OpenAI-compatible HTTP client and an offline
// grammar-sampling mock.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "selftrain/error.hpp"
#include "selftrain/rng.hpp"
#include "selftrain/sampler.hpp"
#include "selftrain/tree.hpp"

namespace selftrain {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct CompletionRequest {
  std::string model;
  double temperature = 0.0;
  std::vector<ChatMessage> messages;
  // Stable identity of the request within a run; deterministic backends seed from it.
  std::uint64_t request_id = 0;
  int iteration = 0;
};

// Implementations must be safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  // Returns the completion text. Throws TransportError or MalformedCompletion.
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string name() const = 0;
};

inline nlohmann::json to_wire(const CompletionRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model}, {"temperature", req.temperature}, {"messages", msgs}};
}

// Content of the first choice's message.
inline std::string completion_from_wire(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedCompletion(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw MalformedCompletion("response has no choices");
  const auto& first = j["choices"][0];
  if (!first.contains("message") || !first["message"].contains("content") || !first["message"]["content"].is_string())
    throw MalformedCompletion("first choice has no message content");
  return first["message"]["content"].get<std::string>();
}

struct Endpoint {
  std::string scheme_host;  // "http://localhost:8080"
  std::string path;         // "/v1/chat/completions"
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, slash), url.substr(slash)};
}

class ChatCompletionsBackend : public Backend {
 public:
  ChatCompletionsBackend(std::string url, std::string api_key_env = "OPENAI_API_KEY", int timeout_seconds = 60)
      : endpoint_(split_endpoint(url)), url_(std::move(url)), timeout_seconds_(timeout_seconds) {
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
  }

  std::string complete(const CompletionRequest& request) override {
    httplib::Client client(endpoint_.scheme_host);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(endpoint_.path, headers, to_wire(request).dump(), "application/json");
    if (!res) throw TransportError("request to " + url_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("request to " + url_ + " returned HTTP " + std::to_string(res->status));
    return completion_from_wire(res->body);
  }

  std::string name() const override { return "http:" + url_; }

 private:
  Endpoint endpoint_;
  std::string url_;
  std::string api_key_;
  int timeout_seconds_;
};

// Reads "L1 ∼ L2 words" back out of a rendered prompt.
inline std::optional<std::pair<std::size_t, std::size_t>> prompt_length_bounds(std::string_view prompt) {
  static constexpr std::string_view kSep = " ∼ ";
  const auto at = prompt.find(kSep);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t b = at;
  while (b > 0 && std::isdigit(static_cast<unsigned char>(prompt[b - 1]))) --b;
  std::size_t e = at + kSep.size();
  std::size_t f = e;
  while (f < prompt.size() && std::isdigit(static_cast<unsigned char>(prompt[f]))) ++f;
  if (b == at || f == e) return std::nullopt;
  return std::make_pair(std::stoul(std::string(prompt.substr(b, at - b))), std::stoul(std::string(prompt.substr(e, f - e))));
}

// Offline provider that samples sentences from a weighted grammar.
//
// With a base grammar, iteration i draws from the target grammar with
// probability min(1, i / ramp_iterations) and from the base otherwise, so
// successive iterations drift from the base domain toward the target.
// Responses honour the prompt's length bounds when a few redraws allow it.
class MockBackend : public Backend {
 public:
  MockBackend(WeightedGrammar target, std::uint64_t seed) : target_(std::move(target)), seed_(seed) {}
  MockBackend(WeightedGrammar target, std::uint64_t seed, WeightedGrammar base, int ramp_iterations)
      : target_(std::move(target)), base_(std::move(base)), seed_(seed), ramp_(std::max(1, ramp_iterations)) {}

  double target_share(int iteration) const {
    if (!base_) return 1.0;
    return std::clamp(static_cast<double>(iteration) / static_cast<double>(ramp_), 0.0, 1.0);
  }

  std::string complete(const CompletionRequest& request) override {
    SeededRng rng(mix_seed(seed_, request.request_id));
    const WeightedGrammar& g = (base_ && !(rng.uniform() < target_share(request.iteration))) ? *base_ : target_;
    std::optional<std::pair<std::size_t, std::size_t>> bounds;
    if (!request.messages.empty()) bounds = prompt_length_bounds(request.messages.back().content);
    std::vector<std::string> words;
    for (int attempt = 0; attempt < 8; ++attempt) {
      words = g.sample_sentence(rng);
      if (!bounds || (words.size() >= bounds->first && words.size() <= bounds->second)) break;
    }
    return sentence_text(words);
  }

  std::string name() const override { return "mock"; }

 private:
  WeightedGrammar target_;
  std::optional<WeightedGrammar> base_;
  std::uint64_t seed_;
  int ramp_ = 1;
};

}  // namespace selftrain
