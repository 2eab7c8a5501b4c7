#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/embeddings.hpp"
#include "frugal/errors.hpp"
#include "frugal/hashing.hpp"
#include "frugal/tokenizer.hpp"
#include "frugal/transport.hpp"

namespace frugal {

struct RetryPolicy {
  int max_attempts = 4;  // total attempts, first one included
  int backoff_base_ms = 500;
  int backoff_cap_ms = 30000;

  /// Delay before attempt `attempt + 1`, given that `attempt` (1-based) failed.
  int delay_after(int attempt) const {
    const double d = backoff_base_ms * std::pow(2.0, attempt - 1);
    return static_cast<int>(std::min<double>(d, backoff_cap_ms));
  }
};

struct EndpointConfig {
  std::string id = "default";
  std::string base_url;
  std::string model_id;
  std::string api_key_env;  // name of the environment variable holding the key
  int max_parallel = 4;
  RetryPolicy retry;
  int timeout_ms = 60000;
  bool logprobs = false;  // the model exposes token log-probabilities
  bool chat = false;      // generate through /v1/chat/completions
  std::optional<std::size_t> embedding_dim;
};

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 128;

  nlohmann::json to_json() const { return {{"temperature", temperature}, {"max_tokens", max_tokens}}; }
};

struct GenerationResult {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  std::string model_id;
  long latency_ms = 0;
  bool cached = false;
};

struct TokenLogprob {
  std::string token;
  // Absent for the first token of an echoed prompt (it has no context).
  std::optional<double> logprob;
};

/// Raw response bodies keyed by the hex SHA-256 of the canonical request.
/// With a directory, every entry is also persisted as `<dir>/<key>.json`.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(*dir_); }

  std::optional<nlohmann::json> find(const std::string& key) {
    std::lock_guard lock(mu_);
    if (auto it = mem_.find(key); it != mem_.end()) return it->second;
    if (!dir_) return std::nullopt;
    std::ifstream in(*dir_ / (key + ".json"));
    if (!in) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(in);
      mem_.emplace(key, j);
      return j;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // torn write; refetch
    }
  }

  void put(const std::string& key, const nlohmann::json& value) {
    std::lock_guard lock(mu_);
    mem_[key] = value;
    if (!dir_) return;
    const auto final_path = *dir_ / (key + ".json");
    auto tmp = final_path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp);
      out << value.dump();
    }
    std::filesystem::rename(tmp, final_path);
  }

  static std::string key_for(const std::string& path, const nlohmann::json& body) {
    // nlohmann objects iterate in sorted key order, so dump() is canonical.
    return sha256_hex(path + "\n" + body.dump());
  }

 private:
  std::mutex mu_;
  std::optional<std::filesystem::path> dir_;
  std::map<std::string, nlohmann::json> mem_;
};

struct AttemptRecord {
  std::string path;
  int attempt = 0;
  std::string outcome;  // "200", "429", "timeout", ...
  int delay_ms = 0;     // sleep that followed this attempt
};

/// OpenAI-compatible client: generation, echoed log-probabilities and
/// embeddings, with a response cache, retries and a per-endpoint bound on
/// in-flight requests. Safe to share across threads.
class LlmClient {
 public:
  using Sleeper = std::function<void(int /*ms*/)>;

  LlmClient(EndpointConfig cfg, TransportPtr transport, std::shared_ptr<ResponseCache> cache = nullptr,
            Sleeper sleeper = nullptr)
      : cfg_(std::move(cfg)),
        transport_(std::move(transport)),
        cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
        sleeper_(sleeper ? std::move(sleeper) : Sleeper([](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); })),
        slots_(std::max(1, cfg_.max_parallel)) {
    if (cfg_.max_parallel < 1) throw ConfigInvalid("max_parallel must be >= 1");
    if (cfg_.retry.max_attempts < 1) throw ConfigInvalid("retry.max_attempts must be >= 1");
  }

  const EndpointConfig& config() const noexcept { return cfg_; }

  GenerationResult complete(const std::string& prompt, const DecodingParams& params = {}) {
    nlohmann::json body = params.to_json();
    body["model"] = cfg_.model_id;
    std::string path;
    if (cfg_.chat) {
      path = "/v1/chat/completions";
      body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    } else {
      path = "/v1/completions";
      body["prompt"] = prompt;
    }
    const auto start = std::chrono::steady_clock::now();
    auto [resp, cached] = request(path, body);
    GenerationResult r;
    r.model_id = cfg_.model_id;
    r.cached = cached;
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    try {
      const auto& choice = resp.at("choices").at(0);
      r.text = cfg_.chat ? choice.at("message").at("content").get<std::string>() : choice.at("text").get<std::string>();
      WhitespaceTokenizer ws;
      if (resp.contains("usage") && resp["usage"].is_object()) {
        r.prompt_tokens = resp["usage"].value("prompt_tokens", static_cast<long>(ws.count(prompt)));
        r.completion_tokens = resp["usage"].value("completion_tokens", static_cast<long>(ws.count(r.text)));
      } else {
        r.prompt_tokens = static_cast<long>(ws.count(prompt));
        r.completion_tokens = static_cast<long>(ws.count(r.text));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unexpected completion response: ") + e.what());
    }
    return r;
  }

  /// Per-token log-probabilities of `text` via an echoed legacy completion.
  std::vector<TokenLogprob> token_logprobs(const std::string& text) {
    if (!cfg_.logprobs) throw LogprobsUnsupported(cfg_.model_id);
    nlohmann::json body{{"model", cfg_.model_id}, {"prompt", text}, {"max_tokens", 0},
                        {"echo", true},           {"logprobs", 0},    {"temperature", 0.0}};
    auto [resp, cached] = request("/v1/completions", body);
    (void)cached;
    std::vector<TokenLogprob> out;
    try {
      const auto& lp = resp.at("choices").at(0).at("logprobs");
      const auto& tokens = lp.at("tokens");
      const auto& values = lp.at("token_logprobs");
      if (tokens.size() != values.size()) throw ProviderError("tokens and token_logprobs differ in length");
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        TokenLogprob t{tokens[i].get<std::string>(), std::nullopt};
        if (!values[i].is_null()) {
          const double v = values[i].get<double>();
          if (v > 1e-9) throw ProviderError("log-probability above zero: " + std::to_string(v));
          t.logprob = std::min(v, 0.0);
        }
        out.push_back(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unexpected logprobs response: ") + e.what());
    }
    return out;
  }

  std::vector<Vector> embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionViolation("embed needs a non-empty batch");
    nlohmann::json body{{"model", cfg_.model_id}, {"input", texts}};
    auto [resp, cached] = request("/v1/embeddings", body);
    (void)cached;
    std::vector<Vector> out(texts.size());
    try {
      const auto& data = resp.at("data");
      if (data.size() != texts.size()) throw DimensionMismatch("embedding count differs from batch size");
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto idx = data[i].value("index", i);
        if (idx >= out.size()) throw ProviderError("embedding index out of range");
        out[idx] = data[i].at("embedding").get<Vector>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unexpected embeddings response: ") + e.what());
    }
    const std::size_t dim = cfg_.embedding_dim.value_or(out.front().size());
    for (const auto& v : out) {
      if (v.size() != dim) throw DimensionMismatch("expected dimension " + std::to_string(dim) + ", got " + std::to_string(v.size()));
    }
    return out;
  }

  long network_calls() const {
    std::lock_guard lock(mu_);
    return network_calls_;
  }
  long cache_hits() const {
    std::lock_guard lock(mu_);
    return cache_hits_;
  }
  std::vector<AttemptRecord> attempt_log() const {
    std::lock_guard lock(mu_);
    return attempts_;
  }

 private:
  // Returns (response body, served-from-cache). Identical concurrent requests
  // share one network round trip.
  std::pair<nlohmann::json, bool> request(const std::string& path, const nlohmann::json& body) {
    const auto key = ResponseCache::key_for(path, body);
    std::promise<nlohmann::json> promise;
    {
      std::unique_lock lock(mu_);
      if (auto hit = cache_->find(key)) {
        ++cache_hits_;
        return {std::move(*hit), true};
      }
      if (auto it = in_flight_.find(key); it != in_flight_.end()) {
        auto fut = it->second;
        ++cache_hits_;
        lock.unlock();
        return {fut.get(), true};
      }
      in_flight_.emplace(key, promise.get_future().share());
    }
    try {
      auto resp = send_with_retries(path, body);
      cache_->put(key, resp);
      promise.set_value(resp);
      std::lock_guard lock(mu_);
      in_flight_.erase(key);
      return {std::move(resp), false};
    } catch (...) {
      promise.set_exception(std::current_exception());
      std::lock_guard lock(mu_);
      in_flight_.erase(key);
      throw;
    }
  }

  nlohmann::json send_with_retries(const std::string& path, const nlohmann::json& body) {
    for (int attempt = 1;; ++attempt) {
      const bool last = attempt >= cfg_.retry.max_attempts;
      std::string outcome;
      std::exception_ptr failure;
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<1024>& s;
          ~Release() { s.release(); }
        } release{slots_};
        {
          std::lock_guard lock(mu_);
          ++network_calls_;
        }
        try {
          const auto resp = transport_->post(path, body);
          outcome = std::to_string(resp.status);
          if (resp.status >= 200 && resp.status < 300) {
            log_attempt(path, attempt, outcome, 0);
            try {
              return nlohmann::json::parse(resp.body);
            } catch (const nlohmann::json::parse_error& e) {
              throw ProviderError(std::string("response is not JSON: ") + e.what());
            }
          }
          if (resp.status == 429) {
            failure = std::make_exception_ptr(RateLimited("rate limited by " + cfg_.base_url + path));
          } else if (resp.status >= 500) {
            failure = std::make_exception_ptr(HttpError(resp.status, resp.body));
          } else {
            log_attempt(path, attempt, outcome, 0);
            throw HttpError(resp.status, resp.body);
          }
        } catch (const Timeout&) {
          outcome = "timeout";
          failure = std::current_exception();
        } catch (const ServiceUnavailable&) {
          outcome = "unavailable";
          failure = std::current_exception();
        }
      }
      if (last) {
        log_attempt(path, attempt, outcome, 0);
        std::rethrow_exception(failure);
      }
      const int delay = cfg_.retry.delay_after(attempt);
      log_attempt(path, attempt, outcome, delay);
      sleeper_(delay);
    }
  }

  void log_attempt(const std::string& path, int attempt, const std::string& outcome, int delay) {
    std::lock_guard lock(mu_);
    attempts_.push_back({path, attempt, outcome, delay});
  }

  EndpointConfig cfg_;
  TransportPtr transport_;
  std::shared_ptr<ResponseCache> cache_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> slots_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_future<nlohmann::json>> in_flight_;
  long network_calls_ = 0;
  long cache_hits_ = 0;
  std::vector<AttemptRecord> attempts_;
};

/// Embedder backed by an OpenAI-compatible /v1/embeddings endpoint.
class LlmEmbedder final : public Embedder {
 public:
  explicit LlmEmbedder(std::shared_ptr<LlmClient> client) : client_(std::move(client)) {}
  std::string id() const override { return "openai:" + client_->config().model_id; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) override { return client_->embed(texts); }

 private:
  std::shared_ptr<LlmClient> client_;
};

}  // namespace frugal
