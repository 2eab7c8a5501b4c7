#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/embeddings.hpp"
#include "frugal/errors.hpp"
#include "frugal/llm_client.hpp"
#include "frugal/transport.hpp"

namespace frugal {

// One speaker-labelled line sent to a summarizer ("Person1"/"Person2").
struct LabelledTurn {
  std::string speaker;
  std::string text;
};

struct ScorePair {
  std::string context;
  std::string candidate;
  std::string reference;
};

struct HealthStatus {
  std::string status;
  std::vector<std::string> loaded_models;
};

/// Client for the scorer service (summarizers, embedders, learned metrics).
/// Responses of the deterministic endpoints are memoized in `cache`.
class ScorerClient {
 public:
  explicit ScorerClient(TransportPtr transport, std::shared_ptr<ResponseCache> cache = nullptr)
      : transport_(std::move(transport)), cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()) {}

  std::string summarize(const std::string& summarizer_id, const std::vector<LabelledTurn>& turns) {
    nlohmann::json body{{"summarizer", summarizer_id}, {"utterances", nlohmann::json::array()}};
    for (const auto& t : turns) body["utterances"].push_back({{"speaker", t.speaker}, {"text", t.text}});
    const auto resp = call("/summarize", body, [&](int status) -> std::exception_ptr {
      if (status == 404) return std::make_exception_ptr(UnknownSummarizer(summarizer_id));
      return nullptr;
    });
    try {
      return resp.at("summary").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("bad /summarize response: ") + e.what());
    }
  }

  std::vector<Vector> embed(const std::string& model, const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionViolation("embed needs a non-empty batch");
    const auto resp = call("/embed", {{"model", model}, {"texts", texts}}, [](int) { return std::exception_ptr{}; });
    try {
      auto vecs = resp.at("vectors").get<std::vector<Vector>>();
      const auto dim = resp.at("dim").get<std::size_t>();
      if (vecs.size() != texts.size()) throw DimensionMismatch("/embed returned wrong number of vectors");
      for (const auto& v : vecs) {
        if (v.size() != dim) throw DimensionMismatch("/embed vector dimension differs from reported dim");
      }
      return vecs;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("bad /embed response: ") + e.what());
    }
  }

  std::vector<double> score(const std::string& metric, const std::vector<ScorePair>& pairs) {
    if (pairs.empty()) return {};
    nlohmann::json body{{"metric", metric}, {"pairs", nlohmann::json::array()}};
    for (const auto& p : pairs) {
      body["pairs"].push_back({{"context", p.context}, {"candidate", p.candidate}, {"reference", p.reference}});
    }
    const auto resp = call("/score", body, [&](int status) -> std::exception_ptr {
      if (status == 404) return std::make_exception_ptr(UnknownMetric(metric));
      return nullptr;
    });
    try {
      auto scores = resp.at("scores").get<std::vector<double>>();
      if (scores.size() != pairs.size()) throw ProviderError("/score returned wrong number of scores");
      return scores;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("bad /score response: ") + e.what());
    }
  }

  HealthStatus health() {
    const auto r = transport_->get("/health");
    if (r.status != 200) throw HttpError(r.status, r.body);
    const auto j = nlohmann::json::parse(r.body);
    return {j.value("status", std::string()), j.value("loaded_models", std::vector<std::string>{})};
  }

  long network_calls() const { return calls_.load(); }

 private:
  template <class MapStatus>
  nlohmann::json call(const std::string& path, const nlohmann::json& body, MapStatus map_status) {
    const auto key = ResponseCache::key_for(path, body);
    if (auto hit = cache_->find(key)) return *hit;
    ++calls_;
    const auto r = transport_->post(path, body);
    if (r.status == 200) {
      auto j = nlohmann::json::parse(r.body, nullptr, false);
      if (j.is_discarded()) throw ProviderError(path + " returned invalid JSON");
      cache_->put(key, j);
      return j;
    }
    if (auto e = map_status(r.status)) std::rethrow_exception(e);
    if (r.status == 503) throw ServiceUnavailable(path + ": model not loaded");
    throw HttpError(r.status, r.body);
  }

  TransportPtr transport_;
  std::shared_ptr<ResponseCache> cache_;
  std::atomic<long> calls_{0};
};

/// Embedder served by the scorer service's /embed endpoint.
class ServiceEmbedder final : public Embedder {
 public:
  ServiceEmbedder(std::shared_ptr<ScorerClient> client, std::string model)
      : client_(std::move(client)), model_(std::move(model)) {}
  std::string id() const override { return "service:" + model_; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) override { return client_->embed(model_, texts); }

 private:
  std::shared_ptr<ScorerClient> client_;
  std::string model_;
};

}  // namespace frugal
