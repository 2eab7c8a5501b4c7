#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/embeddings.hpp"
#include "frugal/tokenizer.hpp"
#include "frugal/transport.hpp"

// In-process implementations of the two wire contracts the library talks
// to. They back `stub://` endpoints and the offline test suites.
namespace frugal::stubs {

inline bool detail_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail_ws(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !detail_ws(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

/// Splits into tokens that concatenate back to `text`: each token is its
/// leading whitespace plus one word; trailing whitespace joins the last token.
inline std::vector<std::string> echo_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto start = i;
    while (i < text.size() && detail_ws(text[i])) ++i;
    while (i < text.size() && !detail_ws(text[i])) ++i;
    out.emplace_back(text.substr(start, i - start));
  }
  if (out.size() > 1 && out.back().find_first_not_of(" \t\n\r\v\f") == std::string::npos) {
    out[out.size() - 2] += out.back();
    out.pop_back();
  }
  return out;
}

inline std::string join_first(const std::vector<std::string>& words, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < std::min(n, words.size()); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

// The last `n` words, ignoring a trailing speaker cue such as "Person2:".
inline std::string join_last(std::vector<std::string> words, std::size_t n) {
  if (!words.empty() && words.back().size() > 1 && words.back().back() == ':') words.pop_back();
  const auto k = std::min(n, words.size());
  return join_first({words.end() - static_cast<std::ptrdiff_t>(k), words.end()}, k);
}

inline HttpResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump()}; }
inline HttpResponse error_response(int status, const std::string& msg) {
  return {status, nlohmann::json{{"error", {{"message", msg}}}}.dump()};
}

struct OpenAiStubOptions {
  std::size_t echo_words = 5;
  std::size_t embedding_dim = 64;
  // Log-probability of token `position` (position 0 never asked: it has none).
  // The default favours short tokens so wordings score differently.
  std::function<double(const std::string& token, std::size_t position)> logprob = [](const std::string& token, std::size_t) {
    return -0.1 * static_cast<double>(token.size() % 8);
  };
};

/// OpenAI-compatible endpoint: completions echo the last words of the
/// prompt before its generation cue, echoed log-probabilities come from `logprob`, embeddings are hash
/// vectors salted with the model id.
inline FunctionTransport::Handler openai_stub(OpenAiStubOptions opts = {}) {
  return [opts = std::move(opts)](const std::string& path, const nlohmann::json& body) -> HttpResponse {
    const auto model = body.value("model", std::string("stub"));
    if (path == "/v1/completions" || path == "/v1/chat/completions") {
      std::string prompt;
      if (path == "/v1/completions") {
        if (!body.contains("prompt") || !body["prompt"].is_string()) return error_response(400, "prompt required");
        prompt = body["prompt"].get<std::string>();
      } else {
        if (!body.contains("messages") || body["messages"].empty()) return error_response(400, "messages required");
        prompt = body["messages"].back().value("content", std::string());
      }
      const auto words = split_ws(prompt);
      if (body.value("echo", false)) {
        const auto toks = echo_tokens(prompt);
        nlohmann::json values = nlohmann::json::array();
        for (std::size_t i = 0; i < toks.size(); ++i) {
          if (i == 0) values.push_back(nullptr);
          else values.push_back(opts.logprob(toks[i], i));
        }
        return json_response(200, {{"model", model},
                                   {"choices", {{{"index", 0}, {"text", prompt},
                                                 {"logprobs", {{"tokens", toks}, {"token_logprobs", values}}}}}},
                                   {"usage", {{"prompt_tokens", toks.size()}, {"completion_tokens", 0}}}});
      }
      const auto text = join_last(words, opts.echo_words);
      const auto completion_tokens = split_ws(text).size();
      nlohmann::json choice{{"index", 0}};
      if (path == "/v1/completions") choice["text"] = text;
      else choice["message"] = {{"role", "assistant"}, {"content", text}};
      return json_response(200, {{"model", model},
                                 {"choices", {choice}},
                                 {"usage", {{"prompt_tokens", words.size()}, {"completion_tokens", completion_tokens}}}});
    }
    if (path == "/v1/embeddings") {
      std::vector<std::string> inputs;
      if (body.contains("input") && body["input"].is_string()) inputs.push_back(body["input"].get<std::string>());
      else if (body.contains("input") && body["input"].is_array()) inputs = body["input"].get<std::vector<std::string>>();
      else return error_response(400, "input required");
      nlohmann::json data = nlohmann::json::array();
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        data.push_back({{"index", i}, {"object", "embedding"}, {"embedding", hash_embedding(inputs[i], model, opts.embedding_dim)}});
      }
      return json_response(200, {{"model", model}, {"data", data}});
    }
    return error_response(404, "no route " + path);
  };
}

struct ScorerStubOptions {
  bool loaded = true;
  std::size_t echo_budget = 30;  // tokens kept by the echo summarizer
  double constant_score = 0.5;
  std::size_t max_batch = 256;
  std::set<std::string> summarizers{"bart-d", "pegasus-cd", "pegasus-ds", "echo"};
  std::set<std::string> embedders{"simcse", "sentence-transformers", "hash"};
  std::set<std::string> metrics{"bleurt", "deb"};
};

/// Deterministic-test mode of the scorer service: echo summarizer, hash
/// embedder, constant scorer.
inline FunctionTransport::Handler scorer_stub(ScorerStubOptions opts = {}) {
  return [opts = std::move(opts)](const std::string& path, const nlohmann::json& body) -> HttpResponse {
    if (path == "/health") {
      if (!opts.loaded) return json_response(200, {{"status", "degraded"}, {"loaded_models", nlohmann::json::array()}});
      std::vector<std::string> inv(opts.summarizers.begin(), opts.summarizers.end());
      inv.insert(inv.end(), opts.embedders.begin(), opts.embedders.end());
      inv.insert(inv.end(), opts.metrics.begin(), opts.metrics.end());
      return json_response(200, {{"status", "ok"}, {"loaded_models", inv}});
    }
    if (!opts.loaded) return error_response(503, "models not loaded");
    if (path == "/summarize") {
      const auto id = body.value("summarizer", std::string());
      if (!opts.summarizers.contains(id)) return error_response(404, "unknown summarizer " + id);
      if (!body.contains("utterances") || !body["utterances"].is_array()) return error_response(422, "utterances required");
      std::string joined;
      for (const auto& u : body["utterances"]) {
        const auto sp = u.value("speaker", std::string());
        if (sp != "Person1" && sp != "Person2") return error_response(422, "speaker must be Person1 or Person2");
        if (!joined.empty()) joined += ' ';
        joined += sp + ": " + u.value("text", std::string());
      }
      return json_response(200, {{"summary", join_first(split_ws(joined), opts.echo_budget)}, {"model_version", id + "-echo-1"}});
    }
    if (path == "/embed") {
      const auto model = body.value("model", std::string());
      if (!opts.embedders.contains(model)) return error_response(404, "unknown embedder " + model);
      if (!body.contains("texts") || !body["texts"].is_array() || body["texts"].empty()) return error_response(422, "texts required");
      if (body["texts"].size() > opts.max_batch) return error_response(413, "batch too large");
      nlohmann::json vecs = nlohmann::json::array();
      for (const auto& t : body["texts"]) vecs.push_back(hash_embedding(t.get<std::string>(), model, 64));
      return json_response(200, {{"vectors", vecs}, {"dim", 64}, {"normalized", true}});
    }
    if (path == "/score") {
      const auto metric = body.value("metric", std::string());
      if (!opts.metrics.contains(metric)) return error_response(404, "unknown metric " + metric);
      if (!body.contains("pairs") || !body["pairs"].is_array() || body["pairs"].empty()) return error_response(422, "pairs required");
      nlohmann::json scores = nlohmann::json::array();
      for (const auto& p : body["pairs"]) {
        if (metric == "deb" && p.value("context", std::string()).empty()) return error_response(422, "deb needs a context");
        scores.push_back(opts.constant_score);
      }
      return json_response(200, {{"scores", scores}});
    }
    return error_response(404, "no route " + path);
  };
}

}  // namespace frugal::stubs
