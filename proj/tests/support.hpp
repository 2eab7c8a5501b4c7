#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "frugal/frugal.hpp"

namespace fptest {

using namespace frugal;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<ScorerClient> stub_scorer(stubs::ScorerStubOptions o = {}) {
  return std::make_shared<ScorerClient>(std::make_shared<FunctionTransport>(stubs::scorer_stub(std::move(o))));
}

inline EndpointConfig stub_endpoint(bool logprobs = true) {
  EndpointConfig e;
  e.id = "stub";
  e.base_url = "stub://";
  e.model_id = "stub-model";
  e.logprobs = logprobs;
  e.retry.backoff_base_ms = 0;
  return e;
}

inline std::shared_ptr<LlmClient> stub_llm(stubs::OpenAiStubOptions o = {}, EndpointConfig cfg = stub_endpoint()) {
  return std::make_shared<LlmClient>(std::move(cfg), std::make_shared<FunctionTransport>(stubs::openai_stub(std::move(o))));
}

// Utterances "A", "B", ... alternating P1/P2.
inline Conversation letters(std::size_t n, std::string id = "letters") {
  Conversation c;
  c.id = std::move(id);
  for (std::size_t i = 0; i < n; ++i) {
    c.utterances.push_back({i % 2 == 0 ? Speaker::P1 : Speaker::P2, std::string(1, static_cast<char>('A' + i)), i, std::nullopt});
  }
  return c;
}

inline std::string random_words(std::mt19937_64& rng, std::size_t min_n, std::size_t max_n) {
  static const char* kWords[] = {"red", "blue", "green", "cat", "dog", "tree", "sky", "run", "jump", "sit",
                                 "the", "a", "big", "small", "old", "new", "fast", "slow", "up", "down"};
  const auto n = min_n + rng() % (max_n - min_n + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kWords[rng() % 20];
  }
  return s;
}

}  // namespace fptest
