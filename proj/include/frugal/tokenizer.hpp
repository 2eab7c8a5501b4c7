#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "frugal/errors.hpp"

namespace frugal {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string id() const = 0;
  virtual std::size_t count(std::string_view text) const = 0;
};

// Tokens are maximal runs of non-whitespace bytes.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::string id() const override { return "whitespace"; }
  std::size_t count(std::string_view text) const override {
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
      const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
      if (!ws && !in_token) ++n;
      in_token = !ws;
    }
    return n;
  }
};

// Rough BPE-cost estimate: one token per 4 bytes, rounded up.
class Char4Tokenizer final : public Tokenizer {
 public:
  std::string id() const override { return "char4"; }
  std::size_t count(std::string_view text) const override { return (text.size() + 3) / 4; }
};

class TokenizerRegistry {
 public:
  TokenizerRegistry() {
    add(std::make_shared<WhitespaceTokenizer>());
    add(std::make_shared<Char4Tokenizer>());
  }

  void add(std::shared_ptr<const Tokenizer> tok) {
    std::unique_lock lock(mu_);
    auto id = tok->id();
    by_id_[std::move(id)] = std::move(tok);
  }

  std::shared_ptr<const Tokenizer> get(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw UnknownTokenizer(id);
    return it->second;
  }

  static TokenizerRegistry& global() {
    static TokenizerRegistry registry;
    return registry;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const Tokenizer>> by_id_;
};

inline std::size_t measure_length(std::string_view text, const std::string& tokenizer_id = "whitespace") {
  return TokenizerRegistry::global().get(tokenizer_id)->count(text);
}

}  // namespace frugal
