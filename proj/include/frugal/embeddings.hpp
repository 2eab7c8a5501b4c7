#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frugal/errors.hpp"
#include "frugal/hashing.hpp"

namespace frugal {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("vector sizes differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// v.w / (|v||w|). `source` names the embedder for the ZeroVector error.
inline double cosine(std::span<const double> a, std::span<const double> b, const std::string& source = "?") {
  const double d = dot(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ZeroVector(source);
  return d / (na * nb);
}

/// Deterministic unit-norm embedding derived from SHA-256 of the text. Each
/// 4-byte group of the digest stream `sha256(salt | block | text)` maps to one
/// coordinate in [-1, 1).
inline Vector hash_embedding(const std::string& text, const std::string& salt = {}, std::size_t dim = 64) {
  Vector v;
  v.reserve(dim);
  for (std::uint32_t block = 0; v.size() < dim; ++block) {
    const auto digest = sha256(salt + '\x1f' + std::to_string(block) + '\x1f' + text);
    for (std::size_t i = 0; i + 4 <= digest.size() && v.size() < dim; i += 4) {
      const std::uint32_t word = static_cast<std::uint32_t>(digest[i]) | (static_cast<std::uint32_t>(digest[i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(digest[i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(digest[i + 3]) << 24);
      v.push_back(static_cast<double>(word) / 2147483648.0 - 1.0);
    }
  }
  const double n = norm(v);
  for (auto& x : v) x /= n;
  return v;
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  /// One vector per text, in input order.
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
};

using EmbedderPtr = std::shared_ptr<Embedder>;

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::string salt = {}, std::size_t dim = 64) : salt_(std::move(salt)), dim_(dim) {}
  std::string id() const override { return salt_.empty() ? "hash" : "hash:" + salt_; }
  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t, salt_, dim_));
    return out;
  }

 private:
  std::string salt_;
  std::size_t dim_;
};

/// Memoizes an embedder by exact text. Misses within one call are
/// de-duplicated and sent to the inner embedder as a single batch.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(EmbedderPtr inner) : inner_(std::move(inner)) {}

  std::string id() const override { return inner_->id(); }

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    std::vector<std::string> misses;
    {
      std::lock_guard lock(mu_);
      for (const auto& t : texts) {
        if (!cache_.contains(t) && std::find(misses.begin(), misses.end(), t) == misses.end()) misses.push_back(t);
      }
    }
    if (!misses.empty()) {
      auto vecs = inner_->embed(misses);
      if (vecs.size() != misses.size()) throw DimensionMismatch("embedder returned wrong batch size");
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < misses.size(); ++i) cache_.emplace(misses[i], std::move(vecs[i]));
    }
    std::lock_guard lock(mu_);
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(cache_.at(t));
    return out;
  }

  std::size_t cached() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  EmbedderPtr inner_;
  mutable std::mutex mu_;
  std::map<std::string, Vector> cache_;
};

}  // namespace frugal
