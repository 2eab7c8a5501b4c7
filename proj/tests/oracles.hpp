#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond the hash embedding itself.

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "frugal/embeddings.hpp"

namespace oracle {

inline double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

// Indices of the k best-scoring texts (ties to the lower index), ascending.
inline std::vector<std::size_t> top_k_indices(const std::vector<std::string>& texts, const std::string& query, std::size_t k,
                                              const std::vector<std::string>& salts) {
  std::vector<std::tuple<double, std::size_t>> scored;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    double s = 0;
    for (const auto& salt : salts) s += cos_sim(frugal::hash_embedding(texts[i], salt), frugal::hash_embedding(query, salt));
    scored.emplace_back(-s / static_cast<double>(salts.size()), i);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(std::get<1>(scored[i]));
  std::sort(out.begin(), out.end());
  return out;
}

// Exact-match METEOR written from the formula with a different alignment
// search: every maximum matching is enumerated and the fewest chunks kept.
inline double meteor_exhaustive(const std::vector<std::string>& c, const std::vector<std::string>& r) {
  if (c.empty() || r.empty()) return 0.0;
  std::size_t best_m = 0, best_ch = 0;
  std::vector<int> assign(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  auto eval = [&] {
    std::size_t m = 0, ch = 0;
    int pi = -2, pj = -2;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (assign[i] < 0) continue;
      ++m;
      if (!(pi == static_cast<int>(i) - 1 && pj == assign[i] - 1)) ++ch;
      pi = static_cast<int>(i);
      pj = assign[i];
    }
    if (m > best_m || (m == best_m && m > 0 && ch < best_ch)) {
      best_m = m;
      best_ch = ch;
    }
  };
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == c.size()) return eval();
    bool any = false;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && r[j] == c[i]) {
        any = true;
        used[j] = true;
        assign[i] = static_cast<int>(j);
        self(self, i + 1);
        used[j] = false;
        assign[i] = -1;
      }
    }
    if (!any) self(self, i + 1);
  };
  rec(rec, 0);
  if (best_m == 0) return 0.0;
  const double p = static_cast<double>(best_m) / static_cast<double>(c.size());
  const double rr = static_cast<double>(best_m) / static_cast<double>(r.size());
  const double f = 10 * p * rr / (rr + 9 * p);
  const double frag = static_cast<double>(best_ch) / static_cast<double>(best_m);
  return f * (1 - 0.5 * frag * frag * frag);
}

}  // namespace oracle
