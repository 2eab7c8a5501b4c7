#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "frugal/errors.hpp"
#include "frugal/scorer_client.hpp"

namespace frugal {

// --- METEOR (exact-match) -------------------------------------------------------

inline constexpr std::string_view kMeteorVersion = "meteor-exact-1.0";

namespace detail {

inline std::vector<std::string> casefolded_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact unigram alignment. Each candidate word takes the reference position
/// right after its predecessor's match when that continues a chunk, else the
/// first unused equal reference word.
inline MeteorAlignment meteor_align(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  std::vector<bool> used(ref.size(), false);
  std::vector<std::optional<std::size_t>> match(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (i > 0 && match[i - 1]) {
      const auto next = *match[i - 1] + 1;
      if (next < ref.size() && !used[next] && ref[next] == cand[i]) {
        match[i] = next;
        used[next] = true;
        continue;
      }
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == cand[i]) {
        match[i] = j;
        used[j] = true;
        break;
      }
    }
  }
  MeteorAlignment a;
  std::optional<std::size_t> prev_i, prev_j;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (!match[i]) continue;
    ++a.matches;
    const bool continues = prev_i && *prev_i + 1 == i && *prev_j + 1 == *match[i];
    if (!continues) ++a.chunks;
    prev_i = i;
    prev_j = match[i];
  }
  return a;
}

/// F_mean = 10PR / (R + 9P); penalty = 0.5 (chunks / matches)^3;
/// score = F_mean (1 - penalty). Case-folded whitespace tokens.
inline double meteor(std::string_view candidate, std::string_view reference) {
  const auto cand = detail::casefolded_words(candidate);
  const auto ref = detail::casefolded_words(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto a = meteor_align(cand, ref);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

// --- usable information density --------------------------------------------------

/// M_H^a / L_H.
inline double uid(double mean_metric, double mean_length, double a) {
  if (!(mean_length > 0.0)) throw NonPositiveLength(mean_length);
  if (!(a > 0.0)) throw PreconditionViolation("metric-importance a must be positive");
  if (mean_metric < 0.0) throw PreconditionViolation("M_H must be non-negative");
  return std::pow(mean_metric, a) / mean_length;
}

struct UIDValue {
  std::string metric_id;
  double a = 1.0;
  double mean_metric = 0.0;  // M_H
  double mean_length = 0.0;  // L_H
  double value = 0.0;
};

/// One scored generation: metric value and combined input + output tokens.
struct Observation {
  double score = 0.0;
  double length = 0.0;
};

struct Aggregate {
  double mean_metric = 0.0;
  double mean_length = 0.0;
  std::size_t n = 0;
};

/// Arithmetic means, summed in input order.
inline Aggregate aggregate(std::span<const Observation> obs) {
  if (obs.empty()) throw EmptySet("aggregate over no records");
  double s = 0.0, l = 0.0;
  for (const auto& o : obs) {
    s += o.score;
    l += o.length;
  }
  const auto n = static_cast<double>(obs.size());
  return {s / n, l / n, obs.size()};
}

// --- rank dynamics -------------------------------------------------------------------

struct ConfigPoint {
  std::string id;
  double mean_metric = 0.0;
  double mean_length = 0.0;
};

struct RankTable {
  std::vector<double> a_values;
  std::vector<std::string> ids;              // input order
  std::vector<std::vector<double>> uids;     // [a][config]
  std::vector<std::vector<std::size_t>> ranks;  // [a][config], 1 = best
};

/// Ranks configurations by UID (descending, ties by id) at every a.
inline RankTable rank_dynamics(const std::vector<ConfigPoint>& configs, const std::vector<double>& a_values) {
  if (configs.size() < 2) throw PreconditionViolation("rank dynamics needs at least two configurations");
  RankTable t;
  t.a_values = a_values;
  for (const auto& c : configs) t.ids.push_back(c.id);
  for (double a : a_values) {
    std::vector<double> u;
    for (const auto& c : configs) u.push_back(uid(c.mean_metric, c.mean_length, a));
    std::vector<std::size_t> order(configs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (u[x] != u[y]) return u[x] > u[y];
      return configs[x].id < configs[y].id;
    });
    std::vector<std::size_t> rank(configs.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
    t.uids.push_back(std::move(u));
    t.ranks.push_back(std::move(rank));
  }
  return t;
}

// --- learned metrics --------------------------------------------------------------------

struct MetricScore {
  std::string metric_id;
  double value = 0.0;
  std::string pair_ref;
};

inline bool is_remote_metric(std::string_view id) { return id == "bleurt" || id == "deb"; }

/// Scores pairs through the scorer service; order is preserved. `refs`, when
/// given, parallels `pairs` and labels each score.
inline std::vector<MetricScore> remote_score(const std::string& metric_id, const std::vector<ScorePair>& pairs,
                                             ScorerClient& client, const std::vector<std::string>& refs = {}) {
  if (!is_remote_metric(metric_id)) throw UnknownMetric(metric_id);
  const auto values = client.score(metric_id, pairs);
  std::vector<MetricScore> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back({metric_id, values[i], i < refs.size() ? refs[i] : std::to_string(i)});
  }
  return out;
}

}  // namespace frugal
