#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "frugal/corpus.hpp"
#include "frugal/embeddings.hpp"
#include "frugal/errors.hpp"
#include "frugal/scorer_client.hpp"
#include "frugal/tokenizer.hpp"

namespace frugal {

// --- history representations ----------------------------------------------

struct FullHistory {
  friend bool operator==(const FullHistory&, const FullHistory&) = default;
};
struct RecentK {
  std::size_t k = 1;
  friend bool operator==(const RecentK&, const RecentK&) = default;
};
struct SemanticK {
  std::size_t k = 1;
  friend bool operator==(const SemanticK&, const SemanticK&) = default;
};
struct Summary {
  std::string summarizer_id;
  friend bool operator==(const Summary&, const Summary&) = default;
};
struct SummaryPlusBI {
  std::string summarizer_id;
  std::string bi_summarizer_id;
  friend bool operator==(const SummaryPlusBI&, const SummaryPlusBI&) = default;
};
// Background information only; the dialog history is left out entirely.
struct NoHistory {
  friend bool operator==(const NoHistory&, const NoHistory&) = default;
};

using HistoryRepresentation = std::variant<FullHistory, RecentK, SemanticK, Summary, SummaryPlusBI, NoHistory>;

/// The template-facing class of a representation (k and model ids erased).
enum class HistoryClass { None, Full, Recent, Semantic, Summary };

inline HistoryClass history_class(const HistoryRepresentation& rep) {
  struct V {
    HistoryClass operator()(const FullHistory&) const { return HistoryClass::Full; }
    HistoryClass operator()(const RecentK&) const { return HistoryClass::Recent; }
    HistoryClass operator()(const SemanticK&) const { return HistoryClass::Semantic; }
    HistoryClass operator()(const Summary&) const { return HistoryClass::Summary; }
    HistoryClass operator()(const SummaryPlusBI&) const { return HistoryClass::Summary; }
    HistoryClass operator()(const NoHistory&) const { return HistoryClass::None; }
  };
  return std::visit(V{}, rep);
}

/// Canonical spelling: full | recent:K | semantic:K | summary:ID |
/// summary+bi:ID:BI_ID | none.
inline std::string to_string(const HistoryRepresentation& rep) {
  struct V {
    std::string operator()(const FullHistory&) const { return "full"; }
    std::string operator()(const RecentK& r) const { return "recent:" + std::to_string(r.k); }
    std::string operator()(const SemanticK& r) const { return "semantic:" + std::to_string(r.k); }
    std::string operator()(const Summary& r) const { return "summary:" + r.summarizer_id; }
    std::string operator()(const SummaryPlusBI& r) const { return "summary+bi:" + r.summarizer_id + ":" + r.bi_summarizer_id; }
    std::string operator()(const NoHistory&) const { return "none"; }
  };
  return std::visit(V{}, rep);
}

inline HistoryRepresentation parse_representation(std::string_view s) {
  auto bad = [&s](const std::string& why) { return ConfigInvalid("bad representation '" + std::string(s) + "': " + why); };
  auto parse_k = [&](std::string_view num) {
    std::size_t k = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), k);
    if (ec != std::errc() || p != num.data() + num.size()) throw bad("k is not a number");
    if (k < 1) throw bad("k must be >= 1");
    return k;
  };
  if (s == "full") return FullHistory{};
  if (s == "none") return NoHistory{};
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw bad("unknown kind");
  const auto kind = s.substr(0, colon);
  const auto rest = s.substr(colon + 1);
  if (kind == "recent") return RecentK{parse_k(rest)};
  if (kind == "semantic") return SemanticK{parse_k(rest)};
  if (kind == "summary") {
    if (rest.empty()) throw bad("missing summarizer id");
    return Summary{std::string(rest)};
  }
  if (kind == "summary+bi") {
    const auto c2 = rest.find(':');
    if (c2 == std::string_view::npos || c2 == 0 || c2 + 1 == rest.size()) throw bad("expected summary+bi:ID:BI_ID");
    return SummaryPlusBI{std::string(rest.substr(0, c2)), std::string(rest.substr(c2 + 1))};
  }
  throw bad("unknown kind");
}

// --- selection --------------------------------------------------------------

/// The last min(k, |history|) utterances, in order.
inline std::vector<Utterance> recent_k(const std::vector<Utterance>& history, std::size_t k) {
  const auto n = std::min(k, history.size());
  return {history.end() - static_cast<std::ptrdiff_t>(n), history.end()};
}

struct SimilarityScore {
  std::vector<double> per_embedder;
  double mean = 0.0;
};

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline SimilarityScore average_similarity(const std::string& a, const std::string& b, const std::vector<EmbedderPtr>& embedders) {
  if (embedders.empty()) throw PreconditionViolation("average_similarity needs at least one embedder");
  if (a.empty() || b.empty()) throw PreconditionViolation("average_similarity needs non-empty strings");
  SimilarityScore s;
  for (const auto& e : embedders) {
    const auto vecs = e->embed({a, b});
    s.per_embedder.push_back(cosine(vecs.at(0), vecs.at(1), e->id()));
  }
  s.mean = mean_of(s.per_embedder);
  return s;
}

/// Mean (over embedders) cosine of every history utterance against `current`.
/// One batch request per embedder.
inline std::vector<double> similarity_to_current(const std::vector<Utterance>& history, const Utterance& current,
                                                 const std::vector<EmbedderPtr>& embedders) {
  if (embedders.empty()) throw PreconditionViolation("semantic selection needs at least one embedder");
  std::vector<std::string> texts;
  texts.reserve(history.size() + 1);
  for (const auto& u : history) texts.push_back(u.text);
  texts.push_back(current.text);
  std::vector<std::vector<double>> per(history.size());
  for (const auto& e : embedders) {
    const auto vecs = e->embed(texts);
    if (vecs.size() != texts.size()) throw DimensionMismatch("embedder '" + e->id() + "' returned wrong batch size");
    for (std::size_t i = 0; i < history.size(); ++i) per[i].push_back(cosine(vecs[i], vecs.back(), e->id()));
  }
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& p : per) out.push_back(mean_of(p));
  return out;
}

/// The k history utterances most similar to `current`, returned in
/// chronological order. Equal scores favour the earlier utterance.
inline std::vector<Utterance> semantic_k(const std::vector<Utterance>& history, const Utterance& current, std::size_t k,
                                         const std::vector<EmbedderPtr>& embedders) {
  if (embedders.empty()) throw PreconditionViolation("semantic_k needs at least one embedder");
  if (k >= history.size()) return history;
  const auto scores = similarity_to_current(history, current, embedders);
  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<Utterance> out;
  out.reserve(k);
  for (auto i : order) out.push_back(history[i]);
  return out;
}

// --- summarization ----------------------------------------------------------

/// Summarizer ids the client accepts; the three dialog summarizers are
/// always present.
class SummarizerRegistry {
 public:
  SummarizerRegistry() : ids_{"bart-d", "pegasus-cd", "pegasus-ds"} {}
  void add(std::string id) {
    std::lock_guard lock(mu_);
    ids_.insert(std::move(id));
  }
  bool contains(const std::string& id) const {
    std::lock_guard lock(mu_);
    return ids_.contains(id);
  }
  void require(const std::string& id) const {
    if (!contains(id)) throw UnknownSummarizer(id);
  }

 private:
  mutable std::mutex mu_;
  std::set<std::string> ids_;
};

/// Speaker label as seen from a prompt. With `swapped` the roles are
/// mirrored, which is how a one-utterance-shifted exemplar reads.
inline std::string_view role_label(Speaker s, bool swapped = false) { return person_label(swapped ? other(s) : s); }

inline std::vector<LabelledTurn> labelled(const std::vector<Utterance>& utts, bool swapped = false) {
  std::vector<LabelledTurn> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back({std::string(role_label(u.speaker, swapped)), u.text});
  return out;
}

/// "Person1: ...\nPerson2: ..." as placed into a prompt.
inline std::string format_dialog(const std::vector<Utterance>& utts, bool swapped = false) {
  std::string s;
  for (const auto& u : utts) {
    if (!s.empty()) s += '\n';
    s += role_label(u.speaker, swapped);
    s += ": ";
    s += u.text;
  }
  return s;
}

inline std::string summarize_history(const std::vector<Utterance>& history, const std::string& summarizer_id,
                                     ScorerClient& client, const SummarizerRegistry& registry = {}, bool swapped = false) {
  if (history.empty()) throw PreconditionViolation("cannot summarize an empty history");
  registry.require(summarizer_id);
  return client.summarize(summarizer_id, labelled(history, swapped));
}

/// Per-side background summaries. For personas each side is summarized on
/// its own; knowledge is summarized once and lands on the P1 side.
struct BackgroundSummary {
  std::optional<std::string> p1;
  std::optional<std::string> p2;

  // "P1: <p1> P2: <p2>" with absent sides omitted.
  std::string joined() const {
    std::string s;
    if (p1) s += "P1: " + *p1;
    if (p2) s += std::string(s.empty() ? "" : " ") + "P2: " + *p2;
    return s;
  }
};

inline BackgroundSummary summarize_background_sides(const BackgroundInfo& bi, const std::string& bi_summarizer_id,
                                                    ScorerClient& client, const SummarizerRegistry& registry = {},
                                                    bool swapped = false) {
  registry.require(bi_summarizer_id);
  BackgroundSummary out;
  auto nonempty = [](const std::optional<std::string>& s) { return s && !s->empty(); };
  if (bi.kind == BackgroundInfo::Kind::Knowledge) {
    if (!nonempty(bi.shared_text)) throw PreconditionViolation("knowledge background without shared text");
    out.p1 = client.summarize(bi_summarizer_id, {{"Person1", *bi.shared_text}});
    return out;
  }
  if (!nonempty(bi.p1_text) && !nonempty(bi.p2_text)) throw PreconditionViolation("persona background without text");
  // Sides keep their true owner; swapping only changes whose slot they fill.
  auto side = [&](const std::optional<std::string>& text, Speaker owner) -> std::optional<std::string> {
    if (!nonempty(text)) return std::nullopt;
    return client.summarize(bi_summarizer_id, {{std::string(role_label(owner, swapped)), *text}});
  };
  auto s1 = side(bi.p1_text, Speaker::P1);
  auto s2 = side(bi.p2_text, Speaker::P2);
  if (swapped) std::swap(s1, s2);
  out.p1 = std::move(s1);
  out.p2 = std::move(s2);
  return out;
}

inline std::string summarize_background(const BackgroundInfo& bi, const std::string& bi_summarizer_id, ScorerClient& client,
                                        const SummarizerRegistry& registry = {}) {
  return summarize_background_sides(bi, bi_summarizer_id, client, registry).joined();
}

// --- compression --------------------------------------------------------------

struct CompressedContext {
  HistoryRepresentation kind;
  std::vector<Utterance> selected;  // Full / Recent-k / Semantic-k
  std::optional<std::string> summary_text;
  std::optional<std::string> bi_summary_text;
  BackgroundSummary background;
  bool swapped_roles = false;
  std::size_t source_length_tokens = 0;
  std::size_t compressed_length_tokens = 0;

  /// Text that fills the dialog-context slot.
  std::string history_text() const { return summary_text ? *summary_text : format_dialog(selected, swapped_roles); }
};

struct CompressOptions {
  bool include_background = false;
  std::string bi_summarizer_id = "pegasus-cd";
  std::string tokenizer_id = "whitespace";
};

/// Turns a dialog prefix into one of the context representations. Holds the
/// embedders (wrapped in per-embedder caches) and the summarizer client.
class Compressor {
 public:
  Compressor(std::vector<EmbedderPtr> embedders, std::shared_ptr<ScorerClient> summarizer,
             std::shared_ptr<SummarizerRegistry> registry = std::make_shared<SummarizerRegistry>())
      : summarizer_(std::move(summarizer)), registry_(std::move(registry)) {
    for (auto& e : embedders) embedders_.push_back(std::make_shared<CachingEmbedder>(std::move(e)));
  }

  const std::vector<EmbedderPtr>& embedders() const noexcept { return embedders_; }
  SummarizerRegistry& registry() { return *registry_; }

  CompressedContext compress(const std::vector<Utterance>& history, const Utterance& current,
                             const std::optional<BackgroundInfo>& background, const HistoryRepresentation& rep,
                             const CompressOptions& opts = {}, bool swapped = false) {
    CompressedContext ctx;
    ctx.kind = rep;
    ctx.swapped_roles = swapped;
    const auto tok = TokenizerRegistry::global().get(opts.tokenizer_id);
    ctx.source_length_tokens = tok->count(format_dialog(history, swapped));

    struct V {
      Compressor& self;
      CompressedContext& ctx;
      const std::vector<Utterance>& history;
      const Utterance& current;
      bool swapped;
      void operator()(const FullHistory&) { ctx.selected = history; }
      void operator()(const RecentK& r) { ctx.selected = recent_k(history, r.k); }
      void operator()(const SemanticK& r) { ctx.selected = semantic_k(history, current, r.k, self.embedders_); }
      void operator()(const Summary& r) { ctx.summary_text = self.summary_of(history, r.summarizer_id, swapped); }
      void operator()(const SummaryPlusBI& r) { ctx.summary_text = self.summary_of(history, r.summarizer_id, swapped); }
      void operator()(const NoHistory&) {}
    };
    std::visit(V{*this, ctx, history, current, swapped}, rep);

    std::string bi_id = opts.bi_summarizer_id;
    bool want_bi = opts.include_background;
    if (const auto* sb = std::get_if<SummaryPlusBI>(&rep)) {
      want_bi = true;
      bi_id = sb->bi_summarizer_id;
    }
    if (want_bi) {
      if (!background) throw PreconditionViolation("background information requested but the conversation has none");
      ctx.background = summarize_background_sides(*background, bi_id, *summarizer_, *registry_, swapped);
      ctx.bi_summary_text = ctx.background.joined();
    }
    ctx.compressed_length_tokens = tok->count(ctx.history_text());
    return ctx;
  }

  CompressedContext compress(const Instance& inst, const HistoryRepresentation& rep, const CompressOptions& opts = {},
                             bool swapped = false) {
    return compress(inst.history, inst.current, inst.background, rep, opts, swapped);
  }

 private:
  std::string summary_of(const std::vector<Utterance>& history, const std::string& id, bool swapped) {
    if (!summarizer_) throw ServiceUnavailable("no summarizer client configured");
    registry_->require(id);
    // An empty prefix has nothing to summarize.
    if (history.empty()) return {};
    return summarize_history(history, id, *summarizer_, *registry_, swapped);
  }

  std::vector<EmbedderPtr> embedders_;
  std::shared_ptr<ScorerClient> summarizer_;
  std::shared_ptr<SummarizerRegistry> registry_;
};

}  // namespace frugal
