#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/errors.hpp"
#include "frugal/llm_client.hpp"
#include "frugal/prompt.hpp"

namespace frugal {

enum class Provenance { Manual, Paraphrase, BackTranslation };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Manual: return "manual";
    case Provenance::Paraphrase: return "paraphrase";
    case Provenance::BackTranslation: return "back-translation";
  }
  return "manual";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "manual") return Provenance::Manual;
  if (s == "paraphrase") return Provenance::Paraphrase;
  if (s == "back-translation" || s == "backtranslation") return Provenance::BackTranslation;
  throw ConfigInvalid("unknown provenance '" + std::string(s) + "'");
}

struct CandidateSet {
  std::string base_template_id;
  std::vector<PromptTemplate> candidates;
  std::vector<Provenance> provenance;  // parallel to candidates

  void validate() const {
    if (candidates.empty()) throw PreconditionViolation("candidate set is empty");
    if (provenance.size() != candidates.size()) throw PreconditionViolation("provenance must parallel candidates");
    const auto& base = candidates.front();
    for (const auto& c : candidates) {
      if (c.shot != base.shot || c.context != base.context) {
        throw BadTemplate(c.id, "candidate differs from '" + base.id + "' in shot mode or context");
      }
    }
  }
};

/// Supplies alternative wordings of a template.
class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  virtual std::vector<std::pair<PromptTemplate, Provenance>> variants_of(const PromptTemplate& base) = 0;
};

/// Pre-authored variants: template records carrying extra `base` and
/// `provenance` fields.
class FileParaphraseProvider final : public ParaphraseProvider {
 public:
  explicit FileParaphraseProvider(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw BadTemplate("<variant>", "not valid JSON");
      entries_.push_back({j.value("base", std::string()), template_from_json(j),
                          parse_provenance(j.value("provenance", std::string("paraphrase")))});
    }
  }

  std::vector<std::pair<PromptTemplate, Provenance>> variants_of(const PromptTemplate& base) override {
    std::vector<std::pair<PromptTemplate, Provenance>> out;
    for (const auto& e : entries_) {
      if (e.base == base.id) out.emplace_back(e.tmpl, e.provenance);
    }
    return out;
  }

 private:
  struct Entry {
    std::string base;
    PromptTemplate tmpl;
    Provenance provenance;
  };
  std::vector<Entry> entries_;
};

/// The base template (first, as Manual) followed by its variants.
inline CandidateSet make_candidate_set(const PromptTemplate& base, ParaphraseProvider& provider) {
  CandidateSet set{base.id, {base}, {Provenance::Manual}};
  for (auto& [t, p] : provider.variants_of(base)) {
    set.candidates.push_back(std::move(t));
    set.provenance.push_back(p);
  }
  set.validate();
  return set;
}

using LogprobFn = std::function<std::vector<TokenLogprob>(const std::string&)>;

inline LogprobFn logprobs_from(LlmClient& client) {
  return [&client](const std::string& text) { return client.token_logprobs(text); };
}

/// exp(-mean log-probability) over the tokens that carry one.
inline double perplexity(std::span<const TokenLogprob> tokens) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : tokens) {
    if (t.logprob) {
      sum += *t.logprob;
      ++n;
    }
  }
  if (n == 0) throw PreconditionViolation("no scored tokens to compute perplexity from");
  return std::exp(-sum / static_cast<double>(n));
}

enum class Pooling {
  InstanceMean,  // perplexity per instance, then the arithmetic mean
  TokenPooled,   // one perplexity over all scored tokens of all instances
};

struct TemplateScore {
  std::string template_id;
  double mean_perplexity = 0.0;
  std::size_t n_instances = 0;
};

struct ScoringOptions {
  Pooling pooling = Pooling::InstanceMean;
  PromptBuilder::Request request;  // tmpl is overwritten per candidate
};

/// Renders each instance without its response, scores the full prompt and
/// averages perplexities.
inline TemplateScore score_template(const PromptTemplate& tmpl, const std::vector<Instance>& instances,
                                    const PromptBuilder& builder, const LogprobFn& logprobs, ScoringOptions opts = {}) {
  if (instances.empty()) throw PreconditionViolation("score_template needs at least one instance");
  opts.request.tmpl = &tmpl;
  double sum_ppl = 0.0;
  double sum_lp = 0.0;
  std::size_t n_tok = 0;
  for (const auto& inst : instances) {
    const auto prompt = builder.build(inst, opts.request);
    const auto toks = logprobs(prompt.text);
    if (opts.pooling == Pooling::InstanceMean) {
      sum_ppl += perplexity(toks);
    } else {
      for (const auto& t : toks) {
        if (t.logprob) {
          sum_lp += *t.logprob;
          ++n_tok;
        }
      }
    }
  }
  TemplateScore s{tmpl.id, 0.0, instances.size()};
  if (opts.pooling == Pooling::InstanceMean) {
    s.mean_perplexity = sum_ppl / static_cast<double>(instances.size());
  } else {
    if (n_tok == 0) throw PreconditionViolation("no scored tokens to compute perplexity from");
    s.mean_perplexity = std::exp(-sum_lp / static_cast<double>(n_tok));
  }
  return s;
}

struct Selection {
  PromptTemplate best;
  std::vector<TemplateScore> table;  // candidate order
};

/// Lowest mean perplexity wins; ties go to the earlier candidate.
inline Selection select_best(const CandidateSet& set, const std::vector<Instance>& instances, const PromptBuilder& builder,
                             const LogprobFn& logprobs, const ScoringOptions& opts = {}) {
  set.validate();
  Selection sel;
  std::size_t best = 0;
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    sel.table.push_back(score_template(set.candidates[i], instances, builder, logprobs, opts));
    if (sel.table[i].mean_perplexity < sel.table[best].mean_perplexity) best = i;
  }
  sel.best = set.candidates[best];
  return sel;
}

inline void write_score_table(std::ostream& out, const std::vector<TemplateScore>& table) {
  out << "template_id,mean_perplexity,n_instances\n";
  char buf[64];
  for (const auto& s : table) {
    std::snprintf(buf, sizeof buf, "%.17g", s.mean_perplexity);
    out << s.template_id << ',' << buf << ',' << s.n_instances << '\n';
  }
}

/// Seeded sample of `n` instances without replacement (all when n >= size).
inline std::vector<Instance> sample_instances(std::vector<Instance> pool, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(pool[i - 1], pool[j]);
  }
  if (pool.size() > n) pool.resize(n);
  return pool;
}

}  // namespace frugal
