#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace frugal;

namespace {

std::vector<TokenLogprob> constant_logprobs(const std::string& text, double lp) {
  std::vector<TokenLogprob> out;
  std::istringstream in(text);
  std::string w;
  bool first = true;
  while (in >> w) {
    out.push_back({w, first ? std::nullopt : std::optional<double>(lp)});
    first = false;
  }
  return out;
}

PromptTemplate variant(const PromptTemplate& base, const std::string& id, const std::string& opener) {
  PromptTemplate t = base;
  t.id = id;
  t.segments.insert(t.segments.begin(), Literal{opener});
  return t;
}

}  // namespace

TEST(Perplexity, Basics) {
  const std::vector<TokenLogprob> zero{{"a", std::nullopt}, {"b", 0.0}, {"c", 0.0}};
  EXPECT_EQ(perplexity(zero), 1.0);
  const std::vector<TokenLogprob> quarter{{"a", std::nullopt}, {"b", std::log(0.25)}, {"c", std::log(0.25)}};
  EXPECT_NEAR(perplexity(quarter), 4.0, 1e-12);
  const std::vector<TokenLogprob> none{{"a", std::nullopt}};
  EXPECT_THROW(perplexity(none), PreconditionViolation);
}

TEST(ScoreTemplate, ThreeInstanceOracle) {
  const auto conv = fptest::letters(6);
  const std::vector<Conversation> corpus{conv};
  Compressor c({std::make_shared<HashEmbedder>()}, fptest::stub_scorer());
  PromptBuilder b(corpus, c);
  const auto cat = builtin_templates();
  const auto& t = find_template(cat, "manual/zs/full");
  const auto instances = build_instances(conv);
  ASSERT_EQ(instances.size(), 3u);

  // Instance i gets log-probability -(i+1)/10 on every scored token.
  int call = 0;
  LogprobFn fn = [&](const std::string& text) { return constant_logprobs(text, -(++call) / 10.0); };
  ScoringOptions so;
  so.request.rep = FullHistory{};
  const auto s = score_template(t, instances, b, fn, so);
  const double oracle = (std::exp(0.1) + std::exp(0.2) + std::exp(0.3)) / 3.0;
  EXPECT_NEAR(s.mean_perplexity, oracle, 1e-9);
  EXPECT_EQ(s.n_instances, 3u);
  EXPECT_THROW(score_template(t, {}, b, fn, so), PreconditionViolation);

  // Pooled: one exp over all scored tokens, weighted by prompt length.
  call = 0;
  so.pooling = Pooling::TokenPooled;
  std::vector<std::size_t> lens;
  for (const auto& inst : instances) lens.push_back(measure_length(b.build(inst, {&t, FullHistory{}, {}, {}, 0}).text) - 1);
  const double num = 0.1 * lens[0] + 0.2 * lens[1] + 0.3 * lens[2];
  const double den = static_cast<double>(lens[0] + lens[1] + lens[2]);
  EXPECT_NEAR(score_template(t, instances, b, fn, so).mean_perplexity, std::exp(num / den), 1e-9);
}

TEST(ScoreTemplate, ThroughStubClient) {
  stubs::OpenAiStubOptions o;
  o.logprob = [](const std::string&, std::size_t) { return std::log(0.5); };
  auto llm = fptest::stub_llm(o);
  const auto conv = fptest::letters(4);
  const std::vector<Conversation> corpus{conv};
  Compressor c({std::make_shared<HashEmbedder>()}, fptest::stub_scorer());
  PromptBuilder b(corpus, c);
  const auto cat = builtin_templates();
  ScoringOptions so;
  so.request.rep = Summary{"pegasus-ds"};
  const auto s = score_template(find_template(cat, "perplexity/flan-t5-xl/zs/summary"), build_instances(conv), b, logprobs_from(*llm), so);
  EXPECT_NEAR(s.mean_perplexity, 2.0, 1e-12);
}

TEST(SelectBest, PicksLowestAndBreaksTiesEarly) {
  const auto conv = fptest::letters(4);
  const std::vector<Conversation> corpus{conv};
  Compressor c({std::make_shared<HashEmbedder>()}, fptest::stub_scorer());
  PromptBuilder b(corpus, c);
  const auto cat = builtin_templates();
  const auto& base = find_template(cat, "manual/zs/recent");
  CandidateSet set{base.id, {base, variant(base, "v1", "Hi. "), variant(base, "v2", "Hello. ")},
                   {Provenance::Manual, Provenance::Paraphrase, Provenance::BackTranslation}};
  // Every candidate scores 1.0: the base wins the tie.
  LogprobFn flat = [](const std::string& t) { return constant_logprobs(t, 0.0); };
  ScoringOptions so;
  so.request.rep = RecentK{1};
  const auto sel = select_best(set, build_instances(conv), b, flat, so);
  EXPECT_EQ(sel.best.id, base.id);
  ASSERT_EQ(sel.table.size(), 3u);

  // Prompts opening with "Hello." are cheaper.
  LogprobFn pref = [](const std::string& t) { return constant_logprobs(t, t.rfind("Hello.", 0) == 0 ? -0.1 : -0.5); };
  EXPECT_EQ(select_best(set, build_instances(conv), b, pref, so).best.id, "v2");

  std::ostringstream csv;
  write_score_table(csv, sel.table);
  EXPECT_TRUE(csv.str().starts_with("template_id,mean_perplexity,n_instances\n"));
}

TEST(Candidates, ProviderAndValidation) {
  const auto cat = builtin_templates();
  const auto& base = find_template(cat, "manual/zs/summary");
  auto v = variant(base, "manual/zs/summary/p1", "Note: ");
  auto j = to_json(v);
  j["base"] = base.id;
  j["provenance"] = "back-translation";
  auto other = to_json(variant(find_template(cat, "manual/zs/full"), "other", "x "));
  other["base"] = "manual/zs/full";
  std::istringstream in(j.dump() + "\n" + other.dump() + "\n");
  FileParaphraseProvider provider(in);
  const auto set = make_candidate_set(base, provider);
  ASSERT_EQ(set.candidates.size(), 2u);
  EXPECT_EQ(set.candidates[0].id, base.id);
  EXPECT_EQ(set.provenance[1], Provenance::BackTranslation);

  CandidateSet mixed{base.id, {base, find_template(cat, "manual/fs/summary")}, {Provenance::Manual, Provenance::Paraphrase}};
  EXPECT_THROW(mixed.validate(), BadTemplate);
}

TEST(Sampling, SeededWithoutReplacement) {
  SyntheticOptions o;
  o.conversations = 20;
  const auto pool = build_all_instances(synthetic_corpus(o));
  const auto a = sample_instances(pool, 10, 5);
  const auto b = sample_instances(pool, 10, 5);
  ASSERT_EQ(a.size(), 10u);
  std::set<std::string> refs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ref(), b[i].ref());
    refs.insert(a[i].ref());
  }
  EXPECT_EQ(refs.size(), 10u);
  EXPECT_EQ(sample_instances(pool, 1000, 5).size(), pool.size());
}
