#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/compressor.hpp"
#include "frugal/corpus.hpp"
#include "frugal/errors.hpp"
#include "frugal/llm_client.hpp"
#include "frugal/metrics.hpp"
#include "frugal/prompt.hpp"
#include "frugal/scorer_client.hpp"
#include "frugal/stubs.hpp"

namespace frugal {

// --- configuration --------------------------------------------------------------

struct RunConfig {
  std::string id;  // derived when empty
  std::string endpoint;
  std::string template_id;             // explicit template, or
  std::string template_type = "manual";  // resolve by type + shot + context
  ShotMode shot = ShotMode::ZeroShot;
  HistoryRepresentation rep = FullHistory{};
  bool background = false;
  std::string bi_summarizer = "pegasus-cd";
  std::string tokenizer = "whitespace";
  std::uint64_t seed = 0;
  std::string split = "test";
  std::size_t limit = 100;
  DecodingParams decoding;

  std::string derived_id() const {
    if (!id.empty()) return id;
    return endpoint + "/" + (template_id.empty() ? template_type : template_id) + "/" + to_string(rep) + "/" +
           std::string(to_string(shot)) + (background ? "+bi" : "");
  }

  CompressOptions compress_options() const { return {background, bi_summarizer, tokenizer}; }
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.id = j.value("id", std::string());
    c.endpoint = j.at("endpoint").get<std::string>();
    c.template_id = j.value("template", std::string());
    c.template_type = j.value("template_type", std::string("manual"));
    c.shot = parse_shot(j.value("shot", std::string("zs")));
    c.rep = parse_representation(j.value("rep", std::string("full")));
    c.background = j.value("background", false);
    c.bi_summarizer = j.value("bi_summarizer", std::string("pegasus-cd"));
    c.tokenizer = j.value("tokenizer", std::string("whitespace"));
    c.seed = j.value("seed", std::uint64_t{0});
    c.split = j.value("split", std::string("test"));
    c.limit = j.value("limit", std::size_t{100});
    if (j.contains("decoding")) {
      c.decoding.temperature = j["decoding"].value("temperature", 0.0);
      c.decoding.max_tokens = j["decoding"].value("max_tokens", 128);
    }
    if (c.limit < 1) throw ConfigInvalid("limit must be >= 1");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("bad run config: ") + e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"id", c.derived_id()},      {"endpoint", c.endpoint},       {"template", c.template_id},
          {"template_type", c.template_type}, {"shot", std::string(to_string(c.shot))}, {"rep", to_string(c.rep)},
          {"background", c.background}, {"bi_summarizer", c.bi_summarizer}, {"tokenizer", c.tokenizer},
          {"seed", c.seed},            {"split", c.split},             {"limit", c.limit},
          {"decoding", c.decoding.to_json()}};
}

/// Everything a run needs besides the corpus: endpoint clients, the scorer
/// service, embedders and the metrics to compute.
struct Services {
  std::map<std::string, std::shared_ptr<LlmClient>> llms;
  std::shared_ptr<ScorerClient> scorer;
  std::vector<EmbedderPtr> embedders;
  std::vector<std::string> metrics{"meteor"};
  std::shared_ptr<SummarizerRegistry> summarizers = std::make_shared<SummarizerRegistry>();
  std::vector<std::shared_ptr<CountingTransport>> counters;

  long network_calls() const {
    long n = 0;
    for (const auto& c : counters) n += c->calls();
    return n;
  }
};

struct HarnessConfig {
  std::map<std::string, std::string> corpora;  // split -> path
  std::string store;
  std::string catalog;  // empty: builtin templates
  std::map<std::string, EndpointConfig> endpoints;
  std::string scorer_url = "stub://";
  std::vector<std::string> embedders{"hash"};
  std::vector<std::string> metrics{"meteor"};
  std::vector<std::string> summarizers;  // registered beyond the built-in three
  std::vector<RunConfig> runs;
};

namespace detail {

inline EndpointConfig endpoint_from_json(const std::string& id, const nlohmann::json& j) {
  EndpointConfig e;
  e.id = id;
  e.base_url = j.value("base_url", std::string("stub://"));
  e.model_id = j.value("model", id);
  e.api_key_env = j.value("api_key_env", std::string());
  e.max_parallel = j.value("max_parallel", 4);
  e.timeout_ms = j.value("timeout_ms", 60000);
  e.logprobs = j.value("logprobs", false);
  e.chat = j.value("chat", false);
  if (j.contains("embedding_dim")) e.embedding_dim = j["embedding_dim"].get<std::size_t>();
  if (j.contains("retry")) {
    e.retry.max_attempts = j["retry"].value("max_attempts", e.retry.max_attempts);
    e.retry.backoff_base_ms = j["retry"].value("backoff_ms", e.retry.backoff_base_ms);
  }
  if (e.max_parallel < 1) throw ConfigInvalid("endpoint '" + id + "': max_parallel must be >= 1");
  return e;
}

}  // namespace detail

/// Parses the run configuration file. `runs` lists explicit runs; `matrix`
/// expands to the cross product of endpoints, representations, shots and
/// template types.
inline HarnessConfig harness_config_from_json(const nlohmann::json& j) {
  HarnessConfig h;
  try {
    if (j.contains("corpus")) {
      if (j["corpus"].is_string()) h.corpora["test"] = j["corpus"].get<std::string>();
      else h.corpora = j["corpus"].get<std::map<std::string, std::string>>();
    }
    h.store = j.value("store", std::string("results"));
    h.catalog = j.value("catalog", std::string());
    if (j.contains("endpoints")) {
      for (const auto& [id, e] : j["endpoints"].items()) h.endpoints.emplace(id, detail::endpoint_from_json(id, e));
    }
    if (j.contains("scorer")) h.scorer_url = j["scorer"].is_string() ? j["scorer"].get<std::string>() : j["scorer"].value("base_url", h.scorer_url);
    if (j.contains("embedders")) h.embedders = j["embedders"].get<std::vector<std::string>>();
    if (j.contains("metrics")) h.metrics = j["metrics"].get<std::vector<std::string>>();
    if (j.contains("summarizers")) h.summarizers = j["summarizers"].get<std::vector<std::string>>();
    if (j.contains("runs")) {
      for (const auto& r : j["runs"]) h.runs.push_back(run_config_from_json(r));
    }
    if (j.contains("matrix")) {
      const auto& m = j["matrix"];
      const auto endpoints = m.at("endpoints").get<std::vector<std::string>>();
      const auto reps = m.at("reps").get<std::vector<std::string>>();
      const auto shots = m.value("shots", std::vector<std::string>{"zs"});
      const auto types = m.value("template_types", std::vector<std::string>{"manual"});
      const auto bis = m.value("background", std::vector<bool>{false});
      for (const auto& e : endpoints)
        for (const auto& t : types)
          for (const auto& s : shots)
            for (bool bi : bis)
              for (const auto& r : reps) {
                nlohmann::json rj = m;
                rj.erase("endpoints");
                rj.erase("reps");
                rj.erase("shots");
                rj.erase("template_types");
                rj.erase("background");
                rj["endpoint"] = e;
                rj["template_type"] = t;
                rj["shot"] = s;
                rj["rep"] = r;
                rj["background"] = bi;
                h.runs.push_back(run_config_from_json(rj));
              }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("bad harness config: ") + e.what());
  }
  std::set<std::string> ids;
  for (const auto& r : h.runs) {
    if (!h.endpoints.contains(r.endpoint)) throw ConfigInvalid("run '" + r.derived_id() + "' uses unknown endpoint '" + r.endpoint + "'");
    if (!ids.insert(r.derived_id()).second) throw ConfigInvalid("duplicate run id '" + r.derived_id() + "'");
  }
  return h;
}

inline bool is_stub_url(const std::string& url) { return url.rfind("stub://", 0) == 0; }

/// Builds clients for a configuration. `stub://` URLs select the in-process
/// stubs. Responses are cached under `cache_dir` when given.
inline Services make_services(const HarnessConfig& cfg, const std::optional<std::filesystem::path>& cache_dir) {
  Services s;
  s.metrics = cfg.metrics;
  for (const auto& id : cfg.summarizers) s.summarizers->add(id);
  auto cache = [&](const char* sub) {
    return cache_dir ? std::make_shared<ResponseCache>(*cache_dir / sub) : std::make_shared<ResponseCache>();
  };
  auto llm_cache = cache("llm");
  for (const auto& [id, e] : cfg.endpoints) {
    TransportPtr t;
    if (is_stub_url(e.base_url)) t = std::make_shared<FunctionTransport>(stubs::openai_stub());
    else t = std::make_shared<HttpTransport>(e.base_url, e.timeout_ms, env_or_empty(e.api_key_env));
    auto counted = std::make_shared<CountingTransport>(t);
    s.counters.push_back(counted);
    s.llms.emplace(id, std::make_shared<LlmClient>(e, counted, llm_cache));
  }
  TransportPtr st;
  if (is_stub_url(cfg.scorer_url)) st = std::make_shared<FunctionTransport>(stubs::scorer_stub());
  else st = std::make_shared<HttpTransport>(cfg.scorer_url, 120000, env_or_empty("FP_SCORER_TOKEN"));
  auto counted = std::make_shared<CountingTransport>(st);
  s.counters.push_back(counted);
  s.scorer = std::make_shared<ScorerClient>(counted, cache("scorer"));
  for (const auto& spec : cfg.embedders) {
    if (spec == "hash") s.embedders.push_back(std::make_shared<HashEmbedder>());
    else if (spec.rfind("hash:", 0) == 0) s.embedders.push_back(std::make_shared<HashEmbedder>(spec.substr(5)));
    else if (spec.rfind("service:", 0) == 0) s.embedders.push_back(std::make_shared<ServiceEmbedder>(s.scorer, spec.substr(8)));
    else if (spec.rfind("openai:", 0) == 0) {
      const auto ep = spec.substr(7);
      if (!s.llms.contains(ep)) throw ConfigInvalid("embedder '" + spec + "' names unknown endpoint");
      s.embedders.push_back(std::make_shared<LlmEmbedder>(s.llms.at(ep)));
    } else {
      throw ConfigInvalid("unknown embedder spec '" + spec + "'");
    }
  }
  for (const auto& m : s.metrics) {
    if (m != "meteor" && !is_remote_metric(m)) throw ConfigInvalid("unknown metric '" + m + "'");
  }
  return s;
}

// --- records and store --------------------------------------------------------------

struct EvalRecord {
  std::string run_id;
  std::string record_id;
  std::string instance_ref;
  std::optional<int> session;
  std::string model;
  std::string template_id;
  std::string prompt_type;     // manual | perplexity
  std::string shot;            // zs | fs
  std::string history_signal;  // representation, "+bi" when background included
  long prompt_tokens = 0;
  long completion_tokens = 0;
  std::string generated;
  std::string reference;
  std::map<std::string, double> scores;
  std::string started_at;
  std::string finished_at;
  std::optional<std::string> error;  // set on tombstones: "<ErrorClass>: message"

  bool tombstone() const { return error.has_value(); }
};

inline nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j{{"run_id", r.run_id},
                   {"record_id", r.record_id},
                   {"instance", r.instance_ref},
                   {"model", r.model},
                   {"template_id", r.template_id},
                   {"prompt_type", r.prompt_type},
                   {"shot", r.shot},
                   {"history_signal", r.history_signal},
                   {"prompt_tokens", r.prompt_tokens},
                   {"completion_tokens", r.completion_tokens},
                   {"generated", r.generated},
                   {"reference", r.reference},
                   {"scores", r.scores},
                   {"started_at", r.started_at},
                   {"finished_at", r.finished_at}};
  j["session"] = r.session ? nlohmann::json(*r.session) : nlohmann::json(nullptr);
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  return j;
}

inline EvalRecord record_from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.record_id = j.at("record_id").get<std::string>();
  r.instance_ref = j.at("instance").get<std::string>();
  if (!j.at("session").is_null()) r.session = j["session"].get<int>();
  r.model = j.at("model").get<std::string>();
  r.template_id = j.at("template_id").get<std::string>();
  r.prompt_type = j.at("prompt_type").get<std::string>();
  r.shot = j.at("shot").get<std::string>();
  r.history_signal = j.at("history_signal").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<long>();
  r.completion_tokens = j.at("completion_tokens").get<long>();
  r.generated = j.at("generated").get<std::string>();
  r.reference = j.at("reference").get<std::string>();
  r.scores = j.at("scores").get<std::map<std::string, double>>();
  r.started_at = j.at("started_at").get<std::string>();
  r.finished_at = j.at("finished_at").get<std::string>();
  if (!j.at("error").is_null()) r.error = j["error"].get<std::string>();
  return r;
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

/// Append-only result store: `records.jsonl` (one EvalRecord per line) and
/// `manifest.json` (the run configurations). Writes are serialized.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path records_path() const { return dir_ / "records.jsonl"; }
  std::filesystem::path manifest_path() const { return dir_ / "manifest.json"; }
  std::filesystem::path cache_dir() const { return dir_ / "cache"; }

  void append(const EvalRecord& r) {
    std::lock_guard lock(mu_);
    std::ofstream out(records_path(), std::ios::app);
    out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw StoreCorrupt("cannot append to " + records_path().string());
  }

  /// Every line in file order. Throws StoreCorrupt on an unreadable line.
  std::vector<EvalRecord> load_all() const {
    std::lock_guard lock(mu_);
    std::vector<EvalRecord> out;
    std::ifstream in(records_path());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        out.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw StoreCorrupt(records_path().string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    return out;
  }

  /// One record per id, the last written one, in order of first appearance.
  std::vector<EvalRecord> load() const {
    auto all = load_all();
    std::map<std::string, std::size_t> pos;
    std::vector<EvalRecord> out;
    for (auto& r : all) {
      if (auto it = pos.find(r.record_id); it != pos.end()) {
        out[it->second] = std::move(r);
      } else {
        pos.emplace(r.record_id, out.size());
        out.push_back(std::move(r));
      }
    }
    return out;
  }

  void write_manifest(const std::vector<RunConfig>& runs) {
    std::lock_guard lock(mu_);
    nlohmann::json m;
    if (std::ifstream in(manifest_path()); in) m = nlohmann::json::parse(in, nullptr, false);
    if (!m.is_object()) m = nlohmann::json::object();
    for (const auto& r : runs) m["runs"][r.derived_id()] = to_json(r);
    std::ofstream(manifest_path()) << m.dump(2) << '\n';
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// --- running --------------------------------------------------------------------

struct RunSummary {
  std::size_t new_records = 0;
  std::size_t skipped = 0;
  std::size_t tombstones = 0;
  long network_calls = 0;
};

inline std::string history_signal(const RunConfig& c) {
  return to_string(c.rep) + (c.background && !std::holds_alternative<SummaryPlusBI>(c.rep) ? "+bi" : "");
}

namespace detail {

inline std::string error_class(const std::exception& e) {
  if (dynamic_cast<const Timeout*>(&e)) return "Timeout";
  if (dynamic_cast<const RateLimited*>(&e)) return "RateLimited";
  if (dynamic_cast<const HttpError*>(&e)) return "HttpError";
  if (dynamic_cast<const ServiceUnavailable*>(&e)) return "ServiceUnavailable";
  if (dynamic_cast<const ProviderError*>(&e)) return "ProviderError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "Exception";
}

// Runs fn(i) for i in [0, n) on up to `width` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t width, Fn&& fn) {
  width = std::max<std::size_t>(1, std::min(width, n));
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < width; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// One EvalRecord per (config, instance). Records already in the store are
/// skipped; per-instance failures become tombstones and the run goes on.
/// Records are appended in instance order regardless of completion order.
inline RunSummary run_matrix(const std::vector<RunConfig>& configs, const std::vector<Conversation>& corpus,
                             const std::vector<PromptTemplate>& catalog, Services& services, ResultStore& store) {
  const long calls_before = services.network_calls();
  RunSummary summary;

  // Validate everything before any request goes out.
  std::vector<const PromptTemplate*> templates;
  for (const auto& c : configs) {
    if (!services.llms.contains(c.endpoint)) throw ConfigInvalid("unknown endpoint '" + c.endpoint + "'");
    const auto bi = c.background || std::holds_alternative<SummaryPlusBI>(c.rep);
    const PromptTemplate& t = c.template_id.empty()
                                  ? resolve_template(catalog, c.template_type, c.shot, {history_class(c.rep), bi})
                                  : find_template(catalog, c.template_id);
    if (t.shot != c.shot) throw ConfigInvalid("template '" + t.id + "' does not match shot mode of run '" + c.derived_id() + "'");
    PromptBuilder::check_compatible(t, c.rep, c.compress_options());
    TokenizerRegistry::global().get(c.tokenizer);
    if (const auto* r = std::get_if<Summary>(&c.rep)) services.summarizers->require(r->summarizer_id);
    if (const auto* r = std::get_if<SummaryPlusBI>(&c.rep)) services.summarizers->require(r->summarizer_id);
    templates.push_back(&t);
  }
  store.write_manifest(configs);

  std::set<std::string> done;
  for (const auto& r : store.load()) {
    if (!r.tombstone()) done.insert(r.record_id);
  }

  const auto all_instances = build_all_instances(corpus);
  Compressor compressor(services.embedders, services.scorer, services.summarizers);
  PromptBuilder builder(corpus, compressor);

  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const auto& cfg = configs[ci];
    const auto& tmpl = *templates[ci];
    auto& llm = *services.llms.at(cfg.endpoint);
    const auto run_id = cfg.derived_id();
    const auto signal = history_signal(cfg);

    std::vector<const Instance*> todo;
    for (std::size_t i = 0; i < all_instances.size() && i < cfg.limit; ++i) {
      if (done.contains(run_id + "|" + all_instances[i].ref())) ++summary.skipped;
      else todo.push_back(&all_instances[i]);
    }

    std::vector<EvalRecord> recs(todo.size());
    detail::parallel_for(todo.size(), static_cast<std::size_t>(llm.config().max_parallel), [&](std::size_t i) {
      const auto& inst = *todo[i];
      auto& r = recs[i];
      r.run_id = run_id;
      r.instance_ref = inst.ref();
      r.record_id = run_id + "|" + r.instance_ref;
      r.session = inst.origin_session;
      r.model = llm.config().model_id;
      r.template_id = tmpl.id;
      r.prompt_type = tmpl.type;
      r.shot = std::string(to_string(cfg.shot));
      r.history_signal = signal;
      r.reference = inst.target.text;
      r.started_at = utc_now();
      try {
        PromptBuilder::Request req{&tmpl, cfg.rep, cfg.compress_options(), {cfg.tokenizer, std::nullopt}, cfg.seed};
        const auto prompt = builder.build(inst, req);
        const auto gen = llm.complete(prompt.text, cfg.decoding);
        r.prompt_tokens = static_cast<long>(prompt.total_tokens);
        r.generated = gen.text;
        r.completion_tokens = static_cast<long>(TokenizerRegistry::global().get(cfg.tokenizer)->count(gen.text));
        for (const auto& m : services.metrics) {
          if (m == "meteor") r.scores["meteor"] = meteor(r.generated, r.reference);
        }
      } catch (const std::exception& e) {
        r.error = detail::error_class(e) + ": " + e.what();
      }
      r.finished_at = utc_now();
    });

    // Learned metrics, one batch per metric over the healthy records.
    for (const auto& m : services.metrics) {
      if (!is_remote_metric(m)) continue;
      std::vector<ScorePair> pairs;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].tombstone()) continue;
        const auto& inst = *todo[i];
        pairs.push_back({format_dialog(inst.history) + (inst.history.empty() ? "" : "\n") + "Person1: " + inst.current.text,
                         recs[i].generated, recs[i].reference});
        idx.push_back(i);
      }
      if (pairs.empty()) continue;
      try {
        const auto scores = remote_score(m, pairs, *services.scorer);
        for (std::size_t k = 0; k < idx.size(); ++k) recs[idx[k]].scores[m] = scores[k].value;
      } catch (const std::exception& e) {
        for (auto i : idx) recs[i].error = detail::error_class(e) + ": " + e.what();
      }
    }

    for (const auto& r : recs) {
      store.append(r);
      ++summary.new_records;
      if (r.tombstone()) ++summary.tombstones;
    }
  }
  summary.network_calls = services.network_calls() - calls_before;
  return summary;
}

// --- reports --------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LengthRow {
  std::string history_signal;
  std::string prompt_type;
  std::string shot;
  std::size_t n = 0;
  double mean_prompt_tokens = 0.0;
};

struct LengthReport {
  std::vector<LengthRow> rows;  // sorted by key
  std::size_t excluded = 0;     // tombstones
};

/// Mean prompt tokens per (history signal, prompt type, shot).
inline LengthReport length_report(const std::vector<EvalRecord>& records) {
  LengthReport rep;
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    if (r.tombstone()) {
      ++rep.excluded;
      continue;
    }
    auto& [sum, n] = acc[{r.history_signal, r.prompt_type, r.shot}];
    sum += static_cast<double>(r.prompt_tokens);
    ++n;
  }
  if (acc.empty()) throw EmptySet("no usable records for the length report");
  for (const auto& [key, v] : acc) {
    rep.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), v.second, v.first / static_cast<double>(v.second)});
  }
  return rep;
}

inline void write_length_csv(std::ostream& out, const LengthReport& rep) {
  out << "history_signal,prompt_type,shot,n,mean_prompt_tokens\n";
  for (const auto& r : rep.rows) {
    out << r.history_signal << ',' << r.prompt_type << ',' << r.shot << ',' << r.n << ',' << format_double(r.mean_prompt_tokens)
        << '\n';
  }
}

struct UIDRow {
  std::string model;
  std::string history_signal;
  std::string prompt_type;
  std::string shot;
  std::string metric;
  double a = 1.0;
  double mean_metric = 0.0;
  double mean_length = 0.0;
  double uid = 0.0;
};

struct RankRow {
  std::string model;
  std::string prompt_type;
  std::string shot;
  std::string metric;
  double a = 1.0;
  std::string history_signal;
  double uid = 0.0;
  std::size_t rank = 0;
};

struct UIDReport {
  std::vector<UIDRow> rows;           // pooled over every instance
  std::vector<UIDRow> session_macro;  // mean of per-session M_H and L_H (MSC)
  std::vector<RankRow> ranks;
  std::size_t excluded = 0;
};

/// M_H, L_H and UID(a) per (model, history signal, prompt type, shot,
/// metric), plus rank dynamics of history signals within each (model,
/// prompt type, shot, metric).
inline UIDReport uid_report(const std::vector<EvalRecord>& records, const std::vector<std::string>& metrics,
                            const std::vector<double>& a_values) {
  using GroupKey = std::tuple<std::string, std::string, std::string, std::string>;  // model, signal, type, shot
  UIDReport rep;
  std::map<GroupKey, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records) {
    if (r.tombstone()) {
      ++rep.excluded;
      continue;
    }
    groups[{r.model, r.history_signal, r.prompt_type, r.shot}].push_back(&r);
  }
  if (groups.empty()) throw EmptySet("no usable records for the UID report");

  auto observations = [](const std::vector<const EvalRecord*>& rs, const std::string& metric) {
    std::vector<Observation> obs;
    obs.reserve(rs.size());
    for (const auto* r : rs) {
      auto it = r->scores.find(metric);
      if (it == r->scores.end()) throw MissingScores(metric);
      obs.push_back({it->second, static_cast<double>(r->prompt_tokens + r->completion_tokens)});
    }
    return obs;
  };

  // (model, type, shot, metric) -> configs for rank dynamics
  std::map<GroupKey, std::vector<ConfigPoint>> rank_groups;
  for (const auto& metric : metrics) {
    for (const auto& [key, rs] : groups) {
      const auto& [model, signal, type, shot] = key;
      const auto agg = aggregate(observations(rs, metric));
      for (double a : a_values) {
        rep.rows.push_back({model, signal, type, shot, metric, a, agg.mean_metric, agg.mean_length,
                            uid(agg.mean_metric, agg.mean_length, a)});
      }
      rank_groups[{model, type, shot, metric}].push_back({signal, agg.mean_metric, agg.mean_length});

      std::map<int, std::vector<const EvalRecord*>> by_session;
      for (const auto* r : rs) {
        if (r->session) by_session[*r->session].push_back(r);
      }
      if (!by_session.empty()) {
        double m_sum = 0.0, l_sum = 0.0;
        for (const auto& [s, srs] : by_session) {
          const auto sagg = aggregate(observations(srs, metric));
          m_sum += sagg.mean_metric;
          l_sum += sagg.mean_length;
        }
        const double ns = static_cast<double>(by_session.size());
        for (double a : a_values) {
          rep.session_macro.push_back({model, signal, type, shot, metric, a, m_sum / ns, l_sum / ns, uid(m_sum / ns, l_sum / ns, a)});
        }
      }
    }
  }
  for (const auto& [key, points] : rank_groups) {
    if (points.size() < 2) continue;
    const auto& [model, type, shot, metric] = key;
    const auto table = rank_dynamics(points, a_values);
    for (std::size_t ai = 0; ai < a_values.size(); ++ai) {
      for (std::size_t ci = 0; ci < points.size(); ++ci) {
        rep.ranks.push_back({model, type, shot, metric, a_values[ai], points[ci].id, table.uids[ai][ci], table.ranks[ai][ci]});
      }
    }
  }
  return rep;
}

inline void write_uid_csv(std::ostream& out, const std::vector<UIDRow>& rows) {
  out << "model,history_signal,prompt_type,shot,metric,a,M_H,L_H,uid\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.history_signal << ',' << r.prompt_type << ',' << r.shot << ',' << r.metric << ','
        << format_double(r.a) << ',' << format_double(r.mean_metric) << ',' << format_double(r.mean_length) << ','
        << format_double(r.uid) << '\n';
  }
}

inline void write_rank_csv(std::ostream& out, const std::vector<RankRow>& rows) {
  out << "model,prompt_type,shot,metric,a,history_signal,uid,rank\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.prompt_type << ',' << r.shot << ',' << r.metric << ',' << format_double(r.a) << ','
        << r.history_signal << ',' << format_double(r.uid) << ',' << r.rank << '\n';
  }
}

/// Metrics that every usable record carries.
inline std::vector<std::string> common_metrics(const std::vector<EvalRecord>& records) {
  std::optional<std::set<std::string>> common;
  for (const auto& r : records) {
    if (r.tombstone()) continue;
    std::set<std::string> mine;
    for (const auto& [m, v] : r.scores) mine.insert(m);
    if (!common) {
      common = std::move(mine);
    } else {
      std::set<std::string> both;
      for (const auto& m : *common) {
        if (mine.contains(m)) both.insert(m);
      }
      common = std::move(both);
    }
  }
  return common ? std::vector<std::string>(common->begin(), common->end()) : std::vector<std::string>{};
}

// --- interactive session ---------------------------------------------------------

struct ChatSession {
  RunConfig config;
  const PromptTemplate* tmpl = nullptr;
  std::vector<Utterance> transcript;
  std::optional<BackgroundInfo> background;
  std::vector<Conversation> exemplar_corpus;  // random-exemplar fallback
  long tokens_used = 0;
};

struct TurnResult {
  std::string reply;
  RenderedPrompt prompt;
  long completion_tokens = 0;
  long tokens_used = 0;  // session total, prompts plus completions
};

/// The user speaks as Person1, the model answers as Person2. On failure the
/// transcript is left as it was before the turn.
inline TurnResult chat_turn(ChatSession& session, const std::string& user_text, Services& services) {
  if (!session.tmpl) throw ConfigInvalid("chat session has no template");
  auto& llm = *services.llms.at(session.config.endpoint);

  Conversation conv;
  conv.id = "chat";
  conv.utterances = session.transcript;
  conv.background = session.background;
  conv.utterances.push_back({Speaker::P1, normalize_utterance(user_text), conv.utterances.size(), std::nullopt});
  conv.utterances.push_back({Speaker::P2, "", conv.utterances.size(), std::nullopt});

  std::vector<Conversation> corpus = session.exemplar_corpus;
  corpus.push_back(conv);
  Compressor compressor(services.embedders, services.scorer, services.summarizers);
  PromptBuilder builder(corpus, compressor);
  const auto inst = *instance_at(conv, conv.utterances.size() - 1);
  PromptBuilder::Request req{session.tmpl, session.config.rep, session.config.compress_options(),
                             {session.config.tokenizer, std::nullopt}, session.config.seed};
  TurnResult out;
  out.prompt = builder.build(inst, req);
  const auto gen = llm.complete(out.prompt.text, session.config.decoding);
  out.reply = gen.text;
  out.completion_tokens = static_cast<long>(TokenizerRegistry::global().get(session.config.tokenizer)->count(gen.text));

  session.transcript.push_back(conv.utterances[conv.utterances.size() - 2]);
  Utterance reply{Speaker::P2, out.reply, session.transcript.size(), std::nullopt};
  session.transcript.push_back(std::move(reply));
  session.tokens_used += static_cast<long>(out.prompt.total_tokens) + out.completion_tokens;
  out.tokens_used = session.tokens_used;
  return out;
}

}  // namespace frugal
