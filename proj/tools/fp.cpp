// fp: command-line front end for corpus ingestion, prompt building, template
// optimization, evaluation runs, reports and interactive chat.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "frugal/frugal.hpp"

namespace fs = std::filesystem;
using namespace frugal;

namespace {

std::vector<Conversation> load_corpus(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigInvalid("cannot open corpus " + p.string());
  auto convs = parse_conversations(in);
  for (auto& c : convs) c = normalize_conversation(std::move(c));
  return convs;
}

std::vector<PromptTemplate> load_catalog(const std::string& path) {
  auto cat = builtin_templates();
  if (path.empty()) return cat;
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open catalog " + path);
  for (auto& t : load_templates(in)) {
    std::erase_if(cat, [&](const PromptTemplate& b) { return b.id == t.id; });
    cat.push_back(std::move(t));
  }
  return cat;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigInvalid("cannot open " + p.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigInvalid(p.string() + " is not valid JSON");
  return j;
}

// Paths inside a config file are relative to the file.
HarnessConfig load_harness_config(const fs::path& p) {
  auto h = harness_config_from_json(read_json(p));
  const auto base = p.parent_path();
  auto rel = [&](std::string& s) {
    if (!s.empty() && fs::path(s).is_relative()) s = (base / s).lexically_normal().string();
  };
  for (auto& [split, path] : h.corpora) rel(path);
  rel(h.store);
  rel(h.catalog);
  return h;
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  if (!out) throw ConfigInvalid("cannot write " + p.string());
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frugal prompting toolkit"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate and normalize conversation files");
  std::vector<std::string> ingest_files;
  std::string ingest_out;
  bool ingest_tag = false;
  ingest->add_option("files", ingest_files, "Conversation JSONL files")->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--out", ingest_out, "Write normalized conversations here");
  ingest->add_flag("--tag-splits", ingest_tag, "Tag each conversation with its file stem");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  SyntheticOptions synth_opts;
  std::string synth_out, synth_kind = "generic";
  synth->add_option("-o,--out", synth_out)->required();
  synth->add_option("--conversations", synth_opts.conversations);
  synth->add_option("--utterances", synth_opts.utterances);
  synth->add_option("--seed", synth_opts.seed);
  synth->add_option("--dataset", synth_kind)->check(CLI::IsMember({"generic", "msc", "tc"}));
  synth->add_flag("--persona", synth_opts.persona);

  // catalog
  auto* catalog_cmd = app.add_subcommand("catalog", "Print the built-in template catalog");
  std::string catalog_out;
  catalog_cmd->add_option("-o,--out", catalog_out);

  // build-prompt
  auto* bp = app.add_subcommand("build-prompt", "Render one prompt");
  std::string bp_corpus, bp_template, bp_catalog, bp_rep = "full", bp_shot = "zs", bp_instance, bp_tok = "whitespace";
  std::string bp_type = "manual";
  bool bp_bi = false, bp_json = false;
  std::uint64_t bp_seed = 0;
  std::vector<std::string> bp_embedders{"hash"};
  std::vector<std::string> bp_summarizers;
  bp->add_option("--corpus", bp_corpus)->required()->check(CLI::ExistingFile);
  bp->add_option("--template", bp_template, "Template id (default: resolve by type, shot and representation)");
  bp->add_option("--template-type", bp_type);
  bp->add_option("--catalog", bp_catalog);
  bp->add_option("--rep", bp_rep);
  bp->add_option("--shot", bp_shot)->check(CLI::IsMember({"zs", "fs"}));
  bp->add_option("--instance", bp_instance, "conversation-id#target-index")->required();
  bp->add_option("--tokenizer", bp_tok);
  bp->add_option("--seed", bp_seed);
  bp->add_option("--embedder", bp_embedders);
  bp->add_option("--summarizer", bp_summarizers, "Extra summarizer ids to accept");
  bp->add_flag("--background", bp_bi);
  bp->add_flag("--json", bp_json, "Print lengths alongside the text");

  // optimize-template
  auto* opt = app.add_subcommand("optimize-template", "Pick the lowest-perplexity template variant");
  std::string opt_config, opt_endpoint, opt_variants, opt_base, opt_rep = "full", opt_out, opt_split = "validation";
  std::size_t opt_n = 100;
  std::uint64_t opt_seed = 0;
  bool opt_pooled = false;
  opt->add_option("--config", opt_config)->required()->check(CLI::ExistingFile);
  opt->add_option("--endpoint", opt_endpoint)->required();
  opt->add_option("--catalog", opt_variants, "Variant templates (JSONL with base and provenance)")->check(CLI::ExistingFile);
  opt->add_option("--base", opt_base, "Base template id")->required();
  opt->add_option("--rep", opt_rep);
  opt->add_option("--split", opt_split);
  opt->add_option("--n", opt_n);
  opt->add_option("--seed", opt_seed);
  opt->add_option("-o,--out", opt_out, "Score table CSV");
  opt->add_flag("--token-pooled", opt_pooled);

  // run-eval
  auto* run = app.add_subcommand("run-eval", "Run the evaluation matrix");
  std::string run_config, run_store;
  run->add_option("--config", run_config)->required()->check(CLI::ExistingFile);
  run->add_option("--store", run_store, "Override the store directory");

  // report
  auto* rep = app.add_subcommand("report", "Length and UID reports from a result store");
  std::string rep_store, rep_a = "0.5,1,2,5,10", rep_out;
  std::vector<std::string> rep_metrics;
  bool rep_uid = false;
  rep->add_option("--store", rep_store)->required()->check(CLI::ExistingDirectory);
  rep->add_flag("--uid", rep_uid);
  rep->add_option("--a", rep_a);
  rep->add_option("--metric", rep_metrics, "Metrics for the UID report (default: all present)");
  rep->add_option("-o,--out", rep_out, "Report directory (default: <store>/reports)");

  // chat
  auto* chat = app.add_subcommand("chat", "Interactive session on stdin");
  std::string chat_config, chat_endpoint, chat_rep = "recent:2", chat_shot = "zs", chat_template, chat_corpus;
  chat->add_option("--config", chat_config)->required()->check(CLI::ExistingFile);
  chat->add_option("--endpoint", chat_endpoint)->required();
  chat->add_option("--rep", chat_rep);
  chat->add_option("--shot", chat_shot)->check(CLI::IsMember({"zs", "fs"}));
  chat->add_option("--template", chat_template);
  chat->add_option("--corpus", chat_corpus, "Exemplar corpus for first-turn few-shot prompts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      std::vector<std::pair<std::string, std::vector<Conversation>>> splits;
      for (const auto& f : ingest_files) splits.emplace_back(fs::path(f).stem().string(), load_corpus(f));
      std::vector<Conversation> all;
      if (ingest_tag) {
        all = merge_splits(std::move(splits));
      } else {
        for (auto& [tag, cs] : splits) std::move(cs.begin(), cs.end(), std::back_inserter(all));
      }
      std::cout << "conversations " << all.size() << "\ninstances " << build_all_instances(all).size() << "\n";
      if (!ingest_out.empty()) {
        std::ofstream out(ingest_out);
        write_conversations(out, all);
      }
      return 0;
    }
    if (*synth) {
      synth_opts.kind = synth_kind == "msc" ? DatasetKind::MSC : synth_kind == "tc" ? DatasetKind::TC : DatasetKind::Generic;
      std::ofstream out(synth_out);
      write_conversations(out, synthetic_corpus(synth_opts));
      return 0;
    }
    if (*catalog_cmd) {
      if (catalog_out.empty()) {
        write_templates(std::cout, builtin_templates());
      } else {
        std::ofstream out(catalog_out);
        write_templates(out, builtin_templates());
      }
      return 0;
    }
    if (*bp) {
      const auto corpus = load_corpus(bp_corpus);
      const auto catalog = load_catalog(bp_catalog);
      const auto hash = bp_instance.rfind('#');
      if (hash == std::string::npos) throw ConfigInvalid("instance must look like <conversation-id>#<target-index>");
      const auto conv_id = bp_instance.substr(0, hash);
      const auto target = std::stoul(bp_instance.substr(hash + 1));
      const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const Conversation& c) { return c.id == conv_id; });
      if (it == corpus.end()) throw ConfigInvalid("no conversation '" + conv_id + "'");
      const auto inst = instance_at(*it, target);
      if (!inst) throw ConfigInvalid("no instance with target index " + std::to_string(target));

      HarnessConfig hc;
      hc.embedders = bp_embedders;
      hc.summarizers = bp_summarizers;
      auto services = make_services(hc, std::nullopt);
      const auto r = parse_representation(bp_rep);
      const auto shot = parse_shot(bp_shot);
      const bool bi = bp_bi || std::holds_alternative<SummaryPlusBI>(r);
      const auto& t = bp_template.empty() ? resolve_template(catalog, bp_type, shot, {history_class(r), bi})
                                          : find_template(catalog, bp_template);
      Compressor compressor(services.embedders, services.scorer, services.summarizers);
      PromptBuilder builder(corpus, compressor);
      const auto prompt = builder.build(*inst, {&t, r, {bp_bi, "pegasus-cd", bp_tok}, {bp_tok, std::nullopt}, bp_seed});
      if (bp_json) {
        std::cout << nlohmann::json{{"template_id", prompt.template_id},
                                    {"instance", prompt.instance_ref},
                                    {"text", prompt.text},
                                    {"component_lengths", prompt.component_lengths},
                                    {"literal_tokens", prompt.literal_tokens},
                                    {"total_tokens", prompt.total_tokens}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << prompt.text << "\n";
      }
      return 0;
    }
    if (*opt) {
      const auto hc = load_harness_config(opt_config);
      auto services = make_services(hc, hc.store.empty() ? std::nullopt : std::optional<fs::path>(fs::path(hc.store) / "cache"));
      if (!services.llms.contains(opt_endpoint)) throw ConfigInvalid("unknown endpoint '" + opt_endpoint + "'");
      const auto split = hc.corpora.contains(opt_split) ? opt_split : std::string("test");
      if (!hc.corpora.contains(split)) throw ConfigInvalid("config names no corpus for split '" + opt_split + "'");
      const auto corpus = load_corpus(hc.corpora.at(split));
      const auto catalog = load_catalog(hc.catalog);
      const auto& base = find_template(catalog, opt_base);
      CandidateSet set;
      if (opt_variants.empty()) {
        set = CandidateSet{base.id, {base}, {Provenance::Manual}};
      } else {
        std::ifstream in(opt_variants);
        FileParaphraseProvider provider(in);
        set = make_candidate_set(base, provider);
      }
      Compressor compressor(services.embedders, services.scorer, services.summarizers);
      PromptBuilder builder(corpus, compressor);
      const auto instances = sample_instances(build_all_instances(corpus), opt_n, opt_seed);
      ScoringOptions so;
      so.pooling = opt_pooled ? Pooling::TokenPooled : Pooling::InstanceMean;
      so.request.rep = parse_representation(opt_rep);
      so.request.compress.include_background = base.context.background;
      so.request.seed = opt_seed;
      const auto sel = select_best(set, instances, builder, logprobs_from(*services.llms.at(opt_endpoint)), so);
      if (opt_out.empty()) {
        write_score_table(std::cout, sel.table);
      } else {
        std::ofstream out(opt_out);
        write_score_table(out, sel.table);
      }
      std::cout << "best " << sel.best.id << "\n";
      return 0;
    }
    if (*run) {
      auto hc = load_harness_config(run_config);
      if (!run_store.empty()) hc.store = run_store;
      ResultStore store(hc.store);
      auto services = make_services(hc, store.cache_dir());
      const auto catalog = load_catalog(hc.catalog);
      std::map<std::string, std::vector<RunConfig>> by_split;
      for (const auto& r : hc.runs) by_split[r.split].push_back(r);
      RunSummary total;
      for (const auto& [split, runs] : by_split) {
        if (!hc.corpora.contains(split)) throw ConfigInvalid("config names no corpus for split '" + split + "'");
        const auto corpus = load_corpus(hc.corpora.at(split));
        const auto s = run_matrix(runs, corpus, catalog, services, store);
        total.new_records += s.new_records;
        total.skipped += s.skipped;
        total.tombstones += s.tombstones;
        total.network_calls += s.network_calls;
      }
      std::cout << nlohmann::json{{"runs", hc.runs.size()},
                                  {"new_records", total.new_records},
                                  {"skipped", total.skipped},
                                  {"tombstones", total.tombstones},
                                  {"network_calls", total.network_calls}}
                       .dump()
                << "\n";
      return 0;
    }
    if (*rep) {
      ResultStore store(rep_store);
      const auto records = store.load();
      const fs::path out_dir = rep_out.empty() ? fs::path(rep_store) / "reports" : fs::path(rep_out);
      fs::create_directories(out_dir);

      const auto lengths = length_report(records);
      std::ostringstream lcsv;
      write_length_csv(lcsv, lengths);
      write_file(out_dir / "length.csv", lcsv.str());
      std::cout << "length.csv rows " << lengths.rows.size() << " excluded " << lengths.excluded << "\n";

      if (rep_uid) {
        const auto metrics = rep_metrics.empty() ? common_metrics(records) : rep_metrics;
        if (metrics.empty()) throw MissingScores("<any>");
        const auto u = uid_report(records, metrics, parse_doubles(rep_a));
        std::ostringstream ucsv, rcsv;
        write_uid_csv(ucsv, u.rows);
        write_rank_csv(rcsv, u.ranks);
        write_file(out_dir / "uid.csv", ucsv.str());
        write_file(out_dir / "rank_dynamics.csv", rcsv.str());
        if (!u.session_macro.empty()) {
          std::ostringstream mcsv;
          write_uid_csv(mcsv, u.session_macro);
          write_file(out_dir / "uid_session_macro.csv", mcsv.str());
        }
        std::cout << "uid.csv rows " << u.rows.size() << " excluded " << u.excluded << "\n";
      }
      return 0;
    }
    if (*chat) {
      const auto hc = load_harness_config(chat_config);
      auto services = make_services(hc, std::nullopt);
      if (!services.llms.contains(chat_endpoint)) throw ConfigInvalid("unknown endpoint '" + chat_endpoint + "'");
      const auto catalog = load_catalog(hc.catalog);
      ChatSession session;
      session.config.endpoint = chat_endpoint;
      session.config.rep = parse_representation(chat_rep);
      session.config.shot = parse_shot(chat_shot);
      session.tmpl = chat_template.empty()
                         ? &resolve_template(catalog, "manual", session.config.shot, {history_class(session.config.rep), false})
                         : &find_template(catalog, chat_template);
      if (!chat_corpus.empty()) session.exemplar_corpus = load_corpus(chat_corpus);
      std::string line;
      while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
        if (line.empty()) continue;
        try {
          const auto turn = chat_turn(session, line, services);
          std::cout << turn.reply << "\n[prompt " << turn.prompt.total_tokens << " tokens, reply " << turn.completion_tokens
                    << ", session " << turn.tokens_used << "]\n";
        } catch (const Error& e) {
          std::cerr << "error: " << e.what() << "\n";
        }
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "fp: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "fp: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
