#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "frugal/compressor.hpp"
#include "frugal/corpus.hpp"
#include "frugal/errors.hpp"
#include "frugal/hashing.hpp"
#include "frugal/tokenizer.hpp"

namespace frugal {

enum class Slot { S, U, R, BI_P1, BI_P2, S_E, U_E, R_E, BI_P1_E, BI_P2_E, INSTRUCTION };

inline constexpr std::array<std::pair<Slot, std::string_view>, 11> kSlotNames{{
    {Slot::S, "S"},
    {Slot::U, "U"},
    {Slot::R, "R"},
    {Slot::BI_P1, "BI_P1"},
    {Slot::BI_P2, "BI_P2"},
    {Slot::S_E, "S_E"},
    {Slot::U_E, "U_E"},
    {Slot::R_E, "R_E"},
    {Slot::BI_P1_E, "BI_P1_E"},
    {Slot::BI_P2_E, "BI_P2_E"},
    {Slot::INSTRUCTION, "INSTRUCTION"},
}};

inline std::string_view slot_name(Slot s) {
  for (const auto& [slot, name] : kSlotNames) {
    if (slot == s) return name;
  }
  return "?";
}

inline std::optional<Slot> slot_from_name(std::string_view name) {
  for (const auto& [slot, n] : kSlotNames) {
    if (n == name) return slot;
  }
  return std::nullopt;
}

inline bool is_exemplar_slot(Slot s) {
  return s == Slot::S_E || s == Slot::U_E || s == Slot::R_E || s == Slot::BI_P1_E || s == Slot::BI_P2_E;
}

enum class ShotMode { ZeroShot, FewShot };

inline std::string_view to_string(ShotMode m) { return m == ShotMode::ZeroShot ? "zs" : "fs"; }

inline ShotMode parse_shot(std::string_view s) {
  if (s == "zs" || s == "zero" || s == "zero-shot") return ShotMode::ZeroShot;
  if (s == "fs" || s == "few" || s == "few-shot") return ShotMode::FewShot;
  throw ConfigInvalid("shot must be 'zs' or 'fs', got '" + std::string(s) + "'");
}

/// What a template expects as dialog context: a history class, and whether
/// background information slots are present.
struct TemplateContext {
  HistoryClass history = HistoryClass::Summary;
  bool background = false;

  friend bool operator==(const TemplateContext&, const TemplateContext&) = default;
};

inline std::string to_string(const TemplateContext& c) {
  std::string h;
  switch (c.history) {
    case HistoryClass::None: return "bi";
    case HistoryClass::Full: h = "full"; break;
    case HistoryClass::Recent: h = "recent"; break;
    case HistoryClass::Semantic: h = "semantic"; break;
    case HistoryClass::Summary: h = "summary"; break;
  }
  return c.background ? h + "+bi" : h;
}

inline TemplateContext parse_template_context(std::string_view s) {
  if (s == "bi") return {HistoryClass::None, true};
  TemplateContext c;
  std::string_view h = s;
  if (s.size() > 3 && s.substr(s.size() - 3) == "+bi") {
    c.background = true;
    h = s.substr(0, s.size() - 3);
  }
  if (h == "full") c.history = HistoryClass::Full;
  else if (h == "recent") c.history = HistoryClass::Recent;
  else if (h == "semantic") c.history = HistoryClass::Semantic;
  else if (h == "summary") c.history = HistoryClass::Summary;
  else throw ConfigInvalid("unknown template context '" + std::string(s) + "'");
  return c;
}

struct Literal {
  std::string text;
  friend bool operator==(const Literal&, const Literal&) = default;
};

using Segment = std::variant<Literal, Slot>;

struct PromptTemplate {
  std::string id;
  ShotMode shot = ShotMode::ZeroShot;
  TemplateContext context;
  std::string type = "manual";  // "manual" or "perplexity"
  std::vector<Segment> segments;

  bool has(Slot s) const {
    return std::any_of(segments.begin(), segments.end(), [s](const Segment& seg) {
      const auto* p = std::get_if<Slot>(&seg);
      return p && *p == s;
    });
  }
  std::size_t count(Slot s) const {
    return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [s](const Segment& seg) {
      const auto* p = std::get_if<Slot>(&seg);
      return p && *p == s;
    }));
  }

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

/// Throws BadTemplate unless the slot layout is consistent with the
/// template's shot mode and context.
inline void validate(const PromptTemplate& t) {
  auto bad = [&t](const std::string& why) { return BadTemplate(t.id, why); };
  if (t.id.empty()) throw BadTemplate("<unnamed>", "empty id");
  if (t.count(Slot::U) != 1) throw bad("slot [U] must appear exactly once");
  if (t.has(Slot::R)) throw bad("slot [R] cannot be part of a prompt");
  const bool wants_history = t.context.history != HistoryClass::None;
  if (t.has(Slot::S) != wants_history) throw bad(wants_history ? "context needs slot [S]" : "slot [S] without history context");
  for (auto s : {Slot::BI_P1, Slot::BI_P2}) {
    if (t.has(s) != t.context.background) {
      throw bad(t.context.background ? "context needs background slots" : "background slot without background context");
    }
  }
  if (t.shot == ShotMode::ZeroShot) {
    for (const auto& seg : t.segments) {
      if (const auto* s = std::get_if<Slot>(&seg); s && is_exemplar_slot(*s)) throw bad("zero-shot template has exemplar slots");
    }
    return;
  }
  std::vector<Slot> required{Slot::U_E, Slot::R_E};
  if (wants_history) required.push_back(Slot::S_E);
  if (t.context.background) {
    required.push_back(Slot::BI_P1_E);
    required.push_back(Slot::BI_P2_E);
  }
  for (auto s : required) {
    if (!t.has(s)) throw bad("few-shot template lacks slot [" + std::string(slot_name(s)) + "]");
  }
  if (!wants_history && t.has(Slot::S_E)) throw bad("slot [S_E] without history context");
  if (!t.context.background && (t.has(Slot::BI_P1_E) || t.has(Slot::BI_P2_E))) throw bad("exemplar background without background context");
}

// --- catalog file -------------------------------------------------------------

inline nlohmann::json to_json(const PromptTemplate& t) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : t.segments) {
    if (const auto* lit = std::get_if<Literal>(&seg)) segs.push_back({{"lit", lit->text}});
    else segs.push_back({{"slot", std::string(slot_name(std::get<Slot>(seg)))}});
  }
  return {{"id", t.id}, {"shot", std::string(to_string(t.shot))}, {"context", to_string(t.context)}, {"type", t.type},
          {"segments", segs}};
}

inline PromptTemplate template_from_json(const nlohmann::json& j) {
  const std::string id = j.is_object() ? j.value("id", std::string()) : std::string();
  auto bad = [&id](const std::string& why) { return BadTemplate(id.empty() ? "<unnamed>" : id, why); };
  if (!j.is_object()) throw bad("record is not an object");
  PromptTemplate t;
  t.id = id;
  try {
    t.shot = parse_shot(j.value("shot", std::string()));
    t.context = parse_template_context(j.value("context", std::string()));
  } catch (const ConfigInvalid& e) {
    throw bad(e.what());
  }
  t.type = j.value("type", std::string("manual"));
  if (!j.contains("segments") || !j["segments"].is_array()) throw bad("missing 'segments'");
  for (const auto& seg : j["segments"]) {
    if (seg.contains("lit") && seg["lit"].is_string()) {
      t.segments.emplace_back(Literal{seg["lit"].get<std::string>()});
    } else if (seg.contains("slot") && seg["slot"].is_string()) {
      const auto name = seg["slot"].get<std::string>();
      const auto slot = slot_from_name(name);
      if (!slot) throw bad("unknown slot '" + name + "'");
      t.segments.emplace_back(*slot);
    } else {
      throw bad("segment must be {\"lit\": ...} or {\"slot\": ...}");
    }
  }
  validate(t);
  return t;
}

/// One JSON template per non-blank line.
inline std::vector<PromptTemplate> load_templates(std::istream& in) {
  std::vector<PromptTemplate> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw BadTemplate("<line " + std::to_string(out.size() + 1) + ">", "not valid JSON");
    out.push_back(template_from_json(j));
  }
  return out;
}

inline void write_templates(std::ostream& out, const std::vector<PromptTemplate>& templates) {
  for (const auto& t : templates) out << to_json(t).dump() << '\n';
}

// --- builtin catalog ----------------------------------------------------------

namespace detail {

// How the dialog-context phrase reads for each history class.
inline std::string context_noun(HistoryClass h) {
  switch (h) {
    case HistoryClass::Full: return "full history";
    case HistoryClass::Recent: return "list of recent utterances";
    case HistoryClass::Semantic: return "list of semantic utterances";
    default: return "summary";
  }
}

inline std::string article_for(const std::string& noun) { return noun.rfind("full", 0) == 0 ? "the " : "a "; }

class TemplateBuilder {
 public:
  TemplateBuilder& lit(std::string s) {
    segs_.emplace_back(Literal{std::move(s)});
    return *this;
  }
  TemplateBuilder& slot(Slot s) {
    segs_.emplace_back(s);
    return *this;
  }
  TemplateBuilder& append(const std::vector<Segment>& more) {
    segs_.insert(segs_.end(), more.begin(), more.end());
    return *this;
  }
  std::vector<Segment> segments() const { return segs_; }

 private:
  std::vector<Segment> segs_;
};

// The dialog-context and background blocks of the manual templates.
inline std::vector<Segment> background_block(bool exemplar) {
  return TemplateBuilder()
      .lit("Here are some background details about Person1: ")
      .slot(exemplar ? Slot::BI_P1_E : Slot::BI_P1)
      .lit("\nHere are some background details about Person2: ")
      .slot(exemplar ? Slot::BI_P2_E : Slot::BI_P2)
      .lit("\n")
      .segments();
}

inline std::vector<Segment> history_block(HistoryClass h, bool exemplar) {
  const auto noun = context_noun(h);
  return TemplateBuilder()
      .lit("This is " + article_for(noun) + noun + " of a dialog exchange between Person1 and Person2: ")
      .slot(exemplar ? Slot::S_E : Slot::S)
      .lit("\n")
      .segments();
}

inline std::vector<Segment> turn_block(const std::string& instruction, bool exemplar) {
  TemplateBuilder b;
  b.lit(instruction + "\nPerson1: ").slot(exemplar ? Slot::U_E : Slot::U);
  if (exemplar) b.lit("\nPerson2: ").slot(Slot::R_E).lit("\n");
  else b.lit("\nPerson2:");
  return b.segments();
}

inline std::string turn_instruction(HistoryClass h, bool background, bool fewshot_tail) {
  const auto noun = context_noun(h);
  if (h == HistoryClass::None) {
    return "Given the background details of Person1 and Person2, give a consistent and diverse response to the following dialog spoken by Person1.";
  }
  if (!background) {
    return "Given the " + noun + " of the dialog exchange between Person1 and Person2, give a consistent and diverse response to the following dialog by Person1.";
  }
  if (fewshot_tail) {
    return "Given the " + noun + " of the dialog exchange between Person1 and Person2 and their background details, give a consistent and diverse response to the following dialog spoken by Person1.";
  }
  return "Given the background details and the " + noun + " of the dialog exchange between Person1 and Person2, give a consistent and diverse response to the following dialog by Person1.";
}

inline std::string learn_instruction(HistoryClass h, bool background) {
  const auto noun = context_noun(h);
  if (h == HistoryClass::None) {
    return "Learn from the below example on how to use background details to generate a consistent and diverse response by Person2 on what Person1 says. Example:\n";
  }
  if (!background) {
    return "Learn from the below example on how to generate consistent and diverse responses between Person1 and Person2 given " + noun + ". Example:\n";
  }
  return "Learn from the below example on how to generate consistent and diverse responses between Person1 and Person2 given background details along with " + noun + ". Example:\n";
}

// The main-input part shared by the zero-shot prompt and the few-shot tail.
inline std::vector<Segment> main_input(HistoryClass h, bool background, bool fewshot_tail) {
  TemplateBuilder b;
  if (background) b.append(background_block(false));
  if (h != HistoryClass::None) b.append(history_block(h, false));
  b.append(turn_block(turn_instruction(h, background, fewshot_tail), false));
  return b.segments();
}

inline PromptTemplate manual_template(ShotMode shot, HistoryClass h, bool background) {
  PromptTemplate t;
  t.shot = shot;
  t.context = {h, background};
  t.type = "manual";
  t.id = "manual/" + std::string(to_string(shot)) + "/" + to_string(t.context);
  TemplateBuilder b;
  b.lit("Automated Chat System:\n");
  if (shot == ShotMode::FewShot) {
    b.lit(learn_instruction(h, background));
    if (background) b.append(background_block(true));
    if (h != HistoryClass::None) b.append(history_block(h, true));
    // Persona-only exemplars reuse the main instruction verbatim.
    const auto ex_instruction = h == HistoryClass::None ? turn_instruction(h, true, false) : turn_instruction(h, background, false);
    b.append(turn_block(ex_instruction, true));
    b.lit("Now try it yourself:\n");
  }
  b.append(main_input(h, background, shot == ShotMode::FewShot));
  t.segments = b.segments();
  return t;
}

}  // namespace detail

/// Manual templates for zero/few-shot x {history, background, history +
/// background} over every history class, plus perplexity-optimized ones.
/// Knowledge backgrounds use the same templates as personas.
inline std::vector<PromptTemplate> builtin_templates() {
  using detail::manual_template;
  std::vector<PromptTemplate> out;
  for (auto shot : {ShotMode::ZeroShot, ShotMode::FewShot}) {
    for (auto h : {HistoryClass::Summary, HistoryClass::Full, HistoryClass::Recent, HistoryClass::Semantic}) {
      out.push_back(manual_template(shot, h, false));
      out.push_back(manual_template(shot, h, true));
    }
    out.push_back(manual_template(shot, HistoryClass::None, true));
  }

  // Perplexity-selected under FLAN-T5-XL.
  PromptTemplate flan_summary;
  flan_summary.id = "perplexity/flan-t5-xl/zs/summary";
  flan_summary.type = "perplexity";
  flan_summary.shot = ShotMode::ZeroShot;
  flan_summary.context = {HistoryClass::Summary, false};
  flan_summary.segments = detail::TemplateBuilder()
                              .lit("Here is a summary of the conversation between Person1 and Person2: ")
                              .slot(Slot::S)
                              .lit("\nBased on the dialog between the Person1 and the Person2 so far, try to anticipate what the "
                                   "Person2's response might be to the Person1's next statement.\nPerson1: ")
                              .slot(Slot::U)
                              .lit("\nPerson2:")
                              .segments();
  out.push_back(flan_summary);

  PromptTemplate flan_persona;
  flan_persona.id = "perplexity/flan-t5-xl/zs/bi";
  flan_persona.type = "perplexity";
  flan_persona.shot = ShotMode::ZeroShot;
  flan_persona.context = {HistoryClass::None, true};
  flan_persona.segments = detail::TemplateBuilder()
                              .lit("Here is some information about the Person1 and Person2: ")
                              .slot(Slot::BI_P1)
                              .lit(" ")
                              .slot(Slot::BI_P2)
                              .lit("\nBased on the information provided about the Person1 and the Person2, predict what the Person2 "
                                   "might have said in response to the Person1's dialogue. Person1: ")
                              .slot(Slot::U)
                              .lit("\nPerson2:")
                              .segments();
  out.push_back(flan_persona);

  PromptTemplate t0_summary;
  t0_summary.id = "perplexity/t0-3b/zs/summary";
  t0_summary.type = "perplexity";
  t0_summary.shot = ShotMode::ZeroShot;
  t0_summary.context = {HistoryClass::Summary, false};
  t0_summary.segments = detail::TemplateBuilder()
                            .lit("Here is a summary of the conversation between Person1 and Person2: ")
                            .slot(Slot::S)
                            .lit("\nBased on the summary of conversation between Person1 and Person2, what do you think Person2 "
                                 "will say next?\nPerson1: ")
                            .slot(Slot::U)
                            .lit("\nPerson2:")
                            .segments();
  out.push_back(t0_summary);

  for (const auto& t : out) validate(t);
  return out;
}

inline const PromptTemplate& find_template(const std::vector<PromptTemplate>& catalog, const std::string& id) {
  for (const auto& t : catalog) {
    if (t.id == id) return t;
  }
  throw ConfigInvalid("no template with id '" + id + "'");
}

/// First template of the given type matching shot mode and context.
inline const PromptTemplate& resolve_template(const std::vector<PromptTemplate>& catalog, const std::string& type,
                                              ShotMode shot, const TemplateContext& ctx) {
  for (const auto& t : catalog) {
    if (t.type == type && t.shot == shot && t.context == ctx) return t;
  }
  throw ConfigInvalid("no " + type + " template for " + std::string(to_string(shot)) + "/" + to_string(ctx));
}

// --- exemplars ----------------------------------------------------------------

/// A demonstration instance, compressed with the same representation as the
/// instance it accompanies. When shifted from the same conversation the
/// speaker roles are mirrored (the exemplar's "Person2" is the main input's
/// Person1).
struct Exemplar {
  Instance instance;
  bool swapped_roles = false;
  CompressedContext context;
};

/// Picks exemplars: the same conversation shifted back by one utterance when
/// the instance has any history, otherwise a seeded random instance from a
/// different conversation.
class ExemplarSelector {
 public:
  explicit ExemplarSelector(const std::vector<Conversation>& corpus) : corpus_(&corpus) {
    for (std::size_t i = 0; i < corpus.size(); ++i) by_id_.emplace(corpus[i].id, i);
    pool_ = build_all_instances(corpus);
  }

  /// The exemplar's instance and whether roles are mirrored; no compression.
  std::pair<Instance, bool> pick(const Instance& inst, std::uint64_t seed) const {
    const auto t = inst.target.index;
    if (!inst.history.empty()) {
      if (auto it = by_id_.find(inst.conversation_id); it != by_id_.end()) {
        const auto& u = (*corpus_)[it->second].utterances;
        if (t < u.size()) {
          Instance ex;
          ex.conversation_id = inst.conversation_id;
          ex.history.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(t - 2));
          ex.current = u[t - 2];
          ex.target = u[t - 1];
          ex.background = inst.background;
          ex.origin_session = ex.target.session;
          return {std::move(ex), true};
        }
      }
    }
    std::vector<const Instance*> candidates;
    for (const auto& p : pool_) {
      if (p.conversation_id != inst.conversation_id) candidates.push_back(&p);
    }
    if (candidates.empty()) throw EmptyCorpus();
    std::mt19937_64 rng(seed ^ stable_hash64(inst.ref()));
    return {*candidates[rng() % candidates.size()], false};
  }

  Exemplar select(const Instance& inst, const HistoryRepresentation& rep, std::uint64_t seed, Compressor& compressor,
                  const CompressOptions& opts = {}) const {
    auto [ex, swapped] = pick(inst, seed);
    auto ctx = compressor.compress(ex, rep, opts, swapped);
    return {std::move(ex), swapped, std::move(ctx)};
  }

 private:
  const std::vector<Conversation>* corpus_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<Instance> pool_;
};

inline Exemplar select_exemplar(const Instance& inst, const std::vector<Conversation>& corpus, const HistoryRepresentation& rep,
                                std::uint64_t seed, Compressor& compressor, const CompressOptions& opts = {}) {
  return ExemplarSelector(corpus).select(inst, rep, seed, compressor, opts);
}

// --- rendering ----------------------------------------------------------------

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  std::map<std::string, std::size_t> component_lengths;  // slot name -> tokens
  std::size_t literal_tokens = 0;
  std::size_t total_tokens = 0;
  std::string instance_ref;
};

struct RenderOptions {
  std::string tokenizer_id = "whitespace";
  std::optional<std::string> instruction;  // fills [INSTRUCTION]
};

namespace detail {

inline bool starts_ws(std::string_view s) { return !s.empty() && frugal::detail::is_space(s.front()); }
inline bool ends_ws(std::string_view s) { return !s.empty() && frugal::detail::is_space(s.back()); }

inline std::optional<std::string> side_text(const std::optional<std::string>& s) { return s ? s : std::optional<std::string>(""); }

}  // namespace detail

/// Substitutes every slot and records per-slot token counts. Adjacent pieces
/// that would otherwise fuse into one word are separated by a single space,
/// so the token count of the text equals the sum of the pieces' counts under
/// a whitespace tokenizer.
inline RenderedPrompt render_prompt(const PromptTemplate& tmpl, const Instance& inst, const CompressedContext& ctx,
                                    const std::optional<Exemplar>& exemplar = std::nullopt, const RenderOptions& opts = {}) {
  const auto tok = TokenizerRegistry::global().get(opts.tokenizer_id);
  auto need_exemplar = [&](Slot s) -> const Exemplar& {
    if (!exemplar) throw MissingSlotData(std::string(slot_name(s)));
    return *exemplar;
  };
  auto background_of = [](const CompressedContext& c, Slot s, bool p1) -> std::string {
    if (!c.bi_summary_text) throw MissingSlotData(std::string(slot_name(s)));
    return *detail::side_text(p1 ? c.background.p1 : c.background.p2);
  };
  auto slot_text = [&](Slot s) -> std::string {
    switch (s) {
      case Slot::S: return ctx.history_text();
      case Slot::U: return inst.current.text;
      case Slot::R: throw MissingSlotData("R");
      case Slot::BI_P1: return background_of(ctx, s, true);
      case Slot::BI_P2: return background_of(ctx, s, false);
      case Slot::S_E: return need_exemplar(s).context.history_text();
      case Slot::U_E: return need_exemplar(s).instance.current.text;
      case Slot::R_E: return need_exemplar(s).instance.target.text;
      case Slot::BI_P1_E: return background_of(need_exemplar(s).context, s, true);
      case Slot::BI_P2_E: return background_of(need_exemplar(s).context, s, false);
      case Slot::INSTRUCTION:
        if (!opts.instruction) throw MissingSlotData("INSTRUCTION");
        return *opts.instruction;
    }
    throw MissingSlotData("?");
  };

  RenderedPrompt out;
  out.template_id = tmpl.id;
  out.instance_ref = inst.ref();
  for (const auto& seg : tmpl.segments) {
    std::string piece;
    const Slot* slot = std::get_if<Slot>(&seg);
    if (slot) piece = slot_text(*slot);
    else piece = std::get<Literal>(seg).text;
    if (!piece.empty() && !out.text.empty() && !detail::ends_ws(out.text) && !detail::starts_ws(piece)) out.text += ' ';
    out.text += piece;
    const auto n = tok->count(piece);
    if (slot) out.component_lengths[std::string(slot_name(*slot))] += n;
    else out.literal_tokens += n;
  }
  out.total_tokens = out.literal_tokens;
  for (const auto& [name, n] : out.component_lengths) out.total_tokens += n;
  return out;
}

/// Everything needed to go from an instance to a rendered prompt: the
/// compressor, exemplar selection and the render call.
class PromptBuilder {
 public:
  PromptBuilder(const std::vector<Conversation>& corpus, Compressor& compressor)
      : selector_(corpus), compressor_(&compressor) {}

  struct Request {
    const PromptTemplate* tmpl = nullptr;
    HistoryRepresentation rep = FullHistory{};
    CompressOptions compress;
    RenderOptions render;
    std::uint64_t seed = 0;
  };

  RenderedPrompt build(const Instance& inst, const Request& req) const {
    check_compatible(*req.tmpl, req.rep, req.compress);
    const auto ctx = compressor_->compress(inst, req.rep, req.compress);
    std::optional<Exemplar> ex;
    if (req.tmpl->shot == ShotMode::FewShot) ex = selector_.select(inst, req.rep, req.seed, *compressor_, req.compress);
    return render_prompt(*req.tmpl, inst, ctx, ex, req.render);
  }

  static void check_compatible(const PromptTemplate& t, const HistoryRepresentation& rep, const CompressOptions& opts) {
    const bool bi = opts.include_background || std::holds_alternative<SummaryPlusBI>(rep);
    if (t.context.history != history_class(rep) || t.context.background != bi) {
      throw ConfigInvalid("template '" + t.id + "' (" + to_string(t.context) + ") does not fit representation '" +
                          to_string(rep) + "'" + (bi ? " with background" : ""));
    }
  }

  Compressor& compressor() const { return *compressor_; }
  const ExemplarSelector& selector() const { return selector_; }

 private:
  ExemplarSelector selector_;
  Compressor* compressor_;
};

}  // namespace frugal
