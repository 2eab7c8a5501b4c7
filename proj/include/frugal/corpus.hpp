#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/errors.hpp"

namespace frugal {

enum class Speaker { P1, P2 };

inline Speaker other(Speaker s) { return s == Speaker::P1 ? Speaker::P2 : Speaker::P1; }

inline std::string_view person_label(Speaker s) { return s == Speaker::P1 ? "Person1" : "Person2"; }

struct Utterance {
  Speaker speaker = Speaker::P1;
  std::string text;
  std::size_t index = 0;
  std::optional<int> session;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct BackgroundInfo {
  enum class Kind { Persona, Knowledge };
  Kind kind = Kind::Persona;
  std::optional<std::string> p1_text;
  std::optional<std::string> p2_text;
  std::optional<std::string> shared_text;

  friend bool operator==(const BackgroundInfo&, const BackgroundInfo&) = default;
};

enum class DatasetKind { MSC, TC, Generic };

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;
  std::optional<BackgroundInfo> background;
  DatasetKind dataset_kind = DatasetKind::Generic;
  // Source split tag, set when several splits are merged (e.g. TC "frequent"/"rare").
  std::optional<std::string> provenance;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// One context-response evaluation unit: `current` is spoken by P1 and `target`
/// is the P2 reply that follows it.
struct Instance {
  std::string conversation_id;
  std::vector<Utterance> history;
  Utterance current;
  Utterance target;
  std::optional<BackgroundInfo> background;
  std::optional<int> origin_session;

  // "<conversation id>#<target index>", unique within a corpus.
  std::string ref() const { return conversation_id + "#" + std::to_string(target.index); }
};

// --- normalization ---------------------------------------------------------

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline bool is_ascii_lower(char c) { return c >= 'a' && c <= 'z'; }

}  // namespace detail

/// Strips trailing whitespace and upper-cases the first character of every
/// sentence when it is a lowercase letter. A sentence starts at the beginning of the text and after any of
/// `.`, `!` or `?` that is followed by whitespace. Idempotent.
inline std::string normalize_utterance(std::string_view raw) {
  std::size_t end = raw.size();
  while (end > 0 && detail::is_space(raw[end - 1])) --end;
  std::string out(raw.substr(0, end));

  bool sentence_start = true;
  for (std::size_t i = 0; i < out.size(); ++i) {
    char c = out[i];
    if (sentence_start && !detail::is_space(c)) {
      // The first visible character opens the sentence; only a lowercase
      // ASCII letter there is changed.
      if (detail::is_ascii_lower(c)) out[i] = static_cast<char>(c - 'a' + 'A');
      sentence_start = false;
    }
    if ((c == '.' || c == '!' || c == '?') && i + 1 < out.size() && detail::is_space(out[i + 1])) {
      sentence_start = true;
    }
  }
  return out;
}

inline Conversation normalize_conversation(Conversation conv) {
  for (auto& u : conv.utterances) u.text = normalize_utterance(u.text);
  return conv;
}

// --- line format -----------------------------------------------------------

namespace detail {

inline std::string_view dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::MSC: return "msc";
    case DatasetKind::TC: return "tc";
    case DatasetKind::Generic: return "generic";
  }
  return "generic";
}

inline Conversation conversation_from_json(const nlohmann::json& j, std::size_t line) {
  auto fail = [line](const std::string& msg) -> MalformedRecord { return MalformedRecord(line, msg); };
  if (!j.is_object()) throw fail("record is not an object");

  Conversation conv;
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string 'id'");
  conv.id = j["id"].get<std::string>();

  const std::string dataset = j.value("dataset", std::string("generic"));
  if (dataset == "msc") conv.dataset_kind = DatasetKind::MSC;
  else if (dataset == "tc") conv.dataset_kind = DatasetKind::TC;
  else if (dataset == "generic") conv.dataset_kind = DatasetKind::Generic;
  else throw fail("unknown dataset '" + dataset + "'");

  if (j.contains("provenance") && j["provenance"].is_string()) conv.provenance = j["provenance"].get<std::string>();

  if (!j.contains("utterances") || !j["utterances"].is_array()) throw fail("missing array 'utterances'");
  for (const auto& u : j["utterances"]) {
    if (!u.is_object() || !u.contains("speaker") || !u.contains("text") || !u["text"].is_string()) {
      throw fail("utterance needs 'speaker' and string 'text'");
    }
    Utterance utt;
    const auto sp = u["speaker"].get<std::string>();
    if (sp == "p1") utt.speaker = Speaker::P1;
    else if (sp == "p2") utt.speaker = Speaker::P2;
    else throw fail("unknown speaker '" + sp + "'");
    utt.text = u["text"].get<std::string>();
    utt.index = conv.utterances.size();
    if (u.contains("session") && !u["session"].is_null()) {
      if (!u["session"].is_number_integer()) throw fail("'session' must be an integer");
      utt.session = u["session"].get<int>();
    } else if (conv.dataset_kind == DatasetKind::MSC) {
      throw fail("msc utterances need a 'session'");
    }
    // Other per-utterance metadata (e.g. MSC time-elapsed) is ignored.
    conv.utterances.push_back(std::move(utt));
  }

  if (j.contains("background") && !j["background"].is_null()) {
    const auto& b = j["background"];
    BackgroundInfo bi;
    const auto kind = b.value("kind", std::string());
    if (kind == "persona") bi.kind = BackgroundInfo::Kind::Persona;
    else if (kind == "knowledge") bi.kind = BackgroundInfo::Kind::Knowledge;
    else throw fail("background kind must be 'persona' or 'knowledge'");
    auto opt = [&b](const char* key) -> std::optional<std::string> {
      if (b.contains(key) && b[key].is_string()) return b[key].get<std::string>();
      return std::nullopt;
    };
    bi.p1_text = opt("p1");
    bi.p2_text = opt("p2");
    bi.shared_text = opt("shared");
    if (bi.kind == BackgroundInfo::Kind::Persona && !bi.p1_text && !bi.p2_text) {
      throw fail("persona background needs 'p1' or 'p2'");
    }
    if (bi.kind == BackgroundInfo::Kind::Knowledge && !bi.shared_text) {
      throw fail("knowledge background needs 'shared'");
    }
    conv.background = std::move(bi);
  }

  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    const Speaker expected = (i % 2 == 0) ? Speaker::P1 : Speaker::P2;
    if (conv.utterances[i].speaker != expected) throw NonAlternatingSpeakers(conv.id);
  }
  return conv;
}

}  // namespace detail

inline nlohmann::json to_json(const Conversation& conv) {
  nlohmann::json j;
  j["id"] = conv.id;
  j["dataset"] = std::string(detail::dataset_name(conv.dataset_kind));
  if (conv.provenance) j["provenance"] = *conv.provenance;
  auto& arr = j["utterances"] = nlohmann::json::array();
  for (const auto& u : conv.utterances) {
    nlohmann::json ju{{"speaker", u.speaker == Speaker::P1 ? "p1" : "p2"}, {"text", u.text}};
    if (u.session) ju["session"] = *u.session;
    arr.push_back(std::move(ju));
  }
  if (conv.background) {
    const auto& bi = *conv.background;
    nlohmann::json jb{{"kind", bi.kind == BackgroundInfo::Kind::Persona ? "persona" : "knowledge"}};
    if (bi.p1_text) jb["p1"] = *bi.p1_text;
    if (bi.p2_text) jb["p2"] = *bi.p2_text;
    if (bi.shared_text) jb["shared"] = *bi.shared_text;
    j["background"] = std::move(jb);
  }
  return j;
}

/// Parses one conversation per non-blank line. Throws MalformedRecord (with
/// the 1-based line number) or NonAlternatingSpeakers.
inline std::vector<Conversation> parse_conversations(std::istream& in) {
  std::vector<Conversation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(lineno, e.what());
    }
    try {
      out.push_back(detail::conversation_from_json(j, lineno));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(lineno, e.what());
    }
  }
  return out;
}

inline std::vector<Conversation> parse_conversations(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_conversations(in);
}

inline void write_conversations(std::ostream& out, const std::vector<Conversation>& convs) {
  for (const auto& c : convs) out << to_json(c).dump() << '\n';
}

/// Concatenates several splits, tagging each conversation with its split name.
inline std::vector<Conversation> merge_splits(std::vector<std::pair<std::string, std::vector<Conversation>>> splits) {
  std::vector<Conversation> out;
  for (auto& [tag, convs] : splits) {
    for (auto& c : convs) {
      c.provenance = tag;
      out.push_back(std::move(c));
    }
  }
  return out;
}

// --- instances ------------------------------------------------------------

inline bool is_msc_eval_session(const std::optional<int>& s) { return s && *s >= 2 && *s <= 4; }

/// One instance per (P1, P2) turn; history is the whole prefix before the
/// turn. MSC conversations only yield instances whose response lies in
/// sessions 2-4, but their history still spans every session. A trailing P1
/// utterance without a reply is dropped.
inline std::vector<Instance> build_instances(const Conversation& conv) {
  if (conv.utterances.size() < 2) throw TooShort(conv.id);
  std::vector<Instance> out;
  const auto& u = conv.utterances;
  for (std::size_t t = 0; 2 * t + 1 < u.size(); ++t) {
    const auto& current = u[2 * t];
    const auto& target = u[2 * t + 1];
    if (conv.dataset_kind == DatasetKind::MSC && !is_msc_eval_session(target.session)) continue;
    Instance inst;
    inst.conversation_id = conv.id;
    inst.history.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(2 * t));
    inst.current = current;
    inst.target = target;
    inst.background = conv.background;
    inst.origin_session = target.session;
    out.push_back(std::move(inst));
  }
  return out;
}

/// Instances of every conversation in order; conversations too short to form
/// a turn are skipped.
inline std::vector<Instance> build_all_instances(const std::vector<Conversation>& corpus) {
  std::vector<Instance> out;
  for (const auto& c : corpus) {
    if (c.utterances.size() < 2) continue;
    auto part = build_instances(c);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

/// Builds the instance whose response is utterance `target_index` of `conv`.
inline std::optional<Instance> instance_at(const Conversation& conv, std::size_t target_index) {
  if (target_index % 2 != 1 || target_index >= conv.utterances.size()) return std::nullopt;
  Instance inst;
  inst.conversation_id = conv.id;
  inst.history.assign(conv.utterances.begin(), conv.utterances.begin() + static_cast<std::ptrdiff_t>(target_index - 1));
  inst.current = conv.utterances[target_index - 1];
  inst.target = conv.utterances[target_index];
  inst.background = conv.background;
  inst.origin_session = inst.target.session;
  return inst;
}

}  // namespace frugal
