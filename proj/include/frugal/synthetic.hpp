#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "frugal/corpus.hpp"

namespace frugal {

struct SyntheticOptions {
  std::size_t conversations = 10;
  std::size_t utterances = 6;  // per conversation, even
  std::size_t min_words = 4;
  std::size_t max_words = 14;
  bool persona = false;
  DatasetKind kind = DatasetKind::Generic;
  std::uint64_t seed = 7;
};

/// Seeded toy dialogs over a small vocabulary. MSC conversations spread their
/// turns over sessions 1..4.
inline std::vector<Conversation> synthetic_corpus(const SyntheticOptions& o) {
  static constexpr std::array<const char*, 40> kWords{
      "i",     "you",   "we",    "like",  "love",   "dogs",   "cats",  "music", "guitar", "hiking",
      "work",  "today", "went",  "the",   "park",   "a",      "new",   "book",  "coffee", "really",
      "do",    "have",  "been",  "to",    "beach",  "cook",   "pasta", "my",    "sister", "lives",
      "near",  "city",  "play",  "games", "summer", "travel", "often", "what",  "about",  "weekend"};
  std::mt19937_64 rng(o.seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto sentence = [&] {
    const auto n = o.min_words + pick(o.max_words - o.min_words + 1);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += kWords[pick(kWords.size())];
    }
    return normalize_utterance(s + ".");
  };

  std::vector<Conversation> out;
  for (std::size_t c = 0; c < o.conversations; ++c) {
    Conversation conv;
    conv.id = "syn-" + std::to_string(c);
    conv.dataset_kind = o.kind;
    for (std::size_t u = 0; u < o.utterances; ++u) {
      Utterance utt{u % 2 == 0 ? Speaker::P1 : Speaker::P2, sentence(), u, std::nullopt};
      if (o.kind == DatasetKind::MSC) utt.session = 1 + static_cast<int>((u / 2) * 4 / std::max<std::size_t>(1, (o.utterances + 1) / 2));
      conv.utterances.push_back(std::move(utt));
    }
    if (o.persona) conv.background = BackgroundInfo{BackgroundInfo::Kind::Persona, sentence() + " " + sentence(), sentence(), std::nullopt};
    out.push_back(std::move(conv));
  }
  return out;
}

}  // namespace frugal
