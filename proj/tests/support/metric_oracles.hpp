#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nbt/category_map.hpp"
#include "nbt/evaluation.hpp"
#include "nbt/rng.hpp"

namespace nbt::testing {

/// A caption word with the category a careful reader assigns to it.
struct LabeledWord {
  const char* surface;
  const char* category;  // nullptr for non-object words
};

inline constexpr std::array<LabeledWord, 26> kWordPool{{
    {"a", nullptr},        {"two", nullptr},       {"on", nullptr},         {"near", nullptr},
    {"the", nullptr},      {"busy", nullptr},      {"sitting", nullptr},    {"street", nullptr},
    {"cat", "cat"},        {"kitten", "cat"},      {"kittens", "cat"},      {"cats", "cat"},
    {"dog", "dog"},        {"puppies", "dog"},     {"beagles", "dog"},      {"remote", "remote"},
    {"remotes", "remote"}, {"bus", "bus"},         {"buses", "bus"},        {"minibus", "bus"},
    {"sofa", "couch"},     {"couches", "couch"},   {"table", "dining table"}, {"people", "person"},
    {"geese", "bird"},     {"cheesecake", "cake"},
}};

struct LabeledCaption {
  std::string text;
  std::set<std::string> categories;
};

inline LabeledCaption random_caption(Rng& rng) {
  LabeledCaption out;
  const int n = 2 + static_cast<int>(rng.below(7));
  for (int i = 0; i < n; ++i) {
    const auto& w = kWordPool[static_cast<std::size_t>(rng.below(kWordPool.size()))];
    if (!out.text.empty()) out.text += ' ';
    out.text += w.surface;
    if (w.category) out.categories.insert(w.category);
  }
  if (rng.bernoulli(0.3)) out.text += ".";
  return out;
}

/// Percentage of captions whose labels contain both names of one of their pairs.
inline double oracle_compositional(const std::vector<LabeledCaption>& captions,
                                   const std::vector<std::vector<std::pair<std::string, std::string>>>& pairs) {
  int hits = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    for (const auto& [a, b] : pairs[i]) {
      if (captions[i].categories.count(a) && captions[i].categories.count(b)) {
        ++hits;
        break;
      }
    }
  }
  return captions.empty() ? 0.0 : 100.0 * hits / static_cast<double>(captions.size());
}

/// One BLEU fixture with its hand-derived score.
struct BleuFixture {
  const char* name;
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
  int n;
  double expected;
};

inline std::vector<BleuFixture> bleu_fixtures() {
  return {
      {"identical", {{"a", "dog", "on", "a", "couch"}}, {{{"a", "dog", "on", "a", "couch"}}}, 4, 1.0},
      // Clipped unigram precision 1/3; candidate longer than the reference, so no penalty.
      {"clipping", {{"the", "the", "the"}}, {{{"the", "cat"}}}, 1, 1.0 / 3.0},
      // Perfect precision, c = 2 against r = 6: exp(1 - 6/2).
      {"brevity", {{"the", "cat"}}, {{{"the", "cat", "sat", "on", "the", "mat"}}}, 1, std::exp(-2.0)},
      // p1 = 5/6, p2 = 3/5.
      {"bigram", {{"the", "cat", "sat", "on", "a", "mat"}}, {{{"the", "cat", "sat", "on", "the", "mat"}}}, 2,
       std::sqrt(0.5)},
      // Corpus level: p1 = 4/5, p2 = 2/3, closest lengths 2 and 3 against c = 5.
      {"corpus",
       {{"a", "cat"}, {"dog", "runs", "fast"}},
       {{{"a", "cat", "sits"}, {"the", "cat"}}, {{"a", "dog", "runs"}}},
       2,
       std::sqrt(8.0 / 15.0)},
      // References of length 2 and 4 are equally close to c = 3; the shorter wins, so no penalty.
      {"length tie", {{"a", "b", "c"}}, {{{"a", "b"}, {"a", "b", "c", "d"}}}, 1, 1.0},
  };
}

}  // namespace nbt::testing
