#include "nbt/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace nbt {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    std::string_view raw = text.substr(pos, end - pos);
    while (!raw.empty() && std::ispunct(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
    while (!raw.empty() && std::ispunct(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
    if (!raw.empty()) {
      std::string tok(raw);
      std::transform(tok.begin(), tok.end(), tok.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      tokens.push_back(std::move(tok));
    }
    pos = end;
  }
  return tokens;
}

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kBos), std::string(kEos), std::string(kUnk)}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.size() < 3 || words_[0] != kBos || words_[1] != kEos || words_[2] != kUnk) {
    throw std::invalid_argument("vocabulary must start with <bos>, <eos>, <unk>");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> tokenized_captions,
                             int min_count, std::span<const std::string> forced) {
  if (tokenized_captions.empty()) {
    throw std::invalid_argument("cannot build a vocabulary from an empty caption list");
  }
  std::map<std::string, int> counts;
  for (const auto& caption : tokenized_captions) {
    for (const auto& tok : caption) ++counts[tok];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) kept.emplace_back(word, count);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words{std::string(kBos), std::string(kEos), std::string(kUnk)};
  auto present = [&](const std::string& w) {
    return std::find(words.begin(), words.end(), w) != words.end();
  };
  for (auto& [word, count] : kept) {
    if (!present(word)) words.push_back(word);
  }
  for (const auto& word : forced) {
    if (!present(word)) words.push_back(word);
  }
  return Vocabulary(std::move(words));
}

int Vocabulary::index(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? unk() : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(word); }

}  // namespace nbt
