#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nbt {

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from each token. Tokens that are pure punctuation are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Dense word <-> index mapping for the textual vocabulary. Indices 0..2 are
/// always <bos>, <eos>, <unk>.
class Vocabulary {
 public:
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";

  Vocabulary();
  /// `words` must start with the three special tokens and contain no duplicates.
  explicit Vocabulary(std::vector<std::string> words);

  /// Words seen at least `min_count` times get an index (most frequent first,
  /// ties alphabetical). `forced` words are appended when absent.
  static Vocabulary build(std::span<const std::vector<std::string>> tokenized_captions,
                          int min_count = 5, std::span<const std::string> forced = {});

  int index(std::string_view word) const;  // unknown words map to unk()
  bool contains(std::string_view word) const;
  const std::string& word(int index) const { return words_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace nbt
