#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/geometry.hpp"

namespace nbt {

struct CategoryEntry {
  std::string name;
  std::vector<std::string> finegrained;
};

/// Detector category -> fine-grained word mapping, plus the morphology
/// (lemma table, irregular plurals, suffix rules) used to match caption
/// words against it and to realize plural surface forms.
///
/// Category ids are dense and follow the sorted order of category names.
class CategoryMap {
 public:
  struct FineMatch {
    CategoryId category;
    int index;  // position in the category's fine-grained list
  };

  CategoryMap() = default;
  CategoryMap(std::vector<CategoryEntry> entries, std::map<std::string, std::string> lemmas,
              std::map<std::string, std::string> irregular_plurals = {});

  /// Parses {"<category>": {"finegrained": [...]}, ..., "lemmas": {...},
  /// "irregulars": {...}}. The last two keys are optional.
  static CategoryMap from_json(const nlohmann::json& doc);
  static CategoryMap load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t size() const { return entries_.size(); }
  const CategoryEntry& entry(CategoryId id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<CategoryEntry>& entries() const { return entries_; }
  std::optional<CategoryId> find_category(std::string_view name) const;
  CategoryId category_id(std::string_view name) const;  // throws when unknown

  /// The word fed back to the decoder for a slot over this category.
  const std::string& canonical_word(CategoryId id) const { return entry(id).finegrained.front(); }

  std::optional<FineMatch> find_finegrained(std::string_view base_form) const;

  /// Base form of a surface word. Order: explicit lemma table, the word itself
  /// when it is a mapped fine-grained word, inverse irregular plurals, then the
  /// suffix rules "-ies"->"-y", "-es"->"", "-s"->"" (first rule whose result is
  /// a mapped word wins). Unmapped words are returned unchanged.
  std::string lemma(std::string_view surface) const;

  std::string pluralize(std::string_view singular) const;

  int total_finegrained() const { return total_finegrained_; }
  int finegrained_offset(CategoryId id) const { return offsets_.at(static_cast<std::size_t>(id)); }
  std::vector<int> finegrained_counts() const;

 private:
  std::vector<CategoryEntry> entries_;
  std::map<std::string, std::string, std::less<>> lemmas_;
  std::map<std::string, std::string, std::less<>> irregular_;          // singular -> plural
  std::map<std::string, std::string, std::less<>> irregular_inverse_;  // plural -> singular
  std::map<std::string, FineMatch, std::less<>> fine_index_;
  std::map<std::string, CategoryId, std::less<>> name_index_;
  std::vector<int> offsets_;
  int total_finegrained_ = 0;
};

/// Irregular plural forms consulted before the suffix rules.
const std::map<std::string, std::string>& default_irregular_plurals();

}  // namespace nbt
