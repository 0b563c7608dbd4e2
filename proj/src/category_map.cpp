#include "nbt/category_map.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <stdexcept>

namespace nbt {

const std::map<std::string, std::string>& default_irregular_plurals() {
  static const std::map<std::string, std::string> table = {
      {"bison", "bison"},     {"calf", "calves"},       {"cattle", "cattle"},
      {"child", "children"},  {"deer", "deer"},         {"fish", "fish"},
      {"foot", "feet"},       {"gentleman", "gentlemen"}, {"goose", "geese"},
      {"knife", "knives"},    {"leaf", "leaves"},       {"loaf", "loaves"},
      {"man", "men"},         {"mouse", "mice"},        {"ox", "oxen"},
      {"person", "people"},   {"policeman", "policemen"}, {"scissors", "scissors"},
      {"sheep", "sheep"},     {"shelf", "shelves"},     {"skis", "skis"},
      {"tooth", "teeth"},     {"wolf", "wolves"},       {"woman", "women"},
  };
  return table;
}

CategoryMap::CategoryMap(std::vector<CategoryEntry> entries,
                         std::map<std::string, std::string> lemmas,
                         std::map<std::string, std::string> irregular_plurals)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const CategoryEntry& a, const CategoryEntry& b) { return a.name < b.name; });
  for (auto& [k, v] : lemmas) lemmas_.emplace(k, v);
  for (const auto& [k, v] : default_irregular_plurals()) irregular_.emplace(k, v);
  for (auto& [k, v] : irregular_plurals) irregular_[k] = v;
  for (const auto& [singular, plural] : irregular_) {
    if (singular != plural) irregular_inverse_.emplace(plural, singular);
  }

  offsets_.reserve(entries_.size());
  for (std::size_t c = 0; c < entries_.size(); ++c) {
    const auto& e = entries_[c];
    if (e.finegrained.empty()) {
      throw std::invalid_argument("category '" + e.name + "' has no fine-grained words");
    }
    if (!name_index_.emplace(e.name, static_cast<CategoryId>(c)).second) {
      throw std::invalid_argument("duplicate category '" + e.name + "'");
    }
    offsets_.push_back(total_finegrained_);
    for (std::size_t j = 0; j < e.finegrained.size(); ++j) {
      const FineMatch match{static_cast<CategoryId>(c), static_cast<int>(j)};
      if (!fine_index_.emplace(e.finegrained[j], match).second) {
        throw std::invalid_argument("fine-grained word '" + e.finegrained[j] +
                                    "' is mapped to more than one category");
      }
    }
    total_finegrained_ += static_cast<int>(e.finegrained.size());
  }
}

CategoryMap CategoryMap::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("category map must be a JSON object");
  std::vector<CategoryEntry> entries;
  std::map<std::string, std::string> lemmas;
  std::map<std::string, std::string> irregulars;
  for (const auto& [key, value] : doc.items()) {
    if (key == "lemmas") {
      lemmas = value.get<std::map<std::string, std::string>>();
    } else if (key == "irregulars") {
      irregulars = value.get<std::map<std::string, std::string>>();
    } else {
      if (!value.contains("finegrained")) {
        throw std::invalid_argument("category '" + key + "' lacks a 'finegrained' list");
      }
      entries.push_back({key, value.at("finegrained").get<std::vector<std::string>>()});
    }
  }
  return CategoryMap(std::move(entries), std::move(lemmas), std::move(irregulars));
}

CategoryMap CategoryMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open category map " + path.string());
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json CategoryMap::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& e : entries_) doc[e.name] = {{"finegrained", e.finegrained}};
  nlohmann::json lemmas = nlohmann::json::object();
  for (const auto& [k, v] : lemmas_) lemmas[k] = v;
  doc["lemmas"] = lemmas;
  nlohmann::json irregular = nlohmann::json::object();
  for (const auto& [k, v] : irregular_) {
    auto it = default_irregular_plurals().find(k);
    if (it == default_irregular_plurals().end() || it->second != v) irregular[k] = v;
  }
  if (!irregular.empty()) doc["irregulars"] = irregular;
  return doc;
}

std::optional<CategoryId> CategoryMap::find_category(std::string_view name) const {
  auto it = name_index_.find(name);
  if (it == name_index_.end()) return std::nullopt;
  return it->second;
}

CategoryId CategoryMap::category_id(std::string_view name) const {
  if (auto id = find_category(name)) return *id;
  throw std::invalid_argument("unknown category '" + std::string(name) + "'");
}

std::optional<CategoryMap::FineMatch> CategoryMap::find_finegrained(std::string_view base) const {
  auto it = fine_index_.find(base);
  if (it == fine_index_.end()) return std::nullopt;
  return it->second;
}

std::string CategoryMap::lemma(std::string_view surface) const {
  if (auto it = lemmas_.find(surface); it != lemmas_.end()) return it->second;
  if (fine_index_.contains(surface)) return std::string(surface);
  if (auto it = irregular_inverse_.find(surface); it != irregular_inverse_.end()) {
    return it->second;
  }
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 3> rules = {{
      {"ies", "y"},
      {"es", ""},
      {"s", ""},
  }};
  for (const auto& [suffix, replacement] : rules) {
    if (surface.size() > suffix.size() && surface.ends_with(suffix)) {
      std::string candidate(surface.substr(0, surface.size() - suffix.size()));
      candidate += replacement;
      if (fine_index_.contains(candidate)) return candidate;
    }
  }
  return std::string(surface);
}

std::string CategoryMap::pluralize(std::string_view singular) const {
  if (auto it = irregular_.find(singular); it != irregular_.end()) return it->second;
  std::string word(singular);
  if (word.empty()) return word;
  auto is_vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; };
  if (word.size() > 1 && word.back() == 'y' && !is_vowel(word[word.size() - 2])) {
    word.pop_back();
    return word + "ies";
  }
  if (word.ends_with("s") || word.ends_with("x") || word.ends_with("z") ||
      word.ends_with("ch") || word.ends_with("sh")) {
    return word + "es";
  }
  return word + "s";
}

std::vector<int> CategoryMap::finegrained_counts() const {
  std::vector<int> counts;
  counts.reserve(entries_.size());
  for (const auto& e : entries_) counts.push_back(static_cast<int>(e.finegrained.size()));
  return counts;
}

}  // namespace nbt
