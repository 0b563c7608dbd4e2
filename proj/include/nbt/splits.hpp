#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/corpus.hpp"

namespace nbt {

/// Per-image category mentions, the unit every split works on.
struct ImageMentions {
  std::string image_id;
  std::set<CategoryId> categories;
};

std::vector<ImageMentions> collect_mentions(std::span<const ImageRecord> records,
                                            const CategoryMap& categories);

/// Symmetric pair counts (images mentioning both) and per-category image
/// counts. The diagonal is zero.
class CooccurrenceMatrix {
 public:
  explicit CooccurrenceMatrix(std::size_t num_categories = 0);

  void add_image(const std::set<CategoryId>& mentioned);

  std::size_t size() const { return instances_.size(); }
  int pair(CategoryId a, CategoryId b) const;
  int instances(CategoryId c) const { return instances_.at(static_cast<std::size_t>(c)); }

 private:
  std::vector<int> instances_;
  std::vector<int> pairs_;  // row-major C x C
};

CooccurrenceMatrix cooccurrence(std::span<const ImageMentions> images, std::size_t num_categories);

using CategoryPair = std::pair<CategoryId, CategoryId>;  // first < second

/// Pairs with a nonzero count, rarest first; ties by (name of first, name of
/// second) where each pair is ordered by name.
std::vector<CategoryPair> pair_visit_order(const CooccurrenceMatrix& counts,
                                           const CategoryMap& categories);

struct SplitAssignment {
  std::vector<std::string> train, val, test;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& doc);
};

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Visits category pairs rarest first and moves every image mentioning both
/// to test unless that would leave some category with fewer than half of its
/// images in train. Validation images are then drawn from a seeded shuffle of
/// train under the same constraint. meta: {"mode", "excluded_pairs"}.
SplitAssignment build_robust_split(std::span<const ImageMentions> images,
                                   const CategoryMap& categories, double val_fraction,
                                   std::uint64_t seed);

/// Images mentioning an excluded category form the out-of-domain test set; of
/// the rest, a seeded `test_fraction` becomes the in-domain test set and
/// `val_fraction` of the remainder becomes validation. meta: {"mode",
/// "excluded_categories", "in_domain", "out_of_domain",
/// "out_of_domain_by_category"}.
SplitAssignment build_exclusion_split(std::span<const ImageMentions> images,
                                      const CategoryMap& categories,
                                      const std::vector<std::string>& excluded,
                                      double test_fraction, double val_fraction,
                                      std::uint64_t seed);

const std::vector<std::string>& default_excluded_categories();

void write_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_split(const std::filesystem::path& path);

}  // namespace nbt
