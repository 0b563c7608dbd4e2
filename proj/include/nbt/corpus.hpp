#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/category_map.hpp"
#include "nbt/geometry.hpp"
#include "nbt/vocabulary.hpp"

namespace nbt {

struct GroundTruthBox {
  BoundingBox box;
  CategoryId category = 0;
};

using FeatureMatrix = std::vector<std::vector<double>>;

struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<RegionProposal> proposals;
  std::vector<GroundTruthBox> gt_boxes;
  std::optional<FeatureMatrix> grid_features;  // K x d_p
  std::vector<std::string> captions;
};

enum class TokenKind { kTextual, kVisual };
enum class Plurality { kSingular = 0, kPlural = 1 };

struct AnnotatedToken {
  std::string surface;
  TokenKind kind = TokenKind::kTextual;
  CategoryId category = -1;
  Plurality plurality = Plurality::kSingular;
  int finegrained = -1;
  std::vector<int> grounding_regions;

  bool is_visual() const { return kind == TokenKind::kVisual; }
};

using AnnotatedCaption = std::vector<AnnotatedToken>;

/// Marks tokens whose base form is a mapped fine-grained word as visual and
/// sets their category, plurality and fine-grained targets.
std::vector<AnnotatedToken> extract_visual_words(std::span<const std::string> tokens,
                                                 const CategoryMap& categories);

/// Selects proposals of the token's category overlapping a ground-truth box of
/// that category with IoU >= threshold. A visual token with no such proposal is
/// demoted to textual.
AnnotatedToken match_grounding_regions(AnnotatedToken token,
                                       std::span<const RegionProposal> proposals,
                                       std::span<const GroundTruthBox> gt_boxes,
                                       double threshold = 0.5);
AnnotatedToken match_grounding_regions(AnnotatedToken token, const ImageRecord& record,
                                       double threshold = 0.5);

/// Categories mentioned anywhere in the record's captions.
std::set<CategoryId> mentioned_categories(const ImageRecord& record,
                                          const CategoryMap& categories);
std::set<CategoryId> mentioned_categories(std::string_view caption,
                                          const CategoryMap& categories);

struct CorpusOptions {
  int max_caption_tokens = 16;
  int min_count = 5;
  double grounding_iou = 0.5;
  FilterThresholds filter;
  bool apply_filter = true;
};

/// Records with filtered proposals, annotated captions and a vocabulary.
/// Immutable once built.
struct Corpus {
  std::vector<ImageRecord> records;
  std::vector<std::vector<AnnotatedCaption>> captions;  // parallel to records
  CategoryMap categories;
  Vocabulary vocabulary;
  CorpusOptions options;

  /// Filters proposals, truncates and annotates captions. When `vocabulary` is
  /// empty one is built from the records' captions; category canonical words
  /// are always added so slot feedback has an embedding.
  static Corpus build(std::vector<ImageRecord> records, CategoryMap categories,
                      const CorpusOptions& options = {},
                      std::optional<Vocabulary> vocabulary = std::nullopt);

  std::size_t num_captions() const;
  std::optional<std::size_t> find(std::string_view image_id) const;
};

AnnotatedCaption annotate_caption(std::string_view caption, const ImageRecord& record,
                                  const CategoryMap& categories, const CorpusOptions& options);

// JSON-lines dataset I/O. Category names are resolved through `categories`.
ImageRecord record_from_json(const nlohmann::json& doc, const CategoryMap& categories);
nlohmann::json record_to_json(const ImageRecord& record, const CategoryMap& categories);
std::vector<ImageRecord> read_dataset(const std::filesystem::path& path,
                                      const CategoryMap& categories);
void write_dataset(const std::filesystem::path& path, std::span<const ImageRecord> records,
                   const CategoryMap& categories);

}  // namespace nbt
