#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/corpus.hpp"
#include "nbt/inference.hpp"
#include "nbt/splits.hpp"

namespace nbt {

using Tokens = std::vector<std::string>;

/// Corpus-level BLEU-n: clipped n-gram precisions up to n, geometric mean,
/// brevity penalty against the closest reference length (shorter on ties).
/// Zero when the candidates are empty or any precision is zero.
double corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references,
                   int n);

/// Corpus-level BLEU-n of a single candidate.
double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n);

/// Sentence-level BLEU-n with add-one smoothing of the precisions for orders
/// above one. Reported separately from the unsmoothed corpus score.
double sentence_bleu_smoothed(const Tokens& candidate, const std::vector<Tokens>& references,
                              int n);

/// Held-out pairs mentioned by an image, as category ids.
std::vector<CategoryPair> held_out_pairs(const std::set<CategoryId>& mentioned,
                                         std::span<const CategoryPair> excluded);

/// Percentage of captions mentioning both categories of at least one of their
/// image's pairs. Mentions are lemma based and map fine-grained words to
/// their category.
double compositional_accuracy(std::span<const std::string> captions,
                              std::span<const std::vector<CategoryPair>> pairs,
                              const CategoryMap& categories);

struct F1Counts {
  int tp = 0, fp = 0, fn = 0, tn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
  /// 2PR / (P + R), zero when P + R is zero.
  double f1() const;
};

/// Confusion counts over the split's test images for one excluded category:
/// positive prediction when the caption mentions it, positive truth when the
/// split lists the image as out-of-domain for it. Test images without a
/// caption are skipped. Throws when the split has no record of the category.
F1Counts novel_object_counts(const std::map<std::string, std::string>& captions_by_image,
                             const SplitAssignment& split, const std::string& category,
                             const CategoryMap& categories);

struct GroundedSlot {
  BoundingBox box;
  std::string word;
};

struct GroundingCounts {
  int correct = 0;
  int total = 0;
  double percent() const { return total == 0 ? 0.0 : 100.0 * correct / total; }
};

/// A slot is correct when its box overlaps, with IoU >= 0.5, a ground-truth box
/// of the category its word belongs to.
GroundingCounts grounding_accuracy(std::span<const GroundedSlot> slots,
                                   std::span<const GroundTruthBox> gt_boxes,
                                   const CategoryMap& categories);
GroundingCounts grounding_accuracy(std::span<const Template> templates,
                                   std::span<const ImageRecord> records,
                                   const CategoryMap& categories);

struct EvalReport {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  std::optional<double> compositional_accuracy;
  std::map<std::string, F1Counts> novel_f1;
  std::optional<double> macro_f1;
  std::optional<GroundingCounts> grounding;
  int num_captions = 0;
  int num_compositional = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Metrics for generated captions (image_id -> caption) against the references
/// of `records`, over the split's test images (all records without a split)
/// that have a caption. Compositional accuracy is reported for robust splits
/// and F1 for exclusion splits; grounding accuracy when `slots` is given.
EvalReport evaluate(const std::map<std::string, std::string>& captions,
                    std::span<const ImageRecord> records, const CategoryMap& categories,
                    const std::optional<SplitAssignment>& split,
                    const std::map<std::string, std::vector<GroundedSlot>>* slots = nullptr);

}  // namespace nbt
