#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/corpus.hpp"

namespace nbt {

/// Parameters of the synthetic corpus. Each image holds 1..max_objects objects
/// of distinct categories placed in separate cells of a 2x2 layout. Every
/// object gets `copies` jittered detections above the confidence floor, and
/// each image gets `distractors` detections below it. Pooled features encode
/// the fine-grained index (one-hot) and plurality of the object, the grid
/// features encode the caption template, all with uniform noise.
struct SynthSpec {
  int num_images = 20;
  std::vector<std::string> categories;  // empty: every category of the map
  double width = 200.0;
  double height = 200.0;
  int max_objects = 2;
  int copies = 2;
  int distractors = 1;
  int pooled = 12;
  int grid = 4;
  double jitter = 0.04;
  double noise = 0.02;
  double plural_rate = 0.3;
  int captions_per_image = 1;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument describing the first problem.
  void validate(const CategoryMap& categories) const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& doc);
};

/// Number of caption templates; the grid features carry a one-hot over these.
inline constexpr int kSynthTemplates = 5;

std::vector<ImageRecord> synthesize(const SynthSpec& spec, const CategoryMap& categories);

}  // namespace nbt
