#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/graph.hpp"

namespace nbt {

/// Decoder dimensions. `fine_embed` plays the role of the 300-d word-vector
/// space of the fine-grained head; `finegrained_counts[c]` is k for category c.
struct ModelConfig {
  int hidden = 32;          // d: LSTM hidden size
  int attention = 32;       // m: attention / pointer hidden size
  int pooled = 12;          // d_p: pooled region feature (and grid feature) size
  int location = 4;         // d_l: location embedding size
  int category_embed = 8;   // d_g: category embedding size
  int vocab = 0;            // V
  int word_embed = 16;      // E
  int grid = 4;             // K
  int fine_embed = 8;
  std::vector<int> finegrained_counts;

  int region_dim() const { return pooled + location + category_embed; }
  int num_categories() const { return static_cast<int>(finegrained_counts.size()); }
  int total_finegrained() const;
  int max_finegrained() const;
  int refine_hidden() const { return hidden / 2 > 0 ? hidden / 2 : 1; }

  /// Throws std::invalid_argument naming the first non-positive field.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamId : std::size_t {
  kWordEmbedding,
  kLstm1Weight,
  kLstm1Bias,
  kLstm2Weight,
  kLstm2Bias,
  kGridAttnWv,
  kGridAttnWg,
  kGridAttnW,
  kRegionAttnWv,
  kRegionAttnWg,
  kRegionAttnW,
  kPointerWv,
  kPointerWz,
  kPointerWh,
  kSentinelWx,
  kSentinelWh,
  kSentinelWs,
  kTextualWq,
  kLocationWeight,
  kLocationBias,
  kCategoryEmbedding,
  kPluralHiddenWeight,
  kPluralHiddenBias,
  kPluralWb,
  kFineHiddenWeight,
  kFineHiddenBias,
  kFineWg,
  kFineU,
  kCount,
};

constexpr std::size_t kNumParams = static_cast<std::size_t>(ParamId::kCount);

std::string_view param_name(ParamId id);

/// Every learned tensor of the decoder. The pointer's W_z and w_h are single
/// parameters used both for region scores and for the sentinel score.
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-filled parameters shaped for `config`.
  explicit ModelParams(ModelConfig config);

  /// Weights uniform in [-0.1, 0.1], biases zero, LSTM forget-gate bias 1.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  num::Parameter& operator[](ParamId id) { return params_[static_cast<std::size_t>(id)]; }
  const num::Parameter& operator[](ParamId id) const {
    return params_[static_cast<std::size_t>(id)];
  }
  std::span<num::Parameter> all() { return params_; }
  std::span<const num::Parameter> all() const { return params_; }
  std::size_t num_values() const;

  bool operator==(const ModelParams& other) const;

 private:
  ModelConfig config_;
  std::vector<num::Parameter> params_;
};

/// Model parameters together with the vocabulary and category list they were
/// trained against, plus optional opaque training state for resuming.
struct Checkpoint {
  ModelParams params;
  std::vector<std::string> vocabulary;
  std::vector<std::string> categories;
  nlohmann::json training;  // null when absent
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nbt
