#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "nbt/corpus.hpp"
#include "nbt/graph.hpp"
#include "nbt/model.hpp"

namespace nbt {

using num::Graph;
using num::Var;

struct AttentionVars {
  Var weights;  // n-simplex
  Var context;  // sum_i weights_i * features_i
};

/// Additive attention: z = w^T tanh(Wv f_i + Wg h), weights = softmax(z).
AttentionVars attend(Graph& g, std::span<const Var> features, Var h, const num::Parameter& wv,
                     const num::Parameter& wg, const num::Parameter& w);

/// Recurrent state of both LSTM layers as plain values.
struct DecoderState {
  num::Tensor h1, c1, h2, c2;
  static DecoderState zeros(const ModelConfig& config);
};

struct StateVars {
  Var h1, c1, h2, c2;
};

/// Per-image graph inputs: region features v_i = [v^p; v^l; v^g] and grid rows.
struct ImageInputs {
  std::vector<Var> regions;
  std::vector<CategoryId> categories;
  std::vector<Var> grid;
  Var grid_mean;
};

struct StepVars {
  StateVars state;
  std::vector<Var> pointer_scores;  // u_i, one scalar node per region
  Var sentinel_score;
  Var region_dist;   // N + 1 entries, sentinel last
  Var textual_dist;  // V entries
};

struct RefineVars {
  Var plurality;    // {singular, plural}
  Var finegrained;  // k entries for the region's category
};

/// Plain-value view of one decoding step.
struct StepOutput {
  std::vector<double> region_dist;
  std::vector<double> textual_dist;
  std::vector<std::array<double, 2>> plurality;
  std::vector<std::vector<double>> finegrained;
  std::vector<double> hidden;

  std::size_t num_regions() const { return region_dist.empty() ? 0 : region_dist.size() - 1; }
  double sentinel() const { return region_dist.back(); }
};

/// The grounded-captioning step function over a fixed parameter set.
class Decoder {
 public:
  explicit Decoder(const ModelParams& params);

  const ModelParams& params() const { return *params_; }
  const ModelConfig& config() const { return params_->config(); }

  Var region_feature(Graph& g, const RegionProposal& proposal, double image_width,
                     double image_height) const;
  ImageInputs encode(Graph& g, const ImageRecord& record) const;

  Var embed(Graph& g, int word) const;
  StateVars initial_state(Graph& g) const;
  StateVars state_constants(Graph& g, const DecoderState& state) const;

  /// One step: layer-1 LSTM over [x; grid mean; h2_prev], attention over the
  /// grid and the regions with h1, layer-2 LSTM over [grid ctx; region ctx; h1],
  /// pointer scores and sentinel score with shared W_z/w_h, textual softmax.
  StepVars step(Graph& g, const StateVars& prev, Var x, const ImageInputs& image) const;

  /// Plurality and fine-grained distributions for a region given h.
  RefineVars refine(Graph& g, Var region, Var h, CategoryId category) const;

  /// Value-level step including refinement for every region.
  std::pair<StepOutput, DecoderState> forward_step(const DecoderState& state, int input_word,
                                                   const ImageRecord& record) const;

 private:
  std::pair<Var, Var> lstm(Graph& g, Var input, Var h_prev, Var c_prev, ParamId weight,
                           ParamId bias) const;

  const ModelParams* params_;
};

}  // namespace nbt
