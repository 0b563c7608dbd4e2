#include "nbt/decoder.hpp"

#include <stdexcept>
#include <string>

namespace nbt {

AttentionVars attend(Graph& g, std::span<const Var> features, Var h, const num::Parameter& wv,
                     const num::Parameter& wg, const num::Parameter& w) {
  if (features.empty()) throw std::invalid_argument("attend: no features to attend over");
  const Var query = g.matmul(g.param(wg), h);
  const Var wv_node = g.param(wv);
  const Var w_node = g.param(w);
  std::vector<Var> scores;
  scores.reserve(features.size());
  for (Var f : features) {
    scores.push_back(g.dot(w_node, g.tanh(g.add(g.matmul(wv_node, f), query))));
  }
  const Var weights = g.softmax(g.concat(scores));
  return {weights, g.weighted_sum(weights, features)};
}

DecoderState DecoderState::zeros(const ModelConfig& config) {
  const auto d = static_cast<std::size_t>(config.hidden);
  return {num::Tensor({d}), num::Tensor({d}), num::Tensor({d}), num::Tensor({d})};
}

Decoder::Decoder(const ModelParams& params) : params_(&params) {}

Var Decoder::region_feature(Graph& g, const RegionProposal& proposal, double image_width,
                            double image_height) const {
  const auto& cfg = config();
  if (proposal.category < 0 || proposal.category >= cfg.num_categories()) {
    throw std::invalid_argument("region_feature: unknown category id " +
                                std::to_string(proposal.category));
  }
  if (proposal.feature.size() != static_cast<std::size_t>(cfg.pooled)) {
    throw std::invalid_argument("region_feature: pooled feature has " +
                                std::to_string(proposal.feature.size()) + " values, expected " +
                                std::to_string(cfg.pooled));
  }
  const auto loc = location_feature(proposal.box, image_width, image_height);
  const Var pooled = g.constant(num::Tensor::vector(proposal.feature));
  const Var location =
      g.add(g.matmul(g.param(params()[ParamId::kLocationWeight]),
                     g.constant(num::Tensor::vector({loc[0], loc[1], loc[2], loc[3]}))),
            g.param(params()[ParamId::kLocationBias]));
  const Var category = g.lookup(params()[ParamId::kCategoryEmbedding],
                                static_cast<std::size_t>(proposal.category));
  const std::array<Var, 3> parts{pooled, location, category};
  return g.concat(parts);
}

ImageInputs Decoder::encode(Graph& g, const ImageRecord& record) const {
  const auto& cfg = config();
  ImageInputs in;
  in.regions.reserve(record.proposals.size());
  for (const auto& p : record.proposals) {
    in.regions.push_back(region_feature(g, p, record.width, record.height));
    in.categories.push_back(p.category);
  }

  const auto dp = static_cast<std::size_t>(cfg.pooled);
  const auto k = static_cast<std::size_t>(cfg.grid);
  num::Tensor mean({dp});
  if (record.grid_features) {
    const auto& grid = *record.grid_features;
    if (grid.size() != k) {
      throw std::invalid_argument("image " + record.image_id + ": grid has " +
                                  std::to_string(grid.size()) + " rows, expected " +
                                  std::to_string(k));
    }
    for (const auto& row : grid) {
      if (row.size() != dp) {
        throw std::invalid_argument("image " + record.image_id + ": grid row has wrong width");
      }
      in.grid.push_back(g.constant(num::Tensor::vector(row)));
      for (std::size_t j = 0; j < dp; ++j) mean[j] += row[j] / static_cast<double>(k);
    }
  } else {
    for (std::size_t r = 0; r < k; ++r) in.grid.push_back(g.constant(num::Tensor({dp})));
  }
  in.grid_mean = g.constant(std::move(mean));
  return in;
}

Var Decoder::embed(Graph& g, int word) const {
  return g.lookup(params()[ParamId::kWordEmbedding], static_cast<std::size_t>(word));
}

StateVars Decoder::initial_state(Graph& g) const {
  return state_constants(g, DecoderState::zeros(config()));
}

StateVars Decoder::state_constants(Graph& g, const DecoderState& s) const {
  return {g.constant(s.h1), g.constant(s.c1), g.constant(s.h2), g.constant(s.c2)};
}

std::pair<Var, Var> Decoder::lstm(Graph& g, Var input, Var h_prev, Var c_prev, ParamId weight,
                                  ParamId bias) const {
  const auto d = static_cast<std::size_t>(config().hidden);
  const std::array<Var, 2> parts{input, h_prev};
  const Var gates =
      g.add(g.matmul(g.param(params()[weight]), g.concat(parts)), g.param(params()[bias]));
  const Var in_gate = g.sigmoid(g.slice(gates, 0, d));
  const Var forget_gate = g.sigmoid(g.slice(gates, d, d));
  const Var out_gate = g.sigmoid(g.slice(gates, 2 * d, d));
  const Var candidate = g.tanh(g.slice(gates, 3 * d, d));
  const Var c = g.add(g.mul(forget_gate, c_prev), g.mul(in_gate, candidate));
  const Var h = g.mul(out_gate, g.tanh(c));
  return {h, c};
}

StepVars Decoder::step(Graph& g, const StateVars& prev, Var x, const ImageInputs& image) const {
  const auto& p = params();
  StepVars out;

  const std::array<Var, 3> in1{x, image.grid_mean, prev.h2};
  auto [h1, c1] = lstm(g, g.concat(in1), prev.h1, prev.c1, ParamId::kLstm1Weight,
                       ParamId::kLstm1Bias);

  const auto grid_att = attend(g, image.grid, h1, p[ParamId::kGridAttnWv],
                               p[ParamId::kGridAttnWg], p[ParamId::kGridAttnW]);
  Var region_ctx;
  if (image.regions.empty()) {
    region_ctx = g.constant(num::Tensor({static_cast<std::size_t>(config().region_dim())}));
  } else {
    region_ctx = attend(g, image.regions, h1, p[ParamId::kRegionAttnWv],
                        p[ParamId::kRegionAttnWg], p[ParamId::kRegionAttnW])
                     .context;
  }

  const std::array<Var, 3> in2{grid_att.context, region_ctx, h1};
  auto [h2, c2] = lstm(g, g.concat(in2), prev.h2, prev.c2, ParamId::kLstm2Weight,
                       ParamId::kLstm2Bias);
  out.state = {h1, c1, h2, c2};

  // Pointer over regions; W_z h and w_h are shared with the sentinel score.
  const Var wz_h = g.matmul(g.param(p[ParamId::kPointerWz]), h2);
  const Var wh = g.param(p[ParamId::kPointerWh]);
  const Var wv = g.param(p[ParamId::kPointerWv]);
  std::vector<Var> logits;
  logits.reserve(image.regions.size() + 1);
  for (Var v : image.regions) {
    const Var u = g.dot(wh, g.tanh(g.add(g.matmul(wv, v), wz_h)));
    out.pointer_scores.push_back(u);
    logits.push_back(u);
  }

  // Visual sentinel from layer 1: gate = sigmoid(W_x x + W_h h1_prev), s = gate * tanh(c1).
  const Var gate = g.sigmoid(g.add(g.matmul(g.param(p[ParamId::kSentinelWx]), x),
                                   g.matmul(g.param(p[ParamId::kSentinelWh]), prev.h1)));
  const Var sentinel = g.mul(gate, g.tanh(c1));
  out.sentinel_score =
      g.dot(wh, g.tanh(g.add(g.matmul(g.param(p[ParamId::kSentinelWs]), sentinel), wz_h)));
  logits.push_back(out.sentinel_score);

  out.region_dist = g.softmax(g.concat(logits));
  out.textual_dist = g.softmax(g.matmul(g.param(p[ParamId::kTextualWq]), h2));
  return out;
}

RefineVars Decoder::refine(Graph& g, Var region, Var h, CategoryId category) const {
  const auto& p = params();
  const auto& cfg = config();
  if (category < 0 || category >= cfg.num_categories()) {
    throw std::invalid_argument("refine: unknown category id " + std::to_string(category));
  }
  const std::array<Var, 2> parts{region, h};
  const Var joint = g.concat(parts);

  const Var fb = g.relu(g.add(g.matmul(g.param(p[ParamId::kPluralHiddenWeight]), joint),
                              g.param(p[ParamId::kPluralHiddenBias])));
  const Var plurality = g.softmax(g.matmul(g.param(p[ParamId::kPluralWb]), fb));

  const Var fg = g.relu(g.add(g.matmul(g.param(p[ParamId::kFineHiddenWeight]), joint),
                              g.param(p[ParamId::kFineHiddenBias])));
  const Var query = g.matmul(g.param(p[ParamId::kFineWg]), fg);
  int offset = 0;
  for (CategoryId c = 0; c < category; ++c) offset += cfg.finegrained_counts[static_cast<std::size_t>(c)];
  const int k = cfg.finegrained_counts[static_cast<std::size_t>(category)];
  std::vector<Var> scores;
  scores.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const Var u = g.lookup(p[ParamId::kFineU], static_cast<std::size_t>(offset + j));
    scores.push_back(g.dot(u, query));
  }
  return {plurality, g.softmax(g.concat(scores))};
}

std::pair<StepOutput, DecoderState> Decoder::forward_step(const DecoderState& state,
                                                          int input_word,
                                                          const ImageRecord& record) const {
  Graph g;
  const ImageInputs image = encode(g, record);
  const StateVars prev = state_constants(g, state);
  const StepVars sv = step(g, prev, embed(g, input_word), image);

  StepOutput out;
  out.region_dist = g.value(sv.region_dist).values();
  out.textual_dist = g.value(sv.textual_dist).values();
  out.hidden = g.value(sv.state.h2).values();
  for (std::size_t i = 0; i < image.regions.size(); ++i) {
    const RefineVars r = refine(g, image.regions[i], sv.state.h2, image.categories[i]);
    const auto& pb = g.value(r.plurality);
    out.plurality.push_back({pb[0], pb[1]});
    out.finegrained.push_back(g.value(r.finegrained).values());
  }
  DecoderState next{g.value(sv.state.h1), g.value(sv.state.c1), g.value(sv.state.h2),
                    g.value(sv.state.c2)};
  return {std::move(out), std::move(next)};
}

}  // namespace nbt
