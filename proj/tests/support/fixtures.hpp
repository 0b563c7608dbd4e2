#pragma once

#include <string>
#include <vector>

#include "nbt/category_map.hpp"
#include "nbt/corpus.hpp"
#include "nbt/model.hpp"
#include "nbt/rng.hpp"
#include "nbt/synth.hpp"
#include "nbt/training.hpp"

namespace nbt::testing {

inline std::string source_path(const std::string& relative) {
  return std::string(NBT_SOURCE_DIR) + "/" + relative;
}

inline CategoryMap toy_map() { return CategoryMap::load(source_path("data/toy_category_map.json")); }

inline BoundingBox random_box(Rng& rng, double w, double h) {
  const double x0 = rng.uniform(0.0, w * 0.8), y0 = rng.uniform(0.0, h * 0.8);
  return {x0, y0, x0 + rng.uniform(1.0, w - x0), y0 + rng.uniform(1.0, h - y0)};
}

inline RegionProposal proposal(BoundingBox box, CategoryId category, double confidence,
                               std::vector<double> feature = {}) {
  return {.box = box, .category = category, .confidence = confidence,
          .feature = std::move(feature), .is_ground_truth = false};
}

/// Synthetic records matching configs/toy.json.
inline std::vector<ImageRecord> toy_records(const CategoryMap& cmap, int num_images,
                                            std::uint64_t seed = 42,
                                            std::vector<std::string> categories = {"cat", "dog", "cake", "bus"}) {
  SynthSpec spec;
  spec.num_images = num_images;
  spec.categories = std::move(categories);
  spec.seed = seed;
  return synthesize(spec, cmap);
}

inline CorpusOptions toy_corpus_options() {
  CorpusOptions opts;
  opts.min_count = 5;
  return opts;
}

inline ModelConfig toy_model_config(const Corpus& corpus) {
  ModelConfig mc;
  mc.vocab = corpus.vocabulary.size();
  mc.finegrained_counts = corpus.categories.finegrained_counts();
  return mc;
}

inline TrainConfig toy_train_config(int epochs) {
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.anneal_factor = 1.0;
  tc.max_epochs = epochs;
  tc.batch_size = 20;
  tc.patience = 0;
  return tc;
}

/// A decoder trained on a small toy corpus.
struct TrainedToy {
  Corpus corpus;
  ModelParams params;
  double final_loss = 0.0;
};

inline TrainedToy train_toy(int num_images, int epochs, std::uint64_t seed = 42) {
  const auto cmap = toy_map();
  TrainedToy out{Corpus::build(toy_records(cmap, num_images, seed), cmap, toy_corpus_options()), {}, 0.0};
  out.params = ModelParams::initialize(toy_model_config(out.corpus), seed);
  TrainingState state;
  fit(out.params, out.corpus, nullptr, toy_train_config(epochs), state);
  out.final_loss = state.history.empty() ? 0.0 : state.history.back().train_loss;
  return out;
}

}  // namespace nbt::testing
