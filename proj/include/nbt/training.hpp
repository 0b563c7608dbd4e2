#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/corpus.hpp"
#include "nbt/decoder.hpp"
#include "nbt/model.hpp"

namespace nbt {

struct TrainConfig {
  double learning_rate = 5e-4;
  double anneal_factor = 0.8;
  int anneal_every = 3;
  int max_epochs = 50;
  int batch_size = 100;
  int patience = 5;        // epochs without validation improvement; 0 disables
  double clip_norm = 0.0;  // 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 42;
  int jobs = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// lr * factor^floor(epoch / anneal_every), epochs counted from 0.
double learning_rate_at(const TrainConfig& config, int epoch);

/// A caption token resolved against the vocabulary: what the step must predict
/// and which word is fed to the next step.
struct TokenTarget {
  bool visual = false;
  int word = 0;  // textual target index
  CategoryId category = -1;
  Plurality plurality = Plurality::kSingular;
  int finegrained = -1;
  std::vector<int> regions;
  int feedback_word = 0;
};

/// Targets for every token plus a trailing <eos>.
std::vector<TokenTarget> make_targets(const AnnotatedCaption& caption, const Vocabulary& vocab,
                                      const CategoryMap& categories);

struct LossBreakdown {
  double total = 0.0;
  double textual = 0.0;
  double pointer = 0.0;
  double refinement = 0.0;
  std::size_t tokens = 0;
};

/// Region among `target.regions` with the highest pointer probability (lowest
/// index on ties). Refinement probabilities are read at this region.
int conditioning_region(std::span<const double> region_dist, const TokenTarget& target);

/// -log of the token probability:
///   textual: P_txt(y*) * p(sentinel)
///   visual:  P_b(b*) * P_g(s*) * mean_i P_r(r_i)
/// Each factor is clamped at 1e-12 before the log.
double token_loss(const StepOutput& step, const TokenTarget& target);

/// Records the teacher-forced mean token loss of one caption on `g` and
/// returns its scalar root. Per-term means are written to `parts` if given.
num::Var build_sequence_loss(num::Graph& g, const Decoder& decoder, const ImageRecord& record,
                             std::span<const TokenTarget> targets, LossBreakdown* parts = nullptr);

/// Teacher-forced mean token loss of one caption. When `grads` is non-null the
/// gradient of the mean is accumulated into it.
LossBreakdown sequence_loss(const Decoder& decoder, const ImageRecord& record,
                            std::span<const TokenTarget> targets,
                            num::Gradients* grads = nullptr);

class Adam {
 public:
  Adam() = default;
  Adam(std::span<const num::Parameter> params, double beta1, double beta2, double epsilon);

  void step(std::span<num::Parameter> params, const num::Gradients& grads, double lr);
  long steps() const { return steps_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& doc, std::span<const num::Parameter> params);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
  long steps_ = 0;
  num::Gradients m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double wall_seconds = 0.0;
};

/// Progress carried across fit() calls and checkpoints.
struct TrainingState {
  int epochs_completed = 0;
  std::vector<EpochRecord> history;
  std::optional<Adam> optimizer;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  bool stopped_early = false;

  nlohmann::json to_json() const;
  static TrainingState from_json(const nlohmann::json& doc, std::span<const num::Parameter> params);
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean teacher-forced loss over every caption of `corpus`.
double evaluate_loss(const ModelParams& params, const Corpus& corpus);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam over shuffled mini-batches of (record, caption) pairs with the
/// annealed learning rate. Runs from state.epochs_completed up to
/// config.max_epochs, or until validation loss has not improved for
/// `patience` epochs. Throws TrainingError naming the record on a non-finite
/// loss.
void fit(ModelParams& params, const Corpus& train, const Corpus* validation,
         const TrainConfig& config, TrainingState& state, const EpochCallback& on_epoch = {});

}  // namespace nbt
