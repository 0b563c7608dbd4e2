#include "nbt/diagnostics.hpp"

#include <stdexcept>

#include "nbt/decoder.hpp"
#include "nbt/rng.hpp"

namespace nbt {

GradCheckFixture make_gradcheck_fixture(const GradCheckProblem& problem) {
  if (problem.hidden < 2 || problem.regions < 2 || problem.vocab < 6) {
    throw std::invalid_argument("gradcheck problem: need hidden >= 2, regions >= 2, vocab >= 6");
  }
  ModelConfig cfg;
  cfg.hidden = problem.hidden;
  cfg.attention = problem.hidden;
  cfg.pooled = 6;
  cfg.location = 4;
  cfg.category_embed = 4;
  cfg.vocab = problem.vocab;
  cfg.word_embed = 8;
  cfg.grid = 3;
  cfg.fine_embed = 4;
  cfg.finegrained_counts = {2, 3, 1};

  GradCheckFixture fx{ModelParams(cfg), {}, {}};
  Rng rng(problem.seed);
  for (auto& p : fx.params.all()) {
    for (double& v : p.value.data()) v = rng.uniform(-problem.init_scale, problem.init_scale);
  }

  auto& rec = fx.record;
  rec.image_id = "gradcheck";
  rec.width = 100.0;
  rec.height = 80.0;
  // Categories 0, 1, 1, then cycling, so one visual target has two regions.
  for (int i = 0; i < problem.regions; ++i) {
    const double x = rng.uniform(0.0, 50.0), y = rng.uniform(0.0, 40.0);
    RegionProposal p{.box = BoundingBox(x, y, x + rng.uniform(10.0, 45.0), y + rng.uniform(10.0, 35.0)),
                     .category = i == 0 ? 0 : i <= 2 ? 1 : i % 3,
                     .confidence = 0.9,
                     .feature = {},
                     .is_ground_truth = false};
    for (int j = 0; j < cfg.pooled; ++j) p.feature.push_back(rng.uniform(-1.0, 1.0));
    rec.proposals.push_back(std::move(p));
  }
  FeatureMatrix grid(static_cast<std::size_t>(cfg.grid));
  for (auto& row : grid) {
    for (int j = 0; j < cfg.pooled; ++j) row.push_back(rng.uniform(-1.0, 1.0));
  }
  rec.grid_features = std::move(grid);

  auto textual = [](int word) {
    TokenTarget t;
    t.word = word;
    t.feedback_word = word;
    return t;
  };
  auto visual = [](CategoryId category, Plurality plurality, int fine, std::vector<int> regions,
                   int feedback) {
    TokenTarget t;
    t.visual = true;
    t.category = category;
    t.plurality = plurality;
    t.finegrained = fine;
    t.regions = std::move(regions);
    t.word = feedback;
    t.feedback_word = feedback;
    return t;
  };
  std::vector<int> second;
  for (int r = 1; r < problem.regions; ++r) {
    if (rec.proposals[static_cast<std::size_t>(r)].category == 1) second.push_back(r);
  }
  fx.targets = {textual(3), visual(0, Plurality::kPlural, 1, {0}, 4), textual(5),
                visual(1, Plurality::kSingular, 2, second, problem.vocab - 1), textual(1)};
  return fx;
}

num::GradCheckReport check_model_gradients(const GradCheckProblem& problem) {
  auto fx = make_gradcheck_fixture(problem);
  const Decoder decoder(fx.params);
  const ImageRecord& record = fx.record;
  const auto& targets = fx.targets;
  auto loss = [&](num::Graph& g) { return build_sequence_loss(g, decoder, record, targets); };
  return num::grad_check(loss, fx.params.all(), problem.eps);
}

}  // namespace nbt
