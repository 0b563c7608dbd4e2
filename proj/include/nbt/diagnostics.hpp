#pragma once

#include <cstdint>
#include <vector>

#include "nbt/graph.hpp"
#include "nbt/model.hpp"
#include "nbt/training.hpp"

namespace nbt {

/// A small random decoder problem: one image with `regions` proposals over
/// three categories and a caption mixing textual and visual targets (one
/// grounded in two regions), followed by <eos>.
struct GradCheckProblem {
  int hidden = 16;
  int regions = 3;
  int vocab = 20;
  double init_scale = 0.5;  // weights uniform in [-scale, scale]
  double eps = 1e-4;        // central-difference step
  std::uint64_t seed = 42;
};

struct GradCheckFixture {
  ModelParams params;
  ImageRecord record;
  std::vector<TokenTarget> targets;
};

GradCheckFixture make_gradcheck_fixture(const GradCheckProblem& problem);

/// Central-difference check of the full teacher-forced caption loss with
/// respect to every model parameter.
num::GradCheckReport check_model_gradients(const GradCheckProblem& problem);

}  // namespace nbt
