#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include <unistd.h>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "metric_oracles.hpp"
#include "nbt/diagnostics.hpp"
#include "nbt/evaluation.hpp"
#include "nbt/inference.hpp"
#include "nbt/splits.hpp"
#include "plural_fixtures.hpp"
#include "split_oracle.hpp"

namespace fs = std::filesystem;
using namespace nbt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---- 1 -----------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  GradCheckProblem problem;
  problem.hidden = 16;
  problem.regions = 3;
  problem.vocab = 20;
  const auto report = check_model_gradients(problem);
  const double elapsed = seconds_since(start);
  return {report.max_relative_error < 1e-3 && elapsed < 30.0,
          fmt::format("max relative error {:.3g} (< 1e-3) over {} values, worst {}; {:.1f} s (< 30 s)",
                      report.max_relative_error, report.checked, report.worst_parameter, elapsed)};
}

// ---- 2 -----------------------------------------------------------------

Outcome distribution_invariants() {
  double worst = 0.0, worst_sentinel = 0.0;
  int steps = 0;
  Rng rng(2024);
  while (steps < 1000) {
    GradCheckProblem problem;
    problem.hidden = 4 + static_cast<int>(rng.below(10));
    problem.regions = 2 + static_cast<int>(rng.below(6));
    problem.vocab = 6 + static_cast<int>(rng.below(20));
    problem.init_scale = rng.uniform(0.05, 2.0);
    problem.seed = rng.below(1u << 30);
    auto fx = make_gradcheck_fixture(problem);
    const auto dropped = rng.below(3);
    for (std::uint64_t k = 0; k < dropped && !fx.record.proposals.empty(); ++k) fx.record.proposals.pop_back();
    const Decoder dec(fx.params);

    num::Graph g;
    const auto image = dec.encode(g, fx.record);
    auto state = dec.initial_state(g);
    for (int t = 0; t < 20 && steps < 1000; ++t, ++steps) {
      const int word = static_cast<int>(rng.below(static_cast<std::uint64_t>(problem.vocab)));
      const auto sv = dec.step(g, state, dec.embed(g, word), image);
      auto sum_of = [&](Var v) {
        double s = 0.0;
        for (double x : g.value(v).values()) s += x;
        return s;
      };
      worst = std::max({worst, std::abs(sum_of(sv.region_dist) - 1.0), std::abs(sum_of(sv.textual_dist) - 1.0)});
      for (std::size_t i = 0; i < image.regions.size(); ++i) {
        const auto r = dec.refine(g, image.regions[i], sv.state.h2, image.categories[i]);
        worst = std::max({worst, std::abs(sum_of(r.plurality) - 1.0), std::abs(sum_of(r.finegrained) - 1.0)});
      }
      // Sentinel probability recomputed from the raw scores.
      double z = std::exp(g.scalar(sv.sentinel_score));
      for (auto u : sv.pointer_scores) z += std::exp(g.scalar(u));
      const double sentinel = std::exp(g.scalar(sv.sentinel_score)) / z;
      const auto& dist = g.value(sv.region_dist);
      worst_sentinel = std::max(worst_sentinel, std::abs(dist[dist.size() - 1] - sentinel));
      state = sv.state;
    }
  }
  return {worst <= 1e-9 && worst_sentinel <= 1e-9,
          fmt::format("{} steps; worst |sum - 1| = {:.2g}, worst sentinel mismatch = {:.2g} (<= 1e-9)", steps, worst,
                      worst_sentinel)};
}

// ---- 3 -----------------------------------------------------------------

Outcome parameter_sharing() {
  GradCheckProblem problem;
  problem.regions = 4;
  auto fx = make_gradcheck_fixture(problem);
  const Decoder dec(fx.params);
  auto scores = [&]() {
    num::Graph g;
    const auto image = dec.encode(g, fx.record);
    const auto sv = dec.step(g, dec.initial_state(g), dec.embed(g, 3), image);
    std::vector<double> out;
    for (auto u : sv.pointer_scores) out.push_back(g.scalar(u));
    out.push_back(g.scalar(sv.sentinel_score));
    return out;
  };
  int holders = 0;
  for (const auto& p : fx.params.all()) holders += p.name == fx.params[ParamId::kPointerWz].name;
  const auto before = scores();
  fx.params[ParamId::kPointerWz].value[0] += 0.5;  // one element of the single W_z tensor
  const auto after = scores();
  int changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) changed += after[i] != before[i];
  const bool sentinel_changed = after.back() != before.back();
  return {holders == 1 && changed == static_cast<int>(before.size()),
          fmt::format("one W_z tensor; mutating one element changed {}/{} region scores and the sentinel score: {}",
                      changed - (sentinel_changed ? 1 : 0), before.size() - 1, sentinel_changed ? "yes" : "no")};
}

// ---- 4 -----------------------------------------------------------------

struct OverfitResult {
  nbt::testing::TrainedToy toy;
  double seconds = 0.0;
};

const OverfitResult& overfit_model() {
  static const OverfitResult result = [] {
    const auto start = Clock::now();
    OverfitResult r{nbt::testing::train_toy(20, 200, 42), 0.0};
    r.seconds = seconds_since(start);
    return r;
  }();
  return result;
}

Outcome overfit_reproduction() {
  const auto start = Clock::now();
  const auto& run = overfit_model();
  const auto& toy = run.toy;
  const double loss = evaluate_loss(toy.params, toy.corpus);
  const Captioner cap(toy.params, toy.corpus.vocabulary, toy.corpus.categories);
  int exact = 0, total = 0;
  std::vector<Template> templates;
  for (std::size_t r = 0; r < toy.corpus.records.size(); ++r) {
    const auto t = cap.greedy(toy.corpus.records[r]);
    for (const auto& caption : toy.corpus.captions[r]) {
      std::vector<std::string> ref;
      for (const auto& tok : caption) ref.push_back(tok.surface);
      ++total;
      exact += t.filled == ref;
    }
    templates.push_back(t);
  }
  const auto grounding = grounding_accuracy(templates, toy.corpus.records, toy.corpus.categories);
  const double elapsed = run.seconds + seconds_since(start);
  const double exact_pct = 100.0 * exact / total;
  return {loss < 0.1 && exact_pct >= 90.0 && grounding.percent() >= 95.0 && elapsed < 300.0,
          fmt::format("mean loss {:.4f} (< 0.1); exact captions {}/{} = {:.0f}% (>= 90%); grounding {:.1f}% "
                      "(>= 95%); {:.1f} s (< 300 s)",
                      loss, exact, total, exact_pct, grounding.percent(), elapsed)};
}

// ---- 5 -----------------------------------------------------------------

Outcome slot_filling() {
  const auto cmap = nbt::testing::toy_map();
  ImageRecord rec;
  rec.width = rec.height = 10;
  rec.proposals = {nbt::testing::proposal({0, 0, 5, 5}, cmap.category_id("dog"), 0.9)};
  StepOutput step;
  step.region_dist = {0.9, 0.1};
  step.textual_dist = {1.0};
  step.plurality = {{0.3, 0.7}};
  step.finegrained = {{0.1, 0.8, 0.1}};  // dog, puppy, beagle
  const auto puppies = fill_slot(0, rec, step, cmap);
  int passed = 0;
  std::string failures;
  for (const auto& c : nbt::testing::kPluralCases) {
    const auto got = cmap.pluralize(c.singular);
    if (got == c.plural) {
      ++passed;
    } else {
      failures += fmt::format(" {}->{}", c.singular, got);
    }
  }
  const int n = static_cast<int>(nbt::testing::kPluralCases.size());
  return {puppies == "puppies" && passed == n && n >= 20,
          fmt::format("plural slot over 'puppy' -> '{}'; pluralization fixtures {}/{}{}", puppies, passed, n,
                      failures.empty() ? "" : "; failed:" + failures)};
}

// ---- 6 -----------------------------------------------------------------

double oracle_iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min()));
  const double iy = std::max(0.0, std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min()));
  return ix * iy / (a.area() + b.area() - ix * iy);
}

Outcome grounding_oracle() {
  const auto cmap = nbt::testing::toy_map();
  SynthSpec spec;
  spec.num_images = 200;
  spec.categories = {"cat", "dog", "cake", "bus", "sheep", "pizza"};
  spec.max_objects = 3;
  spec.copies = 3;
  spec.distractors = 2;
  spec.seed = 6;
  auto records = synthesize(spec, cmap);
  Rng rng(66);
  for (auto& rec : records) {
    if (rng.bernoulli(0.4)) {
      // Drop every detection of one object so only the shifted copy below can match.
      const CategoryId gone = rec.gt_boxes.front().category;
      std::erase_if(rec.proposals, [&](const RegionProposal& p) { return p.category == gone; });
    }
    // Shifted copies of each object box, with IoU on both sides of the threshold.
    for (const auto& gt : std::vector<GroundTruthBox>(rec.gt_boxes)) {
      const double dx = rng.uniform(-0.6, 0.6) * gt.box.width(), dy = rng.uniform(-0.6, 0.6) * gt.box.height();
      rec.proposals.push_back(nbt::testing::proposal(
          {gt.box.x_min() + dx, gt.box.y_min() + dy, gt.box.x_max() + dx, gt.box.y_max() + dy}, gt.category, 0.9,
          std::vector<double>(12, 0.0)));
    }
    // Random extra proposals of random categories.
    for (int k = 0; k < 3; ++k) {
      rec.proposals.push_back(nbt::testing::proposal(nbt::testing::random_box(rng, rec.width, rec.height),
                                                     static_cast<CategoryId>(rng.below(cmap.size())),
                                                     rng.uniform(), std::vector<double>(12, 0.0)));
    }
  }
  int tokens = 0, mismatches = 0, demoted = 0, multi = 0;
  for (const auto& rec : records) {
    for (const auto& caption : rec.captions) {
      const auto words = tokenize(caption);
      for (auto tok : extract_visual_words(words, cmap)) {
        if (!tok.is_visual()) continue;
        ++tokens;
        std::vector<int> expected;
        for (std::size_t i = 0; i < rec.proposals.size(); ++i) {
          const auto& p = rec.proposals[i];
          if (p.category != tok.category) continue;
          for (const auto& gt : rec.gt_boxes) {
            if (gt.category == tok.category && oracle_iou(p.box, gt.box) >= 0.5) {
              expected.push_back(static_cast<int>(i));
              break;
            }
          }
        }
        const auto got = match_grounding_regions(tok, rec);
        const bool same = got.grounding_regions == expected && got.is_visual() == !expected.empty();
        mismatches += !same;
        demoted += expected.empty();
        multi += expected.size() > 1;
      }
    }
  }
  return {mismatches == 0 && records.size() == 200,
          fmt::format("{} records, {} visual tokens ({} demoted, {} with several regions); {} mismatches",
                      records.size(), tokens, demoted, multi, mismatches)};
}

// ---- 7 -----------------------------------------------------------------

Outcome robust_split_invariants() {
  const auto cmap = nbt::testing::toy_map();
  SynthSpec spec;
  spec.num_images = 200;
  spec.categories = {"cat", "dog", "cake", "bus", "sheep", "pizza"};
  spec.max_objects = 3;
  spec.seed = 7;
  const auto records = synthesize(spec, cmap);
  const auto images = collect_mentions(records, cmap);
  const auto split = build_robust_split(images, cmap, 0.1, 7);

  const std::set<std::string> train(split.train.begin(), split.train.end());
  int halving_violations = 0;
  for (std::size_t c = 0; c < cmap.size(); ++c) {
    int total = 0, in_train = 0;
    for (const auto& im : images) {
      if (!im.categories.count(static_cast<CategoryId>(c))) continue;
      ++total;
      in_train += train.count(im.image_id) ? 1 : 0;
    }
    halving_violations += in_train < (total + 1) / 2;
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& p : split.meta.at("excluded_pairs")) pairs.emplace_back(p[0], p[1]);
  int leaked = 0;
  for (const auto& [a, b] : pairs) {
    for (const auto& im : images) {
      leaked += train.count(im.image_id) && im.categories.count(cmap.category_id(a)) &&
                im.categories.count(cmap.category_id(b));
    }
  }
  const auto [oracle_pairs, oracle_test] = nbt::testing::oracle_greedy_split(images, cmap);
  const std::set<std::string> test(split.test.begin(), split.test.end());
  const bool same_order = oracle_pairs == pairs && oracle_test == test;
  return {halving_violations == 0 && leaked == 0 && same_order && !pairs.empty(),
          fmt::format("{} images -> {}/{}/{} train/val/test; {} excluded pairs; halving violations {}; "
                      "excluded pairs in train {}; matches re-implementation: {}",
                      images.size(), split.train.size(), split.val.size(), split.test.size(), pairs.size(),
                      halving_violations, leaked, same_order ? "yes" : "no")};
}

// ---- 8 -----------------------------------------------------------------

Outcome constrained_decoding() {
  const auto& toy = overfit_model().toy;
  const auto& cmap = toy.corpus.categories;
  const auto held_out = Corpus::build(nbt::testing::toy_records(cmap, 50, 8), cmap,
                                      nbt::testing::toy_corpus_options(), toy.corpus.vocabulary);
  const Captioner cap(toy.params, toy.corpus.vocabulary, cmap);
  int satisfied = 0, equal = 0, constraints = 0;
  for (const auto& rec : held_out.records) {
    const auto required = required_concepts(rec, cmap, 2);
    constraints += static_cast<int>(required.size());
    const auto t = cap.constrained(rec, required, 3);
    bool all = t.constraints_satisfied;
    for (const auto& set : required) {
      all = all && std::any_of(t.filled.begin(), t.filled.end(), [&](const auto& w) { return set.count(w) > 0; });
    }
    satisfied += all;
    const auto greedy = cap.greedy(rec);
    const auto beam = cap.beam(rec, 1).front();
    equal += beam.tokens == greedy.tokens && beam.filled == greedy.filled;
  }
  const int n = static_cast<int>(held_out.records.size());
  return {n == 50 && satisfied == n && equal == n,
          fmt::format("{} images, {} required concepts (top 2 detections): {}/{} satisfied with flag clear; "
                      "beam=1 equals greedy on {}/{}",
                      n, constraints, satisfied, n, equal, n)};
}

// ---- 9 -----------------------------------------------------------------

Outcome metric_oracles() {
  int bleu_ok = 0;
  double worst = 0.0;
  const auto fixtures = nbt::testing::bleu_fixtures();
  for (const auto& f : fixtures) {
    const double err = std::abs(corpus_bleu(f.candidates, f.references, f.n) - f.expected);
    worst = std::max(worst, err);
    bleu_ok += err <= 1e-9;
  }
  const F1Counts counts{2, 1, 1, 0};
  const bool f1_exact = counts.f1() == 2.0 / 3.0;

  const auto cmap = nbt::testing::toy_map();
  Rng rng(9);
  const std::vector<std::string> names{"cat", "dog", "remote", "bus", "couch", "dining table", "person", "bird", "cake"};
  std::vector<nbt::testing::LabeledCaption> labeled;
  std::vector<std::string> texts;
  std::vector<std::vector<std::pair<std::string, std::string>>> named;
  std::vector<std::vector<CategoryPair>> ids;
  int agree = 0;
  for (int i = 0; i < 100; ++i) {
    labeled.push_back(nbt::testing::random_caption(rng));
    texts.push_back(labeled.back().text);
    std::vector<std::pair<std::string, std::string>> ps;
    std::vector<CategoryPair> cp;
    const auto& a = names[rng.below(names.size())];
    auto b = names[rng.below(names.size())];
    if (a == b) b = names[(std::find(names.begin(), names.end(), a) - names.begin() + 1) % names.size()];
    ps.emplace_back(a, b);
    const auto ia = cmap.category_id(a), ib = cmap.category_id(b);
    cp.emplace_back(std::min(ia, ib), std::max(ia, ib));
    named.push_back(ps);
    ids.push_back(cp);
    const std::vector<std::string> one{texts.back()};
    const std::vector<std::vector<CategoryPair>> one_pair{cp};
    const std::vector<nbt::testing::LabeledCaption> one_labeled{labeled.back()};
    const std::vector<std::vector<std::pair<std::string, std::string>>> one_named{ps};
    agree += compositional_accuracy(one, one_pair, cmap) == nbt::testing::oracle_compositional(one_labeled, one_named);
  }
  const double ours = compositional_accuracy(texts, ids, cmap);
  const double oracle = nbt::testing::oracle_compositional(labeled, named);
  const int n = static_cast<int>(fixtures.size());
  return {bleu_ok == n && n >= 5 && f1_exact && agree == 100 && ours == oracle,
          fmt::format("BLEU fixtures {}/{} within 1e-9 (worst {:.2g}); F1(2,1,1) = 2/3 exactly: {}; compositional "
                      "agrees on {}/100 captions ({:.0f}% vs oracle {:.0f}%)",
                      bleu_ok, n, worst, f1_exact ? "yes" : "no", agree, ours, oracle)};
}

// ---- 10 ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(const std::string& cmd) { return std::system((cmd + " 2>/dev/null").c_str()); }

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / fmt::format("nbt_acceptance_{}", ::getpid());
  fs::create_directories(dir);
  const std::string cli = NBT_CLI_PATH;
  const std::string config = nbt::testing::source_path("configs/toy.json");
  int status = run(fmt::format("\"{}\" synth --config \"{}\" --num-images 20 --out \"{}\"", cli, config,
                               (dir / "data.jsonl").string()));
  for (int k : {1, 2}) {
    status |= run(fmt::format("\"{}\" train --config \"{}\" --data \"{}\" --epochs 15 --out \"{}\" --log \"{}\"",
                              cli, config,
                              (dir / "data.jsonl").string(), (dir / fmt::format("ckpt{}.json", k)).string(),
                              (dir / fmt::format("log{}.csv", k)).string()));
  }
  const auto c1 = slurp(dir / "ckpt1.json"), c2 = slurp(dir / "ckpt2.json");
  const auto l1 = slurp(dir / "log1.csv"), l2 = slurp(dir / "log2.csv");
  fs::remove_all(dir);
  const bool ok = status == 0 && !c1.empty() && !l1.empty() && c1 == c2 && l1 == l2;
  return {ok, fmt::format("cli exit status {}; checkpoints {} bytes identical: {}; logs {} bytes identical: {}", status,
                          c1.size(), c1 == c2 ? "yes" : "no", l1.size(), l1 == l2 ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"distribution invariants", distribution_invariants},
      {"pointer parameter sharing", parameter_sharing},
      {"overfit reproduction", overfit_reproduction},
      {"slot filling", slot_filling},
      {"grounding match oracle", grounding_oracle},
      {"robust split invariants", robust_split_invariants},
      {"constrained decoding", constrained_decoding},
      {"metric oracles", metric_oracles},
      {"training determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
