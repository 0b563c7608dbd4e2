#include "nbt/synth.hpp"

#include <algorithm>
#include <stdexcept>

#include "nbt/rng.hpp"

namespace nbt {

void SynthSpec::validate(const CategoryMap& cmap) const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synth spec: " + msg); };
  if (num_images < 1) fail("num_images must be >= 1");
  if (!(width > 0.0) || !(height > 0.0)) fail("image size must be positive");
  if (max_objects < 1 || max_objects > 3) fail("max_objects must be in 1..3");
  if (copies < 1) fail("copies must be >= 1");
  if (distractors < 0) fail("distractors must be >= 0");
  if (grid < 1) fail("grid must be >= 1");
  if (!(jitter >= 0.0 && jitter <= 0.1)) fail("jitter must be in [0, 0.1]");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(plural_rate >= 0.0 && plural_rate <= 1.0)) fail("plural_rate must be in [0, 1]");
  if (captions_per_image < 1) fail("captions_per_image must be >= 1");
  if (cmap.size() == 0) fail("category map is empty");
  int widest = 0;
  for (const auto& name : categories) {
    if (!cmap.find_category(name)) fail("unknown category '" + name + "'");
    widest = std::max(widest, static_cast<int>(cmap.entry(cmap.category_id(name)).finegrained.size()));
  }
  if (categories.empty()) {
    for (const auto& e : cmap.entries()) widest = std::max(widest, static_cast<int>(e.finegrained.size()));
  }
  if (pooled < widest + 1) {
    fail("pooled must be at least " + std::to_string(widest + 1) +
         " (fine-grained one-hot plus plurality flag)");
  }
  if (pooled < kSynthTemplates) fail("pooled must be at least " + std::to_string(kSynthTemplates));
}

nlohmann::json SynthSpec::to_json() const {
  return {{"num_images", num_images}, {"categories", categories},
          {"width", width},           {"height", height},
          {"max_objects", max_objects}, {"copies", copies},
          {"distractors", distractors}, {"pooled", pooled},
          {"grid", grid},             {"jitter", jitter},
          {"noise", noise},           {"plural_rate", plural_rate},
          {"captions_per_image", captions_per_image}, {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& doc) {
  SynthSpec s;
  s.num_images = doc.value("num_images", s.num_images);
  s.categories = doc.value("categories", s.categories);
  s.width = doc.value("width", s.width);
  s.height = doc.value("height", s.height);
  s.max_objects = doc.value("max_objects", s.max_objects);
  s.copies = doc.value("copies", s.copies);
  s.distractors = doc.value("distractors", s.distractors);
  s.pooled = doc.value("pooled", s.pooled);
  s.grid = doc.value("grid", s.grid);
  s.jitter = doc.value("jitter", s.jitter);
  s.noise = doc.value("noise", s.noise);
  s.plural_rate = doc.value("plural_rate", s.plural_rate);
  s.captions_per_image = doc.value("captions_per_image", s.captions_per_image);
  s.seed = doc.value("seed", s.seed);
  return s;
}

namespace {

struct Object {
  CategoryId category;
  int fine;
  bool plural;
  BoundingBox box;
};

std::vector<double> object_feature(const Object& o, int pooled, int plural_slot, double noise,
                                   Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(pooled));
  for (double& v : f) v = rng.uniform(-noise, noise);
  f[static_cast<std::size_t>(o.fine)] += 1.0;
  if (o.plural) f[static_cast<std::size_t>(plural_slot)] += 1.0;
  return f;
}

BoundingBox jittered(const BoundingBox& b, double amount, double w, double h, Rng& rng) {
  for (;;) {
    const double dx = amount * b.width(), dy = amount * b.height();
    const double x0 = std::clamp(b.x_min() + rng.uniform(-dx, dx), 0.0, w);
    const double y0 = std::clamp(b.y_min() + rng.uniform(-dy, dy), 0.0, h);
    const double x1 = std::clamp(b.x_max() + rng.uniform(-dx, dx), 0.0, w);
    const double y1 = std::clamp(b.y_max() + rng.uniform(-dy, dy), 0.0, h);
    if (x1 <= x0 || y1 <= y0) continue;
    BoundingBox out(x0, y0, x1, y1);
    if (iou(out, b) >= 0.6) return out;
  }
}

std::string noun_phrase(const Object& o, const CategoryMap& cmap) {
  const auto& word = cmap.entry(o.category).finegrained[static_cast<std::size_t>(o.fine)];
  return o.plural ? "two " + cmap.pluralize(word) : "a " + word;
}

std::string caption_for(int tmpl, const std::vector<Object>& objs, const CategoryMap& cmap) {
  switch (tmpl) {
    case 0: return "there is " + noun_phrase(objs[0], cmap) + " in the picture";
    case 1: return noun_phrase(objs[0], cmap) + " is sitting in the picture";
    case 2: return "there is " + noun_phrase(objs[0], cmap) + " near " + noun_phrase(objs[1], cmap);
    case 3:
      return noun_phrase(objs[0], cmap) + " is sitting near " + noun_phrase(objs[1], cmap);
    default:
      return "there is " + noun_phrase(objs[0], cmap) + " near " + noun_phrase(objs[1], cmap) +
             " and " + noun_phrase(objs[2], cmap);
  }
}

}  // namespace

std::vector<ImageRecord> synthesize(const SynthSpec& spec, const CategoryMap& cmap) {
  spec.validate(cmap);
  std::vector<CategoryId> pool;
  if (spec.categories.empty()) {
    for (std::size_t c = 0; c < cmap.size(); ++c) pool.push_back(static_cast<CategoryId>(c));
  } else {
    for (const auto& n : spec.categories) pool.push_back(cmap.category_id(n));
  }
  int plural_slot = 0;
  for (CategoryId c : pool) {
    plural_slot = std::max(plural_slot, static_cast<int>(cmap.entry(c).finegrained.size()));
  }

  Rng rng(spec.seed);
  const double cw = spec.width / 2.0, ch = spec.height / 2.0;
  std::vector<ImageRecord> out;
  for (int n = 0; n < spec.num_images; ++n) {
    ImageRecord rec;
    rec.image_id = "synth-" + std::to_string(n);
    rec.width = spec.width;
    rec.height = spec.height;

    const int limit = std::min<int>(spec.max_objects, static_cast<int>(pool.size()));
    const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(limit)));
    std::vector<CategoryId> cats = pool;
    rng.shuffle(cats);
    std::vector<int> cells = {0, 1, 2, 3};
    rng.shuffle(cells);

    std::vector<Object> objs;
    for (int k = 0; k < count; ++k) {
      const CategoryId c = cats[static_cast<std::size_t>(k)];
      const int cell = cells[static_cast<std::size_t>(k)];
      const double x = (cell % 2) * cw, y = (cell / 2) * ch;
      BoundingBox box(x + rng.uniform(0.05, 0.25) * cw, y + rng.uniform(0.05, 0.25) * ch,
                      x + cw - rng.uniform(0.05, 0.25) * cw, y + ch - rng.uniform(0.05, 0.25) * ch);
      const int fine = static_cast<int>(
          rng.below(static_cast<std::uint64_t>(cmap.entry(c).finegrained.size())));
      objs.push_back({c, fine, rng.bernoulli(spec.plural_rate), box});
    }
    std::stable_sort(objs.begin(), objs.end(), [](const Object& a, const Object& b) {
      return a.box.x_min() < b.box.x_min();
    });

    for (const auto& o : objs) {
      rec.gt_boxes.push_back({o.box, o.category});
      for (int k = 0; k < spec.copies; ++k) {
        RegionProposal p{.box = jittered(o.box, spec.jitter, spec.width, spec.height, rng),
                         .category = o.category,
                         .confidence = rng.uniform(0.6, 1.0),
                         .feature = {},
                         .is_ground_truth = false};
        p.feature = object_feature(o, spec.pooled, plural_slot, spec.noise, rng);
        rec.proposals.push_back(std::move(p));
      }
    }
    for (int k = 0; k < spec.distractors; ++k) {
      const double x0 = rng.uniform(0.0, spec.width * 0.7), y0 = rng.uniform(0.0, spec.height * 0.7);
      const double bw = rng.uniform(0.1, 0.3) * spec.width, bh = rng.uniform(0.1, 0.3) * spec.height;
      RegionProposal p{.box = BoundingBox(x0, y0, x0 + bw, y0 + bh),
                       .category = pool[static_cast<std::size_t>(rng.below(pool.size()))],
                       .confidence = rng.uniform(0.05, 0.45),
                       .feature = {},
                       .is_ground_truth = false};
      p.feature.resize(static_cast<std::size_t>(spec.pooled));
      for (double& v : p.feature) v = rng.uniform(-1.0, 1.0);
      rec.proposals.push_back(std::move(p));
    }

    const int tmpl = count == 1   ? static_cast<int>(rng.below(2))
                     : count == 2 ? 2 + static_cast<int>(rng.below(2))
                                  : 4;
    FeatureMatrix grid(static_cast<std::size_t>(spec.grid),
                       std::vector<double>(static_cast<std::size_t>(spec.pooled)));
    for (auto& row : grid) {
      for (double& v : row) v = rng.uniform(-spec.noise, spec.noise);
      row[static_cast<std::size_t>(tmpl)] += 1.0;
    }
    rec.grid_features = std::move(grid);
    for (int k = 0; k < spec.captions_per_image; ++k) rec.captions.push_back(caption_for(tmpl, objs, cmap));
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace nbt
