#include "nbt/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "nbt/rng.hpp"

namespace nbt {

std::vector<ImageMentions> collect_mentions(std::span<const ImageRecord> records,
                                            const CategoryMap& categories) {
  std::vector<ImageMentions> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.image_id, mentioned_categories(r, categories)});
  return out;
}

CooccurrenceMatrix::CooccurrenceMatrix(std::size_t num_categories)
    : instances_(num_categories, 0), pairs_(num_categories * num_categories, 0) {}

void CooccurrenceMatrix::add_image(const std::set<CategoryId>& mentioned) {
  const std::size_t c = size();
  for (CategoryId a : mentioned) {
    if (a < 0 || static_cast<std::size_t>(a) >= c) {
      throw std::invalid_argument("cooccurrence: category id out of range");
    }
    ++instances_[static_cast<std::size_t>(a)];
    for (CategoryId b : mentioned) {
      if (a != b) ++pairs_[static_cast<std::size_t>(a) * c + static_cast<std::size_t>(b)];
    }
  }
}

int CooccurrenceMatrix::pair(CategoryId a, CategoryId b) const {
  return pairs_.at(static_cast<std::size_t>(a) * size() + static_cast<std::size_t>(b));
}

CooccurrenceMatrix cooccurrence(std::span<const ImageMentions> images,
                                std::size_t num_categories) {
  CooccurrenceMatrix m(num_categories);
  for (const auto& img : images) m.add_image(img.categories);
  return m;
}

std::vector<CategoryPair> pair_visit_order(const CooccurrenceMatrix& counts,
                                           const CategoryMap& categories) {
  struct Entry {
    int count;
    std::string first, second;
    CategoryPair pair;
  };
  std::vector<Entry> entries;
  const auto c = static_cast<CategoryId>(counts.size());
  for (CategoryId a = 0; a < c; ++a) {
    for (CategoryId b = a + 1; b < c; ++b) {
      const int n = counts.pair(a, b);
      if (n == 0) continue;
      std::string x = categories.entry(a).name, y = categories.entry(b).name;
      if (y < x) std::swap(x, y);
      entries.push_back({n, std::move(x), std::move(y), {a, b}});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& l, const Entry& r) {
    return std::tie(l.count, l.first, l.second) < std::tie(r.count, r.first, r.second);
  });
  std::vector<CategoryPair> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.pair);
  return out;
}

namespace {

std::size_t target_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void check_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f < 1.0)) {
    throw std::invalid_argument(std::string(what) + " must be in [0, 1)");
  }
}

// Draws `wanted` images from `pool` (visited in a seeded shuffle) into `dest`,
// skipping any whose removal would drop a category below half its total.
void carve_validation(const std::vector<std::size_t>& pool, std::size_t wanted,
                      std::span<const ImageMentions> images, const CategoryMap& categories,
                      const std::vector<int>& totals, std::vector<int>& train_counts,
                      std::vector<char>& taken, std::uint64_t seed) {
  std::vector<std::size_t> order = pool;
  Rng rng(seed);
  rng.shuffle(order);
  std::set<CategoryId> blocking;
  std::size_t got = 0;
  for (std::size_t idx : order) {
    if (got == wanted) break;
    bool ok = true;
    for (CategoryId c : images[idx].categories) {
      const auto ci = static_cast<std::size_t>(c);
      if (2 * (train_counts[ci] - 1) < totals[ci]) {
        ok = false;
        blocking.insert(c);
      }
    }
    if (!ok) continue;
    for (CategoryId c : images[idx].categories) --train_counts[static_cast<std::size_t>(c)];
    taken[idx] = 1;
    ++got;
  }
  if (got < wanted) {
    std::string names;
    for (CategoryId c : blocking) names += (names.empty() ? "" : ", ") + categories.entry(c).name;
    throw SplitError("cannot draw " + std::to_string(wanted) + " validation images (got " +
                     std::to_string(got) + ") without dropping below half of the instances of: " +
                     names);
  }
}

}  // namespace

nlohmann::json SplitAssignment::to_json() const {
  return {{"train", train}, {"val", val}, {"test", test}, {"meta", meta}};
}

SplitAssignment SplitAssignment::from_json(const nlohmann::json& doc) {
  SplitAssignment s;
  s.train = doc.at("train").get<std::vector<std::string>>();
  s.val = doc.at("val").get<std::vector<std::string>>();
  s.test = doc.at("test").get<std::vector<std::string>>();
  s.meta = doc.value("meta", nlohmann::json::object());
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) throw SplitError("split lists image '" + id + "' more than once");
    }
  }
  return s;
}

SplitAssignment build_robust_split(std::span<const ImageMentions> images,
                                   const CategoryMap& categories, double val_fraction,
                                   std::uint64_t seed) {
  check_fraction(val_fraction, "val_fraction");
  const auto counts = cooccurrence(images, categories.size());
  std::vector<int> totals(categories.size()), train(categories.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    totals[c] = train[c] = counts.instances(static_cast<CategoryId>(c));
  }

  std::vector<char> in_test(images.size(), 0);
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& [a, b] : pair_visit_order(counts, categories)) {
    std::vector<std::size_t> moving;
    std::vector<int> after = train;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& m = images[i].categories;
      if (in_test[i] || !m.contains(a) || !m.contains(b)) continue;
      moving.push_back(i);
      for (CategoryId c : m) --after[static_cast<std::size_t>(c)];
    }
    bool ok = true;
    for (std::size_t c = 0; c < after.size() && ok; ++c) ok = 2 * after[c] >= totals[c];
    if (!ok) continue;
    for (std::size_t i : moving) in_test[i] = 1;
    train = std::move(after);
    excluded.push_back({categories.entry(a).name, categories.entry(b).name});
  }

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!in_test[i]) pool.push_back(i);
  }
  std::vector<char> in_val(images.size(), 0);
  carve_validation(pool, target_count(val_fraction, pool.size()), images, categories, totals,
                   train, in_val, seed);

  SplitAssignment out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& dest = in_test[i] ? out.test : in_val[i] ? out.val : out.train;
    dest.push_back(images[i].image_id);
  }
  out.meta = {{"mode", "robust"}, {"excluded_pairs", std::move(excluded)}, {"seed", seed}};
  return out;
}

SplitAssignment build_exclusion_split(std::span<const ImageMentions> images,
                                      const CategoryMap& categories,
                                      const std::vector<std::string>& excluded,
                                      double test_fraction, double val_fraction,
                                      std::uint64_t seed) {
  check_fraction(test_fraction, "test_fraction");
  check_fraction(val_fraction, "val_fraction");
  std::map<CategoryId, std::string> held;
  for (const auto& name : excluded) held[categories.category_id(name)] = name;

  nlohmann::json by_category = nlohmann::json::object();
  for (const auto& [id, name] : held) by_category[name] = nlohmann::json::array();
  std::vector<char> out_of_domain(images.size(), 0);
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& [id, name] : held) {
      if (images[i].categories.contains(id)) {
        out_of_domain[i] = 1;
        by_category[name].push_back(images[i].image_id);
      }
    }
    if (!out_of_domain[i]) clean.push_back(i);
  }

  Rng rng(seed);
  std::vector<std::size_t> shuffled = clean;
  rng.shuffle(shuffled);
  const std::size_t n_test = target_count(test_fraction, clean.size());
  const std::size_t n_val = target_count(val_fraction, clean.size() - n_test);
  std::vector<char> role(images.size(), 0);  // 0 train, 1 val, 2 in-domain test
  for (std::size_t k = 0; k < shuffled.size(); ++k) {
    role[shuffled[k]] = k < n_test ? 2 : k < n_test + n_val ? 1 : 0;
  }

  SplitAssignment out;
  nlohmann::json in_domain = nlohmann::json::array(), ood = nlohmann::json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& id = images[i].image_id;
    if (out_of_domain[i]) {
      out.test.push_back(id);
      ood.push_back(id);
    } else if (role[i] == 2) {
      out.test.push_back(id);
      in_domain.push_back(id);
    } else if (role[i] == 1) {
      out.val.push_back(id);
    } else {
      out.train.push_back(id);
    }
  }
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [id, name] : held) names.push_back(name);
  out.meta = {{"mode", "exclusion"},
              {"excluded_categories", std::move(names)},
              {"in_domain", std::move(in_domain)},
              {"out_of_domain", std::move(ood)},
              {"out_of_domain_by_category", std::move(by_category)},
              {"seed", seed}};
  return out;
}

const std::vector<std::string>& default_excluded_categories() {
  static const std::vector<std::string> names = {"bottle", "bus",      "couch",    "microwave",
                                                 "pizza",  "racket",   "suitcase", "zebra"};
  return names;
}

void write_split(const std::filesystem::path& path, const SplitAssignment& split) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file " + path.string());
  out << split.to_json().dump(2) << '\n';
}

SplitAssignment read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file " + path.string());
  return SplitAssignment::from_json(nlohmann::json::parse(in));
}

}  // namespace nbt
