#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "fixtures.hpp"
#include "nbt/splits.hpp"
#include "split_oracle.hpp"

using namespace nbt;

namespace {

ImageMentions mentions(const CategoryMap& cmap, std::string id, std::initializer_list<const char*> names) {
  ImageMentions m{std::move(id), {}};
  for (const char* n : names) m.categories.insert(cmap.category_id(n));
  return m;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::vector<std::pair<std::string, std::string>> excluded_pairs(const SplitAssignment& s) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : s.meta.at("excluded_pairs")) out.emplace_back(p[0], p[1]);
  return out;
}

void check_robust_invariants(const std::vector<ImageMentions>& images, const CategoryMap& cmap,
                             const SplitAssignment& split) {
  const auto train = as_set(split.train), val = as_set(split.val), test = as_set(split.test);
  CHECK(train.size() + val.size() + test.size() == images.size());
  for (const auto& im : images) {
    CHECK(train.count(im.image_id) + val.count(im.image_id) + test.count(im.image_id) == 1);
  }
  for (std::size_t c = 0; c < cmap.size(); ++c) {
    int total = 0, in_train = 0;
    for (const auto& im : images) {
      if (!im.categories.count(static_cast<CategoryId>(c))) continue;
      ++total;
      in_train += train.count(im.image_id) ? 1 : 0;
    }
    CHECK(2 * in_train >= total);
  }
  for (const auto& [a, b] : excluded_pairs(split)) {
    for (const auto& im : images) {
      if (!train.count(im.image_id)) continue;
      CHECK_FALSE((im.categories.count(cmap.category_id(a)) && im.categories.count(cmap.category_id(b))));
    }
  }
}

}  // namespace

TEST_CASE("co-occurrence counting") {
  const auto cmap = nbt::testing::toy_map();
  const std::vector<ImageMentions> images{mentions(cmap, "a", {"cat", "remote"}), mentions(cmap, "b", {"cat"}),
                                          mentions(cmap, "c", {"cat", "dog", "cake"})};
  const auto m = cooccurrence(images, cmap.size());
  const auto cat = cmap.category_id("cat"), remote = cmap.category_id("remote");
  CHECK(m.pair(cat, remote) == 1);
  CHECK(m.pair(remote, cat) == 1);
  CHECK(m.pair(cat, cat) == 0);
  CHECK(m.instances(cat) == 3);
  CHECK(m.pair(cmap.category_id("dog"), cmap.category_id("cake")) == 1);
  int pairs = 0;
  for (std::size_t a = 0; a < cmap.size(); ++a) {
    for (std::size_t b = a + 1; b < cmap.size(); ++b) pairs += m.pair(static_cast<CategoryId>(a), static_cast<CategoryId>(b));
  }
  CHECK(pairs == 4);
}

TEST_CASE("mentions are collected from captions through lemmas") {
  const auto cmap = nbt::testing::toy_map();
  ImageRecord rec;
  rec.image_id = "x";
  rec.captions = {"two kittens on a sofa", "a busy street"};
  const auto m = collect_mentions(std::vector<ImageRecord>{rec}, cmap);
  REQUIRE(m.size() == 1);
  CHECK(m[0].categories == std::set<CategoryId>{cmap.category_id("cat"), cmap.category_id("couch")});
}

TEST_CASE("robust split on an engineered corpus") {
  const auto cmap = nbt::testing::toy_map();
  // Pair counts: (bus, dog) 1, (cake, cat) 1, (bus, cake) 2, (cat, dog) 3.
  const std::vector<ImageMentions> images{
      mentions(cmap, "i01", {"cat", "dog"}), mentions(cmap, "i02", {"cat", "dog"}),
      mentions(cmap, "i03", {"cat", "dog"}), mentions(cmap, "i04", {"cat", "cake"}),
      mentions(cmap, "i05", {"dog", "bus"}), mentions(cmap, "i06", {"cake", "bus"}),
      mentions(cmap, "i07", {"cake", "bus"}), mentions(cmap, "i08", {"cat"}),
      mentions(cmap, "i09", {"dog"}),         mentions(cmap, "i10", {"cake"}),
      mentions(cmap, "i11", {"bus"}),         mentions(cmap, "i12", {"dog"})};
  const auto split = build_robust_split(images, cmap, 0.0, 1);
  CHECK(as_set(split.test) == std::set<std::string>{"i04", "i05"});
  const std::vector<std::pair<std::string, std::string>> expected{{"bus", "dog"}, {"cake", "cat"}};
  CHECK(excluded_pairs(split) == expected);
  const auto [oracle_pairs, oracle_test] = nbt::testing::oracle_robust_split(images, cmap);
  CHECK(oracle_pairs == expected);
  CHECK(oracle_test == as_set(split.test));
  check_robust_invariants(images, cmap, split);
}

TEST_CASE("robust split matches the exhaustive oracle on random corpora") {
  const auto cmap = nbt::testing::toy_map();
  const std::vector<std::string> names{"bus", "cake", "cat", "dog"};
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<ImageMentions> images;
    for (int i = 0; i < 12; ++i) {
      ImageMentions m{"r" + std::to_string(i), {}};
      for (const auto& n : names) {
        if (rng.bernoulli(0.45)) m.categories.insert(cmap.category_id(n));
      }
      images.push_back(std::move(m));
    }
    const auto split = build_robust_split(images, cmap, 0.0, 1);
    const auto [pairs, test] = nbt::testing::oracle_robust_split(images, cmap);
    CHECK(excluded_pairs(split) == pairs);
    CHECK(as_set(split.test) == test);
    check_robust_invariants(images, cmap, split);
  }
}

TEST_CASE("robust split edge cases") {
  const auto cmap = nbt::testing::toy_map();
  SUBCASE("a binding halving constraint leaves test empty") {
    const std::vector<ImageMentions> images{mentions(cmap, "a", {"cat", "dog"}), mentions(cmap, "b", {"cat", "dog"})};
    const auto split = build_robust_split(images, cmap, 0.0, 1);
    CHECK(split.test.empty());
    CHECK(excluded_pairs(split).empty());
  }
  SUBCASE("a single category corpus is all train") {
    const std::vector<ImageMentions> images{mentions(cmap, "a", {"cat"}), mentions(cmap, "b", {"cat"}),
                                            mentions(cmap, "c", {})};
    const auto split = build_robust_split(images, cmap, 0.0, 1);
    CHECK(split.train.size() == 3);
    CHECK(split.test.empty());
  }
  SUBCASE("bad fractions are rejected") {
    CHECK_THROWS(build_robust_split(std::vector<ImageMentions>{}, cmap, 1.5, 1));
  }
}

TEST_CASE("robust split with validation keeps the invariants and is deterministic") {
  const auto cmap = nbt::testing::toy_map();
  const auto records = nbt::testing::toy_records(cmap, 120, 5);
  const auto images = collect_mentions(records, cmap);
  const auto a = build_robust_split(images, cmap, 0.1, 3);
  const auto b = build_robust_split(images, cmap, 0.1, 3);
  CHECK(a.to_json() == b.to_json());
  CHECK_FALSE(a.val.empty());
  CHECK_FALSE(a.test.empty());
  check_robust_invariants(images, cmap, a);
}

TEST_CASE("exclusion split") {
  const auto cmap = nbt::testing::toy_map();
  std::vector<ImageRecord> records(6);
  const std::vector<std::string> caps{"a zebra grazing", "a cat on a couch", "a dog", "a cat", "two dogs", "a cake"};
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].image_id = "e" + std::to_string(i);
    records[i].captions = {caps[i]};
  }
  const auto images = collect_mentions(records, cmap);
  const std::vector<std::string> held{"zebra", "couch"};
  const auto split = build_exclusion_split(images, cmap, held, 0.25, 0.0, 7);
  const auto ood = split.meta.at("out_of_domain").get<std::vector<std::string>>();
  CHECK(as_set(ood) == std::set<std::string>{"e0", "e1"});
  CHECK(split.meta.at("out_of_domain_by_category").at("zebra") == nlohmann::json::array({"e0"}));
  const auto in_domain = split.meta.at("in_domain").get<std::vector<std::string>>();
  CHECK(in_domain.size() == 1);
  CHECK(split.test.size() == 3);
  for (const auto& id : split.train) {
    const auto& rec = *std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.image_id == id; });
    for (const auto& tok : tokenize(rec.captions[0])) {
      const auto m = cmap.find_finegrained(cmap.lemma(tok));
      if (m) CHECK((cmap.entry(m->category).name != "zebra" && cmap.entry(m->category).name != "couch"));
    }
  }
  CHECK(build_exclusion_split(images, cmap, held, 0.25, 0.0, 7).to_json() == split.to_json());
  CHECK_THROWS(build_exclusion_split(images, cmap, {"ocelot"}, 0.25, 0.0, 7));
  CHECK(default_excluded_categories() ==
        std::vector<std::string>{"bottle", "bus", "couch", "microwave", "pizza", "racket", "suitcase", "zebra"});
}

TEST_CASE("split files round trip") {
  SplitAssignment s;
  s.train = {"a", "b"};
  s.val = {"c"};
  s.test = {"d"};
  s.meta = {{"mode", "robust"}, {"excluded_pairs", nlohmann::json::array({nlohmann::json::array({"cat", "dog"})})}};
  const auto path = std::filesystem::temp_directory_path() / "nbt_split_roundtrip.json";
  write_split(path, s);
  const auto back = read_split(path);
  CHECK(back.to_json() == s.to_json());
  std::filesystem::remove(path);
  auto doc = s.to_json();
  doc["test"].push_back("a");
  CHECK_THROWS(SplitAssignment::from_json(doc));
}
