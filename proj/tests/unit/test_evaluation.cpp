#include <doctest.h>

#include "fixtures.hpp"
#include "metric_oracles.hpp"
#include "nbt/evaluation.hpp"

using namespace nbt;

TEST_CASE("bleu fixtures") {
  for (const auto& f : nbt::testing::bleu_fixtures()) {
    CAPTURE(f.name);
    CHECK(std::abs(corpus_bleu(f.candidates, f.references, f.n) - f.expected) < 1e-9);
  }
}

TEST_CASE("bleu of a caption against itself is one for every order") {
  const Tokens x{"a", "small", "dog", "near", "two", "cakes"};
  for (int n = 1; n <= 4; ++n) CHECK(bleu_n(x, {x}, n) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bleu edge cases") {
  CHECK(bleu_n({}, {{"a"}}, 1) == 0.0);
  CHECK(bleu_n({"a", "b"}, {{"c", "d"}}, 1) == 0.0);
  CHECK(bleu_n({"a", "b"}, {{"a", "c"}}, 2) == 0.0);  // no bigram match, unsmoothed
  CHECK_THROWS(bleu_n({"a"}, {{"a"}}, 5));
  CHECK_THROWS(bleu_n({"a"}, {}, 1));
  const double smoothed = sentence_bleu_smoothed({"a", "b"}, {{"a", "c"}}, 2);
  CHECK(smoothed > 0.0);
  CHECK(smoothed < 1.0);
}

TEST_CASE("f1 counts") {
  F1Counts c{2, 1, 1, 0};
  CHECK(c.f1() == 2.0 / 3.0);
  CHECK(F1Counts{}.f1() == 0.0);
  CHECK(F1Counts{3, 0, 0, 5}.f1() == 1.0);
  CHECK(F1Counts{0, 0, 4, 2}.f1() == 0.0);
}

TEST_CASE("compositional accuracy examples") {
  const auto cmap = nbt::testing::toy_map();
  const CategoryPair cat_remote{std::min(cmap.category_id("cat"), cmap.category_id("remote")),
                                std::max(cmap.category_id("cat"), cmap.category_id("remote"))};
  const std::vector<std::vector<CategoryPair>> pairs{{cat_remote}, {cat_remote}, {cat_remote}};
  const std::vector<std::string> caps{"a cat holding a remote", "a cat on a bed", "two kittens with remotes."};
  CHECK(compositional_accuracy(caps, pairs, cmap) == doctest::Approx(200.0 / 3.0));
  const std::vector<std::string> one{"a cat on a bed"};
  const std::vector<std::vector<CategoryPair>> one_pair{{cat_remote}};
  CHECK(compositional_accuracy(one, one_pair, cmap) == 0.0);
  CHECK(held_out_pairs({cmap.category_id("cat"), cmap.category_id("remote")}, std::vector<CategoryPair>{cat_remote}).size() == 1);
  CHECK(held_out_pairs({cmap.category_id("cat")}, std::vector<CategoryPair>{cat_remote}).empty());
}

TEST_CASE("compositional accuracy matches a labeled-word oracle") {
  const auto cmap = nbt::testing::toy_map();
  Rng rng(4);
  const std::vector<std::string> names{"cat", "dog", "remote", "bus", "couch", "dining table", "person", "bird", "cake"};
  std::vector<nbt::testing::LabeledCaption> labeled;
  std::vector<std::string> texts;
  std::vector<std::vector<std::pair<std::string, std::string>>> named;
  std::vector<std::vector<CategoryPair>> ids;
  for (int i = 0; i < 100; ++i) {
    labeled.push_back(nbt::testing::random_caption(rng));
    texts.push_back(labeled.back().text);
    std::vector<std::pair<std::string, std::string>> ps;
    std::vector<CategoryPair> cp;
    for (int k = 0; k < 2; ++k) {
      const auto& a = names[rng.below(names.size())];
      const auto& b = names[rng.below(names.size())];
      if (a == b) continue;
      ps.emplace_back(a, b);
      const auto ia = cmap.category_id(a), ib = cmap.category_id(b);
      cp.emplace_back(std::min(ia, ib), std::max(ia, ib));
    }
    named.push_back(ps);
    ids.push_back(cp);
  }
  CHECK(compositional_accuracy(texts, ids, cmap) == doctest::Approx(nbt::testing::oracle_compositional(labeled, named)).epsilon(1e-12));
}

TEST_CASE("novel object counts") {
  const auto cmap = nbt::testing::toy_map();
  SplitAssignment split;
  split.test = {"a", "b", "c", "d", "e"};
  split.meta = {{"out_of_domain_by_category", {{"zebra", {"a", "b", "c"}}}}};
  const std::map<std::string, std::string> caps{
      {"a", "a zebra"}, {"b", "two zebras"}, {"c", "a horse"}, {"d", "a zebra in a field"}, {"e", "a dog"}};
  const auto counts = novel_object_counts(caps, split, "zebra", cmap);
  CHECK(counts.tp == 2);
  CHECK(counts.fp == 1);
  CHECK(counts.fn == 1);
  CHECK(counts.tn == 1);
  CHECK(counts.f1() == 2.0 / 3.0);
  CHECK_THROWS(novel_object_counts(caps, split, "bus", cmap));
}

TEST_CASE("grounding accuracy fixture") {
  const auto cmap = nbt::testing::toy_map();
  const std::vector<GroundTruthBox> gt{{{0, 0, 10, 10}, cmap.category_id("dog")},
                                       {{20, 20, 30, 30}, cmap.category_id("cake")}};
  const std::vector<GroundedSlot> slots{
      {{0, 0, 10, 10}, "puppies"},    // exact box, fine-grained plural
      {{1, 0, 10, 10}, "dog"},        // IoU 0.9
      {{20, 20, 30, 30}, "cupcake"},  // exact
      {{40, 40, 50, 50}, "cake"},     // disjoint
  };
  const auto counts = grounding_accuracy(slots, gt, cmap);
  CHECK(counts.correct == 3);
  CHECK(counts.total == 4);
  CHECK(counts.percent() == 75.0);
  const std::vector<GroundedSlot> wrong_category{{{0, 0, 10, 10}, "cake"}};
  CHECK(grounding_accuracy(wrong_category, gt, cmap).correct == 0);
}

TEST_CASE("evaluate normalizes case and punctuation") {
  const auto cmap = nbt::testing::toy_map();
  ImageRecord rec;
  rec.image_id = "x";
  rec.captions = {"a dog near a cake"};
  const std::vector<ImageRecord> records{rec};
  const auto report = evaluate({{"x", "A Dog near a cake."}}, records, cmap, std::nullopt);
  CHECK(report.bleu1 == doctest::Approx(1.0));
  CHECK(report.bleu4 == doctest::Approx(1.0));
  CHECK(report.num_captions == 1);
  CHECK_FALSE(report.compositional_accuracy);
  const auto doc = report.to_json();
  CHECK(doc.at("bleu1") == doctest::Approx(1.0));
  CHECK(report.to_table().find("BLEU-4") != std::string::npos);
}
