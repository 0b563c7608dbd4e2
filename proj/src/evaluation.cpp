#include "nbt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nbt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                   tokens.begin() + static_cast<long>(i + n))];
  }
  return out;
}

struct Matches {
  std::vector<long> clipped;
  std::vector<long> total;
  long cand_len = 0;
  long ref_len = 0;
};

void accumulate(const Tokens& cand, const std::vector<Tokens>& refs, int n, Matches& m) {
  if (refs.empty()) throw std::invalid_argument("bleu: at least one reference is required");
  m.cand_len += static_cast<long>(cand.size());
  std::size_t closest = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) {
      return len > cand.size() ? len - cand.size() : cand.size() - len;
    };
    if (d(r.size()) < d(closest) || (d(r.size()) == d(closest) && r.size() < closest)) {
      closest = r.size();
    }
  }
  m.ref_len += static_cast<long>(closest);
  for (int k = 1; k <= n; ++k) {
    const auto cand_counts = ngrams(cand, static_cast<std::size_t>(k));
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [g, c] : ngrams(r, static_cast<std::size_t>(k))) {
        max_ref[g] = std::max(max_ref[g], c);
      }
    }
    for (const auto& [g, c] : cand_counts) {
      const auto it = max_ref.find(g);
      m.clipped[static_cast<std::size_t>(k - 1)] += std::min(c, it == max_ref.end() ? 0 : it->second);
      m.total[static_cast<std::size_t>(k - 1)] += c;
    }
  }
}

void check_order(int n) {
  if (n < 1 || n > 4) throw std::invalid_argument("bleu: n must be in 1..4");
}

double brevity(long cand_len, long ref_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len > ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

bool mentions_all(const std::set<CategoryId>& mentioned, const CategoryPair& pair) {
  return mentioned.contains(pair.first) && mentioned.contains(pair.second);
}

}  // namespace

double corpus_bleu(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references,
                   int n) {
  check_order(n);
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("bleu: candidates and references differ in count");
  }
  Matches m;
  m.clipped.assign(static_cast<std::size_t>(n), 0);
  m.total.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) accumulate(candidates[i], references[i], n, m);
  if (m.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (m.clipped[ks] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(m.clipped[ks]) / static_cast<double>(m.total[ks]));
  }
  return brevity(m.cand_len, m.ref_len) * std::exp(log_sum / n);
}

double bleu_n(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  const std::vector<Tokens> cands{candidate};
  const std::vector<std::vector<Tokens>> refs{references};
  return corpus_bleu(cands, refs, n);
}

double sentence_bleu_smoothed(const Tokens& candidate, const std::vector<Tokens>& references,
                              int n) {
  check_order(n);
  Matches m;
  m.clipped.assign(static_cast<std::size_t>(n), 0);
  m.total.assign(static_cast<std::size_t>(n), 0);
  accumulate(candidate, references, n, m);
  if (m.cand_len == 0 || m.clipped[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(m.clipped[0]) / static_cast<double>(m.total[0]));
  for (std::size_t k = 1; k < static_cast<std::size_t>(n); ++k) {
    log_sum += std::log(static_cast<double>(m.clipped[k] + 1) / static_cast<double>(m.total[k] + 1));
  }
  return brevity(m.cand_len, m.ref_len) * std::exp(log_sum / n);
}

std::vector<CategoryPair> held_out_pairs(const std::set<CategoryId>& mentioned,
                                         std::span<const CategoryPair> excluded) {
  std::vector<CategoryPair> out;
  for (const auto& p : excluded) {
    if (mentions_all(mentioned, p)) out.push_back(p);
  }
  return out;
}

double compositional_accuracy(std::span<const std::string> captions,
                              std::span<const std::vector<CategoryPair>> pairs,
                              const CategoryMap& categories) {
  if (captions.size() != pairs.size()) {
    throw std::invalid_argument("compositional_accuracy: captions and pairs differ in count");
  }
  if (captions.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto mentioned = mentioned_categories(captions[i], categories);
    if (std::any_of(pairs[i].begin(), pairs[i].end(),
                    [&](const CategoryPair& p) { return mentions_all(mentioned, p); })) {
      ++hits;
    }
  }
  return 100.0 * hits / static_cast<double>(captions.size());
}

double F1Counts::f1() const {
  const double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

F1Counts novel_object_counts(const std::map<std::string, std::string>& captions_by_image,
                             const SplitAssignment& split, const std::string& category,
                             const CategoryMap& categories) {
  const auto& by_cat = split.meta.value("out_of_domain_by_category", nlohmann::json::object());
  if (!by_cat.contains(category)) {
    throw std::invalid_argument("split has no out-of-domain record for category '" + category + "'");
  }
  const auto positives = by_cat.at(category).get<std::set<std::string>>();
  const CategoryId id = categories.category_id(category);
  F1Counts out;
  for (const auto& image : split.test) {
    const auto it = captions_by_image.find(image);
    if (it == captions_by_image.end()) continue;
    const bool predicted = mentioned_categories(it->second, categories).contains(id);
    const bool actual = positives.contains(image);
    if (predicted && actual) ++out.tp;
    else if (predicted) ++out.fp;
    else if (actual) ++out.fn;
    else ++out.tn;
  }
  return out;
}

GroundingCounts grounding_accuracy(std::span<const GroundedSlot> slots,
                                   std::span<const GroundTruthBox> gt_boxes,
                                   const CategoryMap& categories) {
  GroundingCounts out;
  for (const auto& slot : slots) {
    ++out.total;
    const auto match = categories.find_finegrained(categories.lemma(slot.word));
    if (!match) continue;
    for (const auto& gt : gt_boxes) {
      if (gt.category == match->category && iou(slot.box, gt.box) >= 0.5) {
        ++out.correct;
        break;
      }
    }
  }
  return out;
}

GroundingCounts grounding_accuracy(std::span<const Template> templates,
                                   std::span<const ImageRecord> records,
                                   const CategoryMap& categories) {
  if (templates.size() != records.size()) {
    throw std::invalid_argument("grounding_accuracy: templates and records differ in count");
  }
  GroundingCounts out;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    std::vector<GroundedSlot> slots;
    for (const auto& g : templates[i].groundings) {
      slots.push_back({records[i].proposals.at(static_cast<std::size_t>(g.region)).box, g.word});
    }
    const auto c = grounding_accuracy(slots, records[i].gt_boxes, categories);
    out.correct += c.correct;
    out.total += c.total;
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc = {{"bleu1", bleu1}, {"bleu4", bleu4}, {"num_captions", num_captions}};
  if (compositional_accuracy) {
    doc["compositional_accuracy"] = *compositional_accuracy;
    doc["num_compositional"] = num_compositional;
  }
  if (!novel_f1.empty()) {
    nlohmann::json f1 = nlohmann::json::object();
    for (const auto& [name, c] : novel_f1) {
      f1[name] = {{"f1", c.f1()}, {"precision", c.precision()}, {"recall", c.recall()},
                  {"tp", c.tp},   {"fp", c.fp},               {"fn", c.fn},
                  {"tn", c.tn}};
    }
    doc["novel_f1"] = std::move(f1);
    doc["macro_f1"] = macro_f1.value_or(0.0);
  }
  if (grounding) {
    doc["grounding_accuracy"] = grounding->percent();
    doc["grounding_slots"] = grounding->total;
  }
  return doc;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[128];
  auto row = [&](const std::string& name, double value) {
    std::snprintf(line, sizeof line, "%-28s %10.4f\n", name.c_str(), value);
    out << line;
  };
  row("captions", num_captions);
  row("BLEU-1", bleu1);
  row("BLEU-4", bleu4);
  if (compositional_accuracy) row("compositional accuracy (%)", *compositional_accuracy);
  for (const auto& [name, c] : novel_f1) row("F1 " + name, c.f1());
  if (macro_f1) row("F1 macro average", *macro_f1);
  if (grounding) row("grounding accuracy (%)", grounding->percent());
  return out.str();
}

EvalReport evaluate(const std::map<std::string, std::string>& captions,
                    std::span<const ImageRecord> records, const CategoryMap& categories,
                    const std::optional<SplitAssignment>& split,
                    const std::map<std::string, std::vector<GroundedSlot>>* slots) {
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& r : records) by_id[r.image_id] = &r;

  std::vector<std::string> ids;
  if (split) {
    ids = split->test;
  } else {
    for (const auto& r : records) ids.push_back(r.image_id);
  }

  EvalReport report;
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  std::vector<const ImageRecord*> used;
  for (const auto& id : ids) {
    const auto cap = captions.find(id);
    if (cap == captions.end()) continue;
    const auto rec = by_id.find(id);
    if (rec == by_id.end()) throw std::invalid_argument("no dataset record for image " + id);
    if (rec->second->captions.empty()) continue;
    cands.push_back(tokenize(cap->second));
    std::vector<Tokens> r;
    for (const auto& c : rec->second->captions) r.push_back(tokenize(c));
    refs.push_back(std::move(r));
    used.push_back(rec->second);
  }
  report.num_captions = static_cast<int>(cands.size());
  if (!cands.empty()) {
    report.bleu1 = corpus_bleu(cands, refs, 1);
    report.bleu4 = corpus_bleu(cands, refs, 4);
  }

  if (split && split->meta.value("mode", "") == "robust") {
    std::vector<CategoryPair> excluded;
    for (const auto& p : split->meta.value("excluded_pairs", nlohmann::json::array())) {
      excluded.emplace_back(categories.category_id(p.at(0).get<std::string>()),
                            categories.category_id(p.at(1).get<std::string>()));
    }
    std::vector<std::string> texts;
    std::vector<std::vector<CategoryPair>> pairs;
    for (const ImageRecord* rec : used) {
      auto held = held_out_pairs(mentioned_categories(*rec, categories), excluded);
      if (held.empty()) continue;
      texts.push_back(captions.at(rec->image_id));
      pairs.push_back(std::move(held));
    }
    report.num_compositional = static_cast<int>(texts.size());
    report.compositional_accuracy = compositional_accuracy(texts, pairs, categories);
  }

  if (split && split->meta.value("mode", "") == "exclusion") {
    double sum = 0.0;
    for (const auto& name : split->meta.at("excluded_categories")) {
      const auto n = name.get<std::string>();
      report.novel_f1[n] = novel_object_counts(captions, *split, n, categories);
      sum += report.novel_f1[n].f1();
    }
    if (!report.novel_f1.empty()) report.macro_f1 = sum / static_cast<double>(report.novel_f1.size());
  }

  if (slots) {
    GroundingCounts total;
    for (const ImageRecord* rec : used) {
      const auto it = slots->find(rec->image_id);
      if (it == slots->end()) continue;
      const auto c = grounding_accuracy(it->second, rec->gt_boxes, categories);
      total.correct += c.correct;
      total.total += c.total;
    }
    report.grounding = total;
  }
  return report;
}

}  // namespace nbt
