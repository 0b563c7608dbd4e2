#include "nbt/inference.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace nbt {

namespace {

double clamped_log(double p) { return std::log(std::max(p, num::Graph::kLogClamp)); }

// Better-first order shared by greedy and beam search.
bool choice_before(const TokenChoice& a, const TokenChoice& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.textual != b.textual) return a.textual;
  return a.index < b.index;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

std::vector<TokenChoice> step_candidates(const StepOutput& step) {
  std::vector<TokenChoice> out;
  out.reserve(step.textual_dist.size() + step.num_regions());
  const double sentinel = clamped_log(step.sentinel());
  for (std::size_t w = 1; w < step.textual_dist.size(); ++w) {  // <bos> is never emitted
    out.push_back({true, static_cast<int>(w), sentinel + clamped_log(step.textual_dist[w])});
  }
  for (std::size_t i = 0; i < step.num_regions(); ++i) {
    out.push_back({false, static_cast<int>(i), clamped_log(step.region_dist[i])});
  }
  std::sort(out.begin(), out.end(), choice_before);
  return out;
}

TokenChoice decode_step_choice(const StepOutput& step) {
  const double sentinel = clamped_log(step.sentinel());
  TokenChoice best{true, 1, sentinel + clamped_log(step.textual_dist.at(1))};
  for (std::size_t w = 2; w < step.textual_dist.size(); ++w) {
    const TokenChoice c{true, static_cast<int>(w), sentinel + clamped_log(step.textual_dist[w])};
    if (choice_before(c, best)) best = c;
  }
  for (std::size_t i = 0; i < step.num_regions(); ++i) {
    const TokenChoice c{false, static_cast<int>(i), clamped_log(step.region_dist[i])};
    if (choice_before(c, best)) best = c;
  }
  return best;
}

std::string Template::caption() const {
  std::string out;
  for (const auto& w : filled) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw std::invalid_argument("decode config: beam width must be >= 1");
  if (max_length < 1) throw std::invalid_argument("decode config: max length must be >= 1");
  for (const auto& set : required) {
    if (set.empty()) throw std::invalid_argument("decode config: empty required word set");
  }
}

std::string fill_slot(int region, const ImageRecord& record, const StepOutput& step,
                      const CategoryMap& categories) {
  const auto r = static_cast<std::size_t>(region);
  const auto& entry = categories.entry(record.proposals.at(r).category);
  const auto& fine = entry.finegrained.at(static_cast<std::size_t>(argmax(step.finegrained.at(r))));
  const auto& pb = step.plurality.at(r);
  return pb[1] > pb[0] ? categories.pluralize(fine) : fine;
}

ImageRecord with_oracle_regions(const ImageRecord& record, int pooled_dim) {
  ImageRecord out = record;
  out.proposals.clear();
  for (const auto& gt : record.gt_boxes) {
    RegionProposal p{.box = gt.box, .category = gt.category, .confidence = 1.0, .feature = {},
                     .is_ground_truth = true};
    double best = 0.0;
    const RegionProposal* source = nullptr;
    for (const auto& cand : record.proposals) {
      const double o = iou(cand.box, gt.box);
      if (o > best) {
        best = o;
        source = &cand;
      }
    }
    p.feature = source ? source->feature
                       : std::vector<double>(static_cast<std::size_t>(pooled_dim), 0.0);
    out.proposals.push_back(std::move(p));
  }
  return out;
}

std::vector<std::set<std::string>> required_concepts(const ImageRecord& record,
                                                     const CategoryMap& categories, int top) {
  std::vector<std::size_t> order(record.proposals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return record.proposals[a].confidence > record.proposals[b].confidence;
  });
  std::vector<CategoryId> picked;
  for (std::size_t i : order) {
    if (static_cast<int>(picked.size()) >= top) break;
    const CategoryId c = record.proposals[i].category;
    if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
  }
  std::vector<std::set<std::string>> out;
  for (CategoryId c : picked) {
    std::set<std::string> forms;
    for (const auto& w : categories.entry(c).finegrained) {
      forms.insert(w);
      forms.insert(categories.pluralize(w));
    }
    out.push_back(std::move(forms));
  }
  return out;
}

Captioner::Captioner(const ModelParams& params, const Vocabulary& vocabulary,
                     const CategoryMap& categories)
    : decoder_(params), vocab_(&vocabulary), categories_(&categories) {
  if (params.config().vocab != vocabulary.size()) {
    throw std::invalid_argument("captioner: vocabulary size does not match the model");
  }
  if (static_cast<std::size_t>(params.config().num_categories()) != categories.size()) {
    throw std::invalid_argument("captioner: category count does not match the model");
  }
}

Template Captioner::greedy(const ImageRecord& record, int max_length) const {
  Template out;
  DecoderState state = DecoderState::zeros(decoder_.config());
  int input = vocab_->bos();
  for (int t = 0;; ++t) {
    auto [step, next] = decoder_.forward_step(state, input, record);
    const TokenChoice choice =
        t >= max_length ? TokenChoice{true, vocab_->eos(),
                                      clamped_log(step.sentinel()) +
                                          clamped_log(step.textual_dist.at(
                                              static_cast<std::size_t>(vocab_->eos())))}
                        : decode_step_choice(step);
    out.score += choice.log_prob;
    if (choice.textual && choice.index == vocab_->eos()) break;
    if (choice.textual) {
      out.tokens.push_back({false, choice.index, 0});
      out.filled.push_back(vocab_->word(choice.index));
      input = choice.index;
    } else {
      const std::string word = fill_slot(choice.index, record, step, *categories_);
      out.groundings.push_back({static_cast<int>(out.tokens.size()), choice.index, word});
      out.tokens.push_back({true, 0, choice.index});
      out.filled.push_back(word);
      const CategoryId c = record.proposals[static_cast<std::size_t>(choice.index)].category;
      input = vocab_->index(categories_->canonical_word(c));
    }
    state = std::move(next);
  }
  return out;
}

namespace {

struct Hypothesis {
  Template tmpl;
  DecoderState state;
  int input = 0;
  unsigned mask = 0;
};

struct Expansion {
  std::size_t parent;
  TokenChoice choice;
  double score;
  unsigned mask;
  std::string word;
};

bool expansion_before(const Expansion& a, const Expansion& b) {
  if (a.score != b.score) return a.score > b.score;
  if (!(a.choice == b.choice)) return choice_before(a.choice, b.choice);
  return a.parent < b.parent;
}

}  // namespace

std::vector<Template> Captioner::search(const ImageRecord& record,
                                        const std::vector<std::set<std::string>>& required,
                                        int width, int max_length) const {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (required.size() > 16) throw std::invalid_argument("at most 16 constraint sets");
  const unsigned full = (1u << required.size()) - 1u;
  const int eos = vocab_->eos();

  std::vector<Hypothesis> alive(1);
  alive[0].state = DecoderState::zeros(decoder_.config());
  alive[0].input = vocab_->bos();
  std::vector<Template> finished;
  std::optional<Hypothesis> best_partial;

  auto consider_partial = [&](const Hypothesis& h) {
    if (!best_partial) {
      best_partial = h;
      return;
    }
    const int a = std::popcount(h.mask), b = std::popcount(best_partial->mask);
    if (a > b || (a == b && h.tmpl.score > best_partial->tmpl.score)) best_partial = h;
  };

  while (!alive.empty()) {
    std::vector<StepOutput> outputs;
    std::vector<DecoderState> nexts;
    std::vector<Expansion> expansions;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const Hypothesis& hyp = alive[h];
      auto [step, next] = decoder_.forward_step(hyp.state, hyp.input, record);
      const bool at_limit = static_cast<int>(hyp.tmpl.tokens.size()) >= max_length;
      std::vector<std::string> region_words;
      for (std::size_t i = 0; i < step.num_regions(); ++i) {
        region_words.push_back(fill_slot(static_cast<int>(i), record, step, *categories_));
      }
      bool expanded = false;
      for (const TokenChoice& c : step_candidates(step)) {
        const bool is_eos = c.textual && c.index == eos;
        if (is_eos && hyp.mask != full) continue;
        if (at_limit && !is_eos) continue;
        std::string word = c.textual ? vocab_->word(c.index)
                                     : region_words[static_cast<std::size_t>(c.index)];
        unsigned mask = hyp.mask;
        for (std::size_t j = 0; j < required.size(); ++j) {
          if (required[j].contains(word)) mask |= 1u << j;
        }
        expansions.push_back({h, c, hyp.tmpl.score + c.log_prob, mask, std::move(word)});
        expanded = true;
      }
      if (!expanded) consider_partial(hyp);
      outputs.push_back(std::move(step));
      nexts.push_back(std::move(next));
    }

    std::stable_sort(expansions.begin(), expansions.end(), expansion_before);
    std::map<unsigned, int> taken;
    std::vector<Hypothesis> next_alive;
    for (const auto& e : expansions) {
      int& n = taken[e.mask];
      if (n >= width) continue;
      ++n;
      const Hypothesis& parent = alive[e.parent];
      if (e.choice.textual && e.choice.index == eos) {
        Template t = parent.tmpl;
        t.score = e.score;
        finished.push_back(std::move(t));
        continue;
      }
      Hypothesis child;
      child.tmpl = parent.tmpl;
      child.tmpl.score = e.score;
      child.mask = e.mask;
      child.state = nexts[e.parent];
      if (e.choice.textual) {
        child.tmpl.tokens.push_back({false, e.choice.index, 0});
        child.input = e.choice.index;
      } else {
        child.tmpl.groundings.push_back(
            {static_cast<int>(child.tmpl.tokens.size()), e.choice.index, e.word});
        child.tmpl.tokens.push_back({true, 0, e.choice.index});
        const CategoryId c = record.proposals[static_cast<std::size_t>(e.choice.index)].category;
        child.input = vocab_->index(categories_->canonical_word(c));
      }
      child.tmpl.filled.push_back(e.word);
      next_alive.push_back(std::move(child));
    }
    alive = std::move(next_alive);

    // Scores only decrease, so nothing alive can overtake `width` finished beams.
    if (static_cast<int>(finished.size()) >= width) {
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& h : alive) best_alive = std::max(best_alive, h.tmpl.score);
      std::vector<double> scores;
      for (const auto& t : finished) scores.push_back(t.score);
      std::nth_element(scores.begin(), scores.begin() + (width - 1), scores.end(),
                       std::greater<>());
      if (scores[static_cast<std::size_t>(width - 1)] >= best_alive) break;
    }
  }

  if (finished.empty()) {
    Template t = best_partial ? best_partial->tmpl : Template{};
    t.constraints_satisfied = false;
    return {t};
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Template& a, const Template& b) { return a.score > b.score; });
  if (static_cast<int>(finished.size()) > width) finished.resize(static_cast<std::size_t>(width));
  return finished;
}

std::vector<Template> Captioner::beam(const ImageRecord& record, int width,
                                      int max_length) const {
  return search(record, {}, width, max_length);
}

Template Captioner::constrained(const ImageRecord& record,
                                const std::vector<std::set<std::string>>& required, int width,
                                int max_length) const {
  for (const auto& set : required) {
    if (set.empty()) throw std::invalid_argument("constrained decoding: empty required set");
  }
  return search(record, required, width, max_length).front();
}

Template Captioner::decode(const ImageRecord& record, const DecodeConfig& config) const {
  config.validate();
  const ImageRecord oracle =
      config.oracle_regions ? with_oracle_regions(record, decoder_.config().pooled) : ImageRecord{};
  const ImageRecord& input = config.oracle_regions ? oracle : record;
  switch (config.mode) {
    case DecodeMode::kGreedy: return greedy(input, config.max_length);
    case DecodeMode::kBeam: return beam(input, config.beam_width, config.max_length).front();
    case DecodeMode::kConstrained:
      return constrained(input, config.required, config.beam_width, config.max_length);
  }
  throw std::logic_error("decode: bad mode");
}

void substitute_novel_embeddings(ModelParams& params, const Vocabulary& vocabulary,
                                 const CategoryMap& categories,
                                 const std::map<std::string, std::string>& novel_to_standin) {
  auto& words = params[ParamId::kWordEmbedding].value;
  auto& cats = params[ParamId::kCategoryEmbedding].value;
  const std::size_t e = words.cols();
  const std::size_t g = cats.cols();
  for (const auto& [novel_name, standin_name] : novel_to_standin) {
    const CategoryId novel = categories.category_id(novel_name);
    const CategoryId standin = categories.category_id(standin_name);
    const int src = vocabulary.index(categories.canonical_word(standin));
    for (const auto& w : categories.entry(novel).finegrained) {
      for (const auto& form : {w, categories.pluralize(w)}) {
        if (!vocabulary.contains(form)) continue;
        const int dst = vocabulary.index(form);
        for (std::size_t j = 0; j < e; ++j) {
          words.at(static_cast<std::size_t>(dst), j) = words.at(static_cast<std::size_t>(src), j);
        }
      }
    }
    for (std::size_t j = 0; j < g; ++j) {
      cats.at(static_cast<std::size_t>(novel), j) = cats.at(static_cast<std::size_t>(standin), j);
    }
  }
}

nlohmann::json caption_to_json(const Template& tmpl, const ImageRecord& record,
                               const Vocabulary& vocabulary) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : tmpl.tokens) {
    if (t.slot) {
      tokens.push_back({{"slot", t.region}});
    } else {
      tokens.push_back(vocabulary.word(t.word));
    }
  }
  nlohmann::json groundings = nlohmann::json::array();
  for (const auto& g : tmpl.groundings) {
    const auto& box = record.proposals.at(static_cast<std::size_t>(g.region)).box;
    groundings.push_back({{"slot_pos", g.slot_pos},
                          {"region", g.region},
                          {"box", {box.x_min(), box.y_min(), box.x_max(), box.y_max()}},
                          {"word", g.word}});
  }
  nlohmann::json doc = {{"image_id", record.image_id},
                        {"caption", tmpl.caption()},
                        {"template", std::move(tokens)},
                        {"groundings", std::move(groundings)},
                        {"score", tmpl.score}};
  if (!tmpl.constraints_satisfied) doc["constraints_satisfied"] = false;
  return doc;
}

}  // namespace nbt
