#include "nbt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "nbt/rng.hpp"

namespace nbt {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (!(anneal_factor > 0.0 && anneal_factor <= 1.0)) {
    throw std::invalid_argument("train config: anneal_factor must be in (0, 1]");
  }
  if (anneal_every < 1) throw std::invalid_argument("train config: anneal_every must be >= 1");
  if (max_epochs < 0) throw std::invalid_argument("train config: max_epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (patience < 0) throw std::invalid_argument("train config: patience must be >= 0");
  if (jobs < 1) throw std::invalid_argument("train config: jobs must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"anneal_factor", anneal_factor},
          {"anneal_every", anneal_every},   {"max_epochs", max_epochs},
          {"batch_size", batch_size},       {"patience", patience},
          {"clip_norm", clip_norm},         {"beta1", beta1},
          {"beta2", beta2},                 {"epsilon", epsilon},
          {"seed", seed},                   {"jobs", jobs}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.anneal_factor = doc.value("anneal_factor", c.anneal_factor);
  c.anneal_every = doc.value("anneal_every", c.anneal_every);
  c.max_epochs = doc.value("max_epochs", c.max_epochs);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.patience = doc.value("patience", c.patience);
  c.clip_norm = doc.value("clip_norm", c.clip_norm);
  c.beta1 = doc.value("beta1", c.beta1);
  c.beta2 = doc.value("beta2", c.beta2);
  c.epsilon = doc.value("epsilon", c.epsilon);
  c.seed = doc.value("seed", c.seed);
  c.jobs = doc.value("jobs", c.jobs);
  return c;
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  return config.learning_rate * std::pow(config.anneal_factor, epoch / config.anneal_every);
}

std::vector<TokenTarget> make_targets(const AnnotatedCaption& caption, const Vocabulary& vocab,
                                      const CategoryMap& categories) {
  std::vector<TokenTarget> out;
  out.reserve(caption.size() + 1);
  for (const auto& tok : caption) {
    TokenTarget t;
    if (tok.is_visual()) {
      t.visual = true;
      t.category = tok.category;
      t.plurality = tok.plurality;
      t.finegrained = tok.finegrained;
      t.regions = tok.grounding_regions;
      t.word = vocab.index(tok.surface);
      t.feedback_word = vocab.index(categories.canonical_word(tok.category));
    } else {
      t.word = vocab.index(tok.surface);
      t.feedback_word = t.word;
    }
    out.push_back(std::move(t));
  }
  TokenTarget eos;
  eos.word = vocab.eos();
  eos.feedback_word = vocab.eos();
  out.push_back(eos);
  return out;
}

namespace {

double clamped_log(double p) { return std::log(std::max(p, num::Graph::kLogClamp)); }

void check_visual_target(const TokenTarget& t, std::size_t num_regions) {
  if (t.regions.empty()) throw std::invalid_argument("visual target without grounding regions");
  for (int r : t.regions) {
    if (r < 0 || static_cast<std::size_t>(r) >= num_regions) {
      throw std::invalid_argument("visual target references region " + std::to_string(r) +
                                  " of " + std::to_string(num_regions));
    }
  }
}

}  // namespace

int conditioning_region(std::span<const double> region_dist, const TokenTarget& target) {
  int best = target.regions.front();
  for (int r : target.regions) {
    const auto ri = static_cast<std::size_t>(r);
    const auto bi = static_cast<std::size_t>(best);
    if (region_dist[ri] > region_dist[bi] || (region_dist[ri] == region_dist[bi] && r < best)) {
      best = r;
    }
  }
  return best;
}

double token_loss(const StepOutput& step, const TokenTarget& target) {
  if (!target.visual) {
    return -(clamped_log(step.textual_dist.at(static_cast<std::size_t>(target.word))) +
             clamped_log(step.sentinel()));
  }
  check_visual_target(target, step.num_regions());
  const auto r = static_cast<std::size_t>(conditioning_region(step.region_dist, target));
  double avg = 0.0;
  for (int i : target.regions) avg += step.region_dist[static_cast<std::size_t>(i)];
  avg /= static_cast<double>(target.regions.size());
  const double pb = step.plurality.at(r)[static_cast<std::size_t>(target.plurality)];
  const double pg = step.finegrained.at(r).at(static_cast<std::size_t>(target.finegrained));
  return -(clamped_log(pb) + clamped_log(pg) + clamped_log(avg));
}

num::Var build_sequence_loss(num::Graph& g, const Decoder& decoder, const ImageRecord& record,
                             std::span<const TokenTarget> targets, LossBreakdown* parts) {
  if (targets.empty()) throw std::invalid_argument("sequence_loss: empty target sequence");
  const ImageInputs image = decoder.encode(g, record);
  StateVars state = decoder.initial_state(g);
  const std::size_t n = image.regions.size();

  LossBreakdown out;
  std::vector<Var> terms;
  terms.reserve(targets.size());
  int input = 0;  // <bos>
  for (const auto& target : targets) {
    const StepVars sv = decoder.step(g, state, decoder.embed(g, input), image);
    if (!target.visual) {
      const Var word = g.log(g.slice(sv.textual_dist, static_cast<std::size_t>(target.word), 1));
      const Var sentinel = g.log(g.slice(sv.region_dist, n, 1));
      out.textual -= g.scalar(word);
      out.pointer -= g.scalar(sentinel);
      terms.push_back(g.add(word, sentinel));
    } else {
      check_visual_target(target, n);
      const auto& dist = g.value(sv.region_dist).values();
      const auto r = static_cast<std::size_t>(conditioning_region(dist, target));
      const RefineVars ref = decoder.refine(g, image.regions[r], sv.state.h2, target.category);
      const Var lb =
          g.log(g.slice(ref.plurality, static_cast<std::size_t>(target.plurality), 1));
      const Var lg =
          g.log(g.slice(ref.finegrained, static_cast<std::size_t>(target.finegrained), 1));
      std::vector<Var> picked;
      for (int i : target.regions) {
        picked.push_back(g.slice(sv.region_dist, static_cast<std::size_t>(i), 1));
      }
      const Var avg = g.scale(g.sum(g.concat(picked)),
                              1.0 / static_cast<double>(target.regions.size()));
      const Var la = g.log(avg);
      out.refinement -= g.scalar(lb) + g.scalar(lg);
      out.pointer -= g.scalar(la);
      terms.push_back(g.add(g.add(lb, lg), la));
    }
    state = sv.state;
    input = target.feedback_word;
  }

  const double count = static_cast<double>(targets.size());
  const Var loss = g.scale(g.sum(g.concat(terms)), -1.0 / count);
  if (parts) {
    out.tokens = targets.size();
    out.total = g.scalar(loss);
    out.textual /= count;
    out.pointer /= count;
    out.refinement /= count;
    *parts = out;
  }
  return loss;
}

LossBreakdown sequence_loss(const Decoder& decoder, const ImageRecord& record,
                            std::span<const TokenTarget> targets, num::Gradients* grads) {
  Graph g;
  LossBreakdown out;
  const Var loss = build_sequence_loss(g, decoder, record, targets, &out);
  if (grads) g.backward(loss, *grads);
  return out;
}

Adam::Adam(std::span<const num::Parameter> params, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(params), v_(params) {}

void Adam::step(std::span<num::Parameter> params, const num::Gradients& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& p : params) {
    auto& m = m_[p.id];
    auto& v = v_[p.id];
    const auto& g = grads[p.id];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon_);
    }
  }
}

nlohmann::json Adam::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m.push_back(m_[i].values());
    v.push_back(v_[i].values());
  }
  return {{"beta1", beta1_}, {"beta2", beta2_}, {"epsilon", epsilon_},
          {"steps", steps_}, {"m", std::move(m)}, {"v", std::move(v)}};
}

Adam Adam::from_json(const nlohmann::json& doc, std::span<const num::Parameter> params) {
  Adam a(params, doc.at("beta1").get<double>(), doc.at("beta2").get<double>(),
         doc.at("epsilon").get<double>());
  a.steps_ = doc.at("steps").get<long>();
  const auto& m = doc.at("m");
  const auto& v = doc.at("v");
  if (m.size() != a.m_.size() || v.size() != a.v_.size()) {
    throw std::invalid_argument("optimizer state does not match the model parameters");
  }
  for (std::size_t i = 0; i < a.m_.size(); ++i) {
    a.m_[i].values() = m[i].get<std::vector<double>>();
    a.v_[i].values() = v[i].get<std::vector<double>>();
    if (a.m_[i].values().size() != params[i].value.size() ||
        a.v_[i].values().size() != params[i].value.size()) {
      throw std::invalid_argument("optimizer state has wrong tensor sizes");
    }
  }
  return a;
}

nlohmann::json TrainingState::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : history) {
    nlohmann::json row = {{"epoch", e.epoch},
                          {"learning_rate", e.learning_rate},
                          {"train_loss", e.train_loss}};
    row["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
    hist.push_back(std::move(row));
  }
  nlohmann::json doc = {{"epochs_completed", epochs_completed},
                        {"history", std::move(hist)},
                        {"epochs_since_best", epochs_since_best},
                        {"stopped_early", stopped_early}};
  doc["best_val"] = std::isfinite(best_val) ? nlohmann::json(best_val) : nlohmann::json(nullptr);
  if (optimizer) doc["optimizer"] = optimizer->to_json();
  return doc;
}

TrainingState TrainingState::from_json(const nlohmann::json& doc,
                                       std::span<const num::Parameter> params) {
  TrainingState s;
  s.epochs_completed = doc.value("epochs_completed", 0);
  for (const auto& row : doc.value("history", nlohmann::json::array())) {
    EpochRecord e;
    e.epoch = row.at("epoch").get<int>();
    e.learning_rate = row.at("learning_rate").get<double>();
    e.train_loss = row.at("train_loss").get<double>();
    if (!row.at("val_loss").is_null()) e.val_loss = row.at("val_loss").get<double>();
    s.history.push_back(e);
  }
  s.epochs_since_best = doc.value("epochs_since_best", 0);
  s.stopped_early = doc.value("stopped_early", false);
  if (doc.contains("best_val") && !doc.at("best_val").is_null()) {
    s.best_val = doc.at("best_val").get<double>();
  }
  if (doc.contains("optimizer")) s.optimizer = Adam::from_json(doc.at("optimizer"), params);
  return s;
}

namespace {

struct Example {
  std::size_t record;
  std::size_t caption;
};

std::vector<Example> enumerate_examples(const Corpus& corpus) {
  std::vector<Example> out;
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    for (std::size_t c = 0; c < corpus.captions[r].size(); ++c) out.push_back({r, c});
  }
  return out;
}

double example_loss(const Decoder& decoder, const Corpus& corpus, const Example& ex,
                    num::Gradients* grads) {
  const auto& record = corpus.records[ex.record];
  const auto targets =
      make_targets(corpus.captions[ex.record][ex.caption], corpus.vocabulary, corpus.categories);
  double loss = 0.0;
  try {
    loss = sequence_loss(decoder, record, targets, grads).total;
  } catch (const std::domain_error& e) {
    throw TrainingError("non-finite loss on record '" + record.image_id + "' caption " +
                        std::to_string(ex.caption) + ": " + e.what());
  }
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite loss on record '" + record.image_id + "' caption " +
                        std::to_string(ex.caption));
  }
  return loss;
}

// Runs `work(i)` for i in [0, n) over `jobs` threads; the first exception is
// rethrown after all threads join.
template <typename F>
void parallel_for(std::size_t n, int jobs, F work) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

double evaluate_loss(const ModelParams& params, const Corpus& corpus) {
  const Decoder decoder(params);
  const auto examples = enumerate_examples(corpus);
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) total += example_loss(decoder, corpus, ex, nullptr);
  return total / static_cast<double>(examples.size());
}

void fit(ModelParams& params, const Corpus& train, const Corpus* validation,
         const TrainConfig& config, TrainingState& state, const EpochCallback& on_epoch) {
  config.validate();
  if (!state.optimizer) state.optimizer = Adam(params.all(), config.beta1, config.beta2, config.epsilon);
  const auto examples = enumerate_examples(train);
  if (examples.empty() && config.max_epochs > state.epochs_completed) {
    throw std::invalid_argument("fit: training corpus has no captions");
  }
  const bool has_val = validation != nullptr && validation->num_captions() > 0;
  const Decoder decoder(params);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  std::vector<num::Gradients> per_example;
  std::vector<double> losses;
  num::Gradients total(params.all());

  while (state.epochs_completed < config.max_epochs && !state.stopped_early) {
    const auto started = std::chrono::steady_clock::now();
    const int epoch = state.epochs_completed;
    const double lr = learning_rate_at(config, epoch);

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      if (per_example.size() < count) per_example.resize(count, num::Gradients(params.all()));
      losses.assign(count, 0.0);
      parallel_for(count, config.jobs, [&](std::size_t i) {
        per_example[i].zero();
        losses[i] = example_loss(decoder, train, examples[order[start + i]], &per_example[i]);
      });
      total.zero();
      for (std::size_t i = 0; i < count; ++i) {
        total.add(per_example[i]);
        epoch_loss += losses[i];
      }
      total.scale(1.0 / static_cast<double>(count));
      if (config.clip_norm > 0.0) {
        const double norm = total.l2_norm();
        if (norm > config.clip_norm) total.scale(config.clip_norm / norm);
      }
      state.optimizer->step(params.all(), total, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = examples.empty() ? 0.0 : epoch_loss / static_cast<double>(examples.size());
    if (has_val) rec.val_loss = evaluate_loss(params, *validation);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    state.epochs_completed = epoch + 1;
    state.history.push_back(rec);
    if (rec.val_loss) {
      if (*rec.val_loss < state.best_val) {
        state.best_val = *rec.val_loss;
        state.epochs_since_best = 0;
      } else {
        ++state.epochs_since_best;
        if (config.patience > 0 && state.epochs_since_best >= config.patience) {
          state.stopped_early = true;
        }
      }
    }
    if (on_epoch) on_epoch(rec);
  }
}

}  // namespace nbt
