// nbt: synthesize data, train, caption, build splits, evaluate, check gradients.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nbt/corpus.hpp"
#include "nbt/diagnostics.hpp"
#include "nbt/evaluation.hpp"
#include "nbt/inference.hpp"
#include "nbt/model.hpp"
#include "nbt/splits.hpp"
#include "nbt/synth.hpp"
#include "nbt/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string categories_path;

  json config;

  void load() {
    if (jobs < 1) throw UsageError("--jobs must be >= 1");
    if (config_path.empty()) {
      config = json::object();
      return;
    }
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config " + config_path);
    try {
      config = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config " + config_path + ": " + e.what());
    }
  }

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    return config.value("seed", std::uint64_t{42});
  }

  json section(const char* name) const { return config.value(name, json::object()); }

  nbt::CategoryMap categories() const {
    fs::path path = categories_path;
    if (path.empty()) {
      // Relative paths in a config file are taken from the file's directory.
      path = config.value("category_map", "");
      if (!path.empty() && path.is_relative()) path = fs::path(config_path).parent_path() / path;
    }
    if (path.empty()) throw UsageError("no category map: pass --categories or set category_map");
    if (!fs::exists(path)) throw UsageError("category map not found: " + path.string());
    return nbt::CategoryMap::load(path);
  }

  nbt::CorpusOptions corpus_options() const {
    const json c = section("corpus");
    nbt::CorpusOptions o;
    o.min_count = c.value("min_count", o.min_count);
    o.max_caption_tokens = c.value("max_caption_tokens", o.max_caption_tokens);
    o.grounding_iou = c.value("grounding_iou", o.grounding_iou);
    o.filter.nms_iou = c.value("nms_iou", o.filter.nms_iou);
    o.filter.class_iou = c.value("class_iou", o.filter.class_iou);
    o.filter.min_confidence = c.value("min_confidence", o.filter.min_confidence);
    return o;
  }
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--config", c.config_path, "JSON run configuration");
  cmd.add_option("--seed", c.seed, "Random seed (default: config seed, else 42)");
  cmd.add_option("--jobs", c.jobs, "Worker thread cap")->capture_default_str();
  cmd.add_option("--categories", c.categories_path, "Category map JSON (overrides config)");
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::vector<nbt::ImageRecord> select(const std::vector<nbt::ImageRecord>& records,
                                     const std::vector<std::string>& ids) {
  std::map<std::string, const nbt::ImageRecord*> by_id;
  for (const auto& r : records) by_id[r.image_id] = &r;
  std::vector<nbt::ImageRecord> out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("split names unknown image " + id);
    out.push_back(*it->second);
  }
  return out;
}

const std::vector<std::string>& split_subset(const nbt::SplitAssignment& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw UsageError("--subset must be train, val or test");
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  std::string spec_path, out;
  std::optional<int> num_images;
};

int run_synth(Common& c, const SynthArgs& a) {
  c.load();
  const auto cmap = c.categories();
  json spec_doc = c.section("synth");
  if (!a.spec_path.empty()) {
    require_file(a.spec_path, "synth spec");
    std::ifstream in(a.spec_path);
    spec_doc = json::parse(in);
  }
  auto spec = nbt::SynthSpec::from_json(spec_doc);
  spec.seed = c.seed ? *c.seed : spec_doc.value("seed", c.resolved_seed());
  if (a.num_images) spec.num_images = *a.num_images;
  std::vector<nbt::ImageRecord> records;
  try {
    records = nbt::synthesize(spec, cmap);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  nbt::write_dataset(a.out, records, cmap);
  spdlog::info("wrote {} synthetic images to {}", records.size(), a.out);
  return 0;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  std::string data, out, log, split_path, val_data, resume;
  std::optional<int> epochs;
  bool wall_time = false;
};

std::string csv_number(double v) { return fmt::format("{}", v); }

int run_train(Common& c, const TrainArgs& a) {
  c.load();
  require_file(a.data, "dataset");
  if (!a.resume.empty()) require_file(a.resume, "checkpoint");
  if (!a.split_path.empty()) require_file(a.split_path, "split file");
  if (!a.val_data.empty()) require_file(a.val_data, "validation dataset");
  const auto cmap = c.categories();
  const auto opts = c.corpus_options();
  const std::uint64_t seed = c.resolved_seed();

  auto records = nbt::read_dataset(a.data, cmap);
  std::vector<nbt::ImageRecord> train_records = records, val_records;
  if (!a.split_path.empty()) {
    const auto split = nbt::read_split(a.split_path);
    train_records = select(records, split.train);
    val_records = select(records, split.val);
  }
  if (!a.val_data.empty()) val_records = nbt::read_dataset(a.val_data, cmap);

  std::optional<nbt::Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = nbt::load_checkpoint(a.resume);
    if (resumed->categories.size() != cmap.size()) {
      throw UsageError("checkpoint categories do not match the category map");
    }
  }
  const auto train = nbt::Corpus::build(
      std::move(train_records), cmap, opts,
      resumed ? std::optional<nbt::Vocabulary>(nbt::Vocabulary(resumed->vocabulary)) : std::nullopt);
  const auto val = nbt::Corpus::build(std::move(val_records), cmap, opts, train.vocabulary);

  nbt::TrainConfig tc = nbt::TrainConfig::from_json(c.section("train"));
  tc.seed = seed;
  tc.jobs = c.jobs;
  if (a.epochs) tc.max_epochs = *a.epochs;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  nbt::ModelParams params;
  nbt::TrainingState state;
  if (resumed) {
    params = resumed->params;
    if (resumed->training.contains("state")) {
      state = nbt::TrainingState::from_json(resumed->training.at("state"), params.all());
    }
  } else {
    auto mc = nbt::ModelConfig::from_json(c.section("model"));
    mc.vocab = train.vocabulary.size();
    mc.finegrained_counts = cmap.finegrained_counts();
    params = nbt::ModelParams::initialize(mc, seed);
  }
  spdlog::info("training on {} captions ({} images), vocabulary {}, {} parameters",
               train.num_captions(), train.records.size(), train.vocabulary.size(),
               params.num_values());

  std::ofstream log;
  if (!a.log.empty()) {
    const bool append = resumed && fs::exists(a.log);
    log.open(a.log, append ? std::ios::app | std::ios::binary : std::ios::binary);
    if (!log) throw std::runtime_error("cannot write log " + a.log);
    if (!append) log << "epoch,lr,train_loss,val_loss,wall_seconds\n";
  }
  nbt::fit(params, train, val.num_captions() > 0 ? &val : nullptr, tc, state,
           [&](const nbt::EpochRecord& r) {
             spdlog::info("epoch {} lr {} train {:.6f}{}", r.epoch, r.learning_rate, r.train_loss,
                          r.val_loss ? fmt::format(" val {:.6f}", *r.val_loss) : "");
             if (log.is_open()) {
               log << r.epoch << ',' << csv_number(r.learning_rate) << ','
                   << csv_number(r.train_loss) << ','
                   << (r.val_loss ? csv_number(*r.val_loss) : "") << ','
                   << (a.wall_time ? csv_number(r.wall_seconds) : "") << '\n';
               log.flush();
             }
           });
  if (state.stopped_early) spdlog::info("early stop after epoch {}", state.epochs_completed - 1);

  nbt::Checkpoint ckpt;
  ckpt.params = params;
  ckpt.vocabulary = train.vocabulary.words();
  for (const auto& e : cmap.entries()) ckpt.categories.push_back(e.name);
  json train_cfg = tc.to_json();
  train_cfg.erase("jobs");
  ckpt.training = {{"state", state.to_json()}, {"train_config", train_cfg}};
  nbt::save_checkpoint(a.out, ckpt);
  spdlog::info("wrote checkpoint {}", a.out);
  return 0;
}

// ---- caption -----------------------------------------------------------

struct CaptionArgs {
  std::string checkpoint, data, out, split_path, subset = "test", constrain, mode;
  std::optional<int> beam;
  bool oracle = false;
};

int run_caption(Common& c, const CaptionArgs& a) {
  c.load();
  require_file(a.checkpoint, "checkpoint");
  require_file(a.data, "dataset");
  const auto cmap = c.categories();
  auto ckpt = nbt::load_checkpoint(a.checkpoint);
  std::vector<std::string> names;
  for (const auto& e : cmap.entries()) names.push_back(e.name);
  if (names != ckpt.categories) throw UsageError("checkpoint categories do not match the category map");
  const nbt::Vocabulary vocab(ckpt.vocabulary);

  auto records = nbt::read_dataset(a.data, cmap);
  if (!a.split_path.empty()) {
    require_file(a.split_path, "split file");
    records = select(records, split_subset(nbt::read_split(a.split_path), a.subset));
  }
  const auto corpus = nbt::Corpus::build(std::move(records), cmap, c.corpus_options(), vocab);

  const json subst = c.config.value("novel_substitution", json::object());
  if (!subst.empty()) {
    nbt::substitute_novel_embeddings(ckpt.params, vocab, cmap,
                                     subst.get<std::map<std::string, std::string>>());
  }

  const json d = c.section("decode");
  nbt::DecodeConfig dc;
  const std::string mode = !a.mode.empty() ? a.mode : d.value("mode", std::string("greedy"));
  if (mode == "greedy") dc.mode = nbt::DecodeMode::kGreedy;
  else if (mode == "beam") dc.mode = nbt::DecodeMode::kBeam;
  else if (mode == "constrained") dc.mode = nbt::DecodeMode::kConstrained;
  else throw UsageError("decode mode must be greedy, beam or constrained");
  dc.beam_width = d.value("beam_width", dc.beam_width);
  dc.max_length = d.value("max_length", dc.max_length);
  dc.oracle_regions = a.oracle || d.value("oracle_regions", false);
  if (a.beam) {
    dc.beam_width = *a.beam;
    if (a.mode.empty() && dc.mode == nbt::DecodeMode::kGreedy) dc.mode = nbt::DecodeMode::kBeam;
  }
  int top = 0;
  if (!a.constrain.empty()) {
    if (a.constrain != "T1" && a.constrain != "T2") throw UsageError("--constrain must be T1 or T2");
    top = a.constrain == "T1" ? 1 : 2;
    dc.mode = nbt::DecodeMode::kConstrained;
  } else if (dc.mode == nbt::DecodeMode::kConstrained) {
    top = d.value("top_concepts", 1);
  }
  try {
    dc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const nbt::Captioner captioner(ckpt.params, vocab, cmap);
  const std::size_t n = corpus.records.size();
  std::vector<json> lines(n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(c.jobs));
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += static_cast<std::size_t>(c.jobs)) {
        const auto& rec = corpus.records[i];
        nbt::DecodeConfig local = dc;
        const nbt::ImageRecord oracle =
            dc.oracle_regions ? nbt::with_oracle_regions(rec, ckpt.params.config().pooled) : rec;
        local.oracle_regions = false;
        if (top > 0) local.required = nbt::required_concepts(oracle, cmap, top);
        const auto tmpl = captioner.decode(oracle, local);
        lines[i] = nbt::caption_to_json(tmpl, oracle, vocab);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < static_cast<std::size_t>(c.jobs); ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  int unsatisfied = 0;
  auto emit = [&](std::ostream& os) {
    for (const auto& l : lines) {
      if (l.contains("constraints_satisfied")) ++unsatisfied;
      os << l.dump() << '\n';
    }
  };
  if (a.out.empty()) {
    emit(std::cout);
  } else {
    auto out = open_output(a.out);
    emit(out);
  }
  spdlog::info("captioned {} images", n);
  if (unsatisfied > 0) spdlog::warn("{} captions could not satisfy their constraints", unsatisfied);
  return 0;
}

// ---- split -------------------------------------------------------------

struct SplitArgs {
  std::string data, out, mode = "robust";
  std::optional<double> val_fraction, test_fraction;
  std::vector<std::string> exclude;
};

int run_split(Common& c, const SplitArgs& a) {
  c.load();
  require_file(a.data, "dataset");
  const auto cmap = c.categories();
  const json s = c.section("split");
  const double val_fraction = a.val_fraction.value_or(s.value("val_fraction", 0.1));
  const double test_fraction = a.test_fraction.value_or(s.value("test_fraction", 0.2));
  const auto records = nbt::read_dataset(a.data, cmap);
  const auto mentions = nbt::collect_mentions(records, cmap);

  nbt::SplitAssignment split;
  if (a.mode == "robust") {
    split = nbt::build_robust_split(mentions, cmap, val_fraction, c.resolved_seed());
    // Re-check both invariants against a fresh count.
    std::set<std::string> train_ids(split.train.begin(), split.train.end());
    std::vector<nbt::ImageMentions> train_images;
    for (const auto& m : mentions) {
      if (train_ids.contains(m.image_id)) train_images.push_back(m);
    }
    const auto all = nbt::cooccurrence(mentions, cmap.size());
    const auto kept = nbt::cooccurrence(train_images, cmap.size());
    for (std::size_t k = 0; k < cmap.size(); ++k) {
      const auto id = static_cast<nbt::CategoryId>(k);
      if (2 * kept.instances(id) < all.instances(id)) {
        throw std::runtime_error("split invariant violated: category " + cmap.entry(id).name +
                                 " keeps fewer than half its instances in train");
      }
    }
    for (const auto& p : split.meta.at("excluded_pairs")) {
      const auto x = cmap.category_id(p.at(0).get<std::string>());
      const auto y = cmap.category_id(p.at(1).get<std::string>());
      if (kept.pair(x, y) != 0) {
        throw std::runtime_error("split invariant violated: excluded pair co-occurs in train");
      }
    }
  } else if (a.mode == "exclusion") {
    std::vector<std::string> excluded = a.exclude;
    if (excluded.empty()) excluded = s.value("excluded", std::vector<std::string>{});
    if (excluded.empty()) {
      for (const auto& name : nbt::default_excluded_categories()) {
        if (cmap.find_category(name)) {
          excluded.push_back(name);
        } else {
          spdlog::warn("default excluded category '{}' is not in the category map", name);
        }
      }
    }
    for (const auto& name : excluded) {
      if (!cmap.find_category(name)) throw UsageError("unknown excluded category '" + name + "'");
    }
    split = nbt::build_exclusion_split(mentions, cmap, excluded, test_fraction, val_fraction,
                                       c.resolved_seed());
  } else {
    throw UsageError("--mode must be robust or exclusion");
  }
  nbt::write_split(a.out, split);
  spdlog::info("split {}: {} train, {} val, {} test", a.mode, split.train.size(), split.val.size(),
               split.test.size());
  return 0;
}

// ---- eval --------------------------------------------------------------

struct EvalArgs {
  std::string data, captions, split_path, out;
  bool json_output = false;
};

int run_eval(Common& c, const EvalArgs& a) {
  c.load();
  require_file(a.data, "dataset");
  require_file(a.captions, "captions file");
  const auto cmap = c.categories();
  const auto records = nbt::read_dataset(a.data, cmap);

  std::map<std::string, std::string> captions;
  std::map<std::string, std::vector<nbt::GroundedSlot>> slots;
  bool any_groundings = false;
  std::ifstream in(a.captions);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json doc = json::parse(line);
      const auto& id_node = doc.at("image_id");
      const std::string id = id_node.is_string() ? id_node.get<std::string>() : id_node.dump();
      captions[id] = doc.at("caption").get<std::string>();
      if (doc.contains("groundings")) {
        any_groundings = true;
        auto& list = slots[id];
        for (const auto& g : doc.at("groundings")) {
          const auto b = g.at("box").get<std::vector<double>>();
          if (b.size() != 4) throw std::invalid_argument("grounding box needs 4 numbers");
          list.push_back({nbt::BoundingBox(b[0], b[1], b[2], b[3]), g.at("word").get<std::string>()});
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(a.captions + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }

  std::optional<nbt::SplitAssignment> split;
  if (!a.split_path.empty()) {
    require_file(a.split_path, "split file");
    split = nbt::read_split(a.split_path);
  }
  const auto report = nbt::evaluate(captions, records, cmap, split, any_groundings ? &slots : nullptr);
  if (a.json_output) {
    std::cout << report.to_json().dump(2) << '\n';
  } else {
    std::cout << report.to_table();
  }
  if (!a.out.empty()) {
    auto out = open_output(a.out);
    out << report.to_json().dump(2) << '\n';
  }
  return 0;
}

// ---- gradcheck ---------------------------------------------------------

struct GradArgs {
  nbt::GradCheckProblem problem;
  double tolerance = 1e-3;
};

int run_gradcheck(Common& c, GradArgs a) {
  c.load();
  a.problem.seed = c.resolved_seed();
  const auto report = nbt::check_model_gradients(a.problem);
  const bool ok = report.max_relative_error < a.tolerance;
  const json doc = {{"max_relative_error", report.max_relative_error},
                    {"worst_parameter", report.worst_parameter},
                    {"worst_index", report.worst_index},
                    {"analytic", report.analytic},
                    {"numeric", report.numeric},
                    {"checked", report.checked},
                    {"tolerance", a.tolerance},
                    {"pass", ok}};
  std::cout << doc.dump(2) << '\n';
  if (!ok) spdlog::error("gradient check failed: {} >= {}", report.max_relative_error, a.tolerance);
  return ok ? 0 : kExitFailure;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("nbt");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("NBT_LOG")) {
    const std::string level(env);
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring NBT_LOG={} (expected error, info or debug)", level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Grounded template captioning: synthesize, train, caption, split, evaluate."};
  app.require_subcommand(1);

  Common common;

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic JSONL corpus");
  add_common(*synth_cmd, common);
  synth_cmd->add_option("--spec", synth.spec_path, "Synthesis spec JSON (default: config synth section)");
  synth_cmd->add_option("--num-images", synth.num_images, "Override the image count");
  synth_cmd->add_option("--out", synth.out, "Output JSONL")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(*train_cmd, common);
  train_cmd->add_option("--data", train.data, "Dataset JSONL")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint to write")->required();
  train_cmd->add_option("--log", train.log, "CSV training log");
  train_cmd->add_option("--split", train.split_path, "Split file; trains on train, validates on val");
  train_cmd->add_option("--val-data", train.val_data, "Separate validation JSONL");
  train_cmd->add_option("--epochs", train.epochs, "Total epochs (overrides config)");
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");
  train_cmd->add_flag("--wall-time", train.wall_time, "Record per-epoch wall time in the log");

  CaptionArgs caption;
  auto* caption_cmd = app.add_subcommand("caption", "Decode captions for a dataset");
  add_common(*caption_cmd, common);
  caption_cmd->add_option("--checkpoint", caption.checkpoint, "Trained checkpoint")->required();
  caption_cmd->add_option("--data", caption.data, "Dataset JSONL")->required();
  caption_cmd->add_option("--out", caption.out, "Caption JSONL (default: stdout)");
  caption_cmd->add_option("--split", caption.split_path, "Split file to select images from");
  caption_cmd->add_option("--subset", caption.subset, "Split subset: train, val or test")->capture_default_str();
  caption_cmd->add_option("--decode", caption.mode, "greedy, beam or constrained");
  caption_cmd->add_option("--beam", caption.beam, "Beam width (implies beam search)");
  caption_cmd->add_option("--constrain", caption.constrain, "T1 or T2: require the top detected concepts");
  caption_cmd->add_flag("--oracle-regions", caption.oracle, "Use ground-truth boxes as proposals");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Build a robust or novel-object split");
  add_common(*split_cmd, common);
  split_cmd->add_option("--data", split.data, "Dataset JSONL")->required();
  split_cmd->add_option("--out", split.out, "Split JSON")->required();
  split_cmd->add_option("--mode", split.mode, "robust or exclusion")->capture_default_str();
  split_cmd->add_option("--val-fraction", split.val_fraction, "Validation fraction");
  split_cmd->add_option("--test-fraction", split.test_fraction, "In-domain test fraction (exclusion)");
  split_cmd->add_option("--exclude", split.exclude, "Excluded categories (exclusion)")->delimiter(',');

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score captions against references");
  add_common(*eval_cmd, common);
  eval_cmd->add_option("--data", eval.data, "Dataset JSONL with references")->required();
  eval_cmd->add_option("--captions", eval.captions, "Caption JSONL")->required();
  eval_cmd->add_option("--split", eval.split_path, "Split file (test images are scored)");
  eval_cmd->add_option("--out", eval.out, "Write the JSON report here");
  eval_cmd->add_flag("--json", eval.json_output, "Print JSON instead of a table");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  add_common(*grad_cmd, common);
  grad_cmd->add_option("--hidden", grad.problem.hidden, "Hidden size")->capture_default_str();
  grad_cmd->add_option("--regions", grad.problem.regions, "Region count")->capture_default_str();
  grad_cmd->add_option("--vocab", grad.problem.vocab, "Vocabulary size")->capture_default_str();
  grad_cmd->add_option("--eps", grad.problem.eps, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", grad.tolerance, "Pass threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) return run_synth(common, synth);
    if (*train_cmd) return run_train(common, train);
    if (*caption_cmd) return run_caption(common, caption);
    if (*split_cmd) return run_split(common, split);
    if (*eval_cmd) return run_eval(common, eval);
    if (*grad_cmd) return run_gradcheck(common, grad);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
