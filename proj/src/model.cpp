#include "nbt/model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "nbt/rng.hpp"

namespace nbt {

int ModelConfig::total_finegrained() const {
  return std::accumulate(finegrained_counts.begin(), finegrained_counts.end(), 0);
}

int ModelConfig::max_finegrained() const {
  return finegrained_counts.empty()
             ? 0
             : *std::max_element(finegrained_counts.begin(), finegrained_counts.end());
}

void ModelConfig::validate() const {
  const std::pair<const char*, int> fields[] = {
      {"hidden", hidden},       {"attention", attention}, {"pooled", pooled},
      {"location", location},   {"category_embed", category_embed},
      {"vocab", vocab},         {"word_embed", word_embed}, {"grid", grid},
      {"fine_embed", fine_embed}};
  for (const auto& [name, value] : fields) {
    if (value <= 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
  }
  if (finegrained_counts.empty()) {
    throw std::invalid_argument("model config: at least one category is required");
  }
  for (int k : finegrained_counts) {
    if (k < 1) throw std::invalid_argument("model config: every category needs k >= 1");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"hidden", hidden},
          {"attention", attention},
          {"pooled", pooled},
          {"location", location},
          {"category_embed", category_embed},
          {"vocab", vocab},
          {"word_embed", word_embed},
          {"grid", grid},
          {"fine_embed", fine_embed},
          {"finegrained_counts", finegrained_counts}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  c.hidden = doc.value("hidden", c.hidden);
  c.attention = doc.value("attention", c.attention);
  c.pooled = doc.value("pooled", c.pooled);
  c.location = doc.value("location", c.location);
  c.category_embed = doc.value("category_embed", c.category_embed);
  c.vocab = doc.value("vocab", c.vocab);
  c.word_embed = doc.value("word_embed", c.word_embed);
  c.grid = doc.value("grid", c.grid);
  c.fine_embed = doc.value("fine_embed", c.fine_embed);
  c.finegrained_counts = doc.value("finegrained_counts", std::vector<int>{});
  return c;
}

std::string_view param_name(ParamId id) {
  static constexpr std::array<std::string_view, kNumParams> names = {
      "word_embedding",      "lstm1.weight",       "lstm1.bias",
      "lstm2.weight",        "lstm2.bias",         "grid_attention.Wv",
      "grid_attention.Wg",   "grid_attention.w",   "region_attention.Wv",
      "region_attention.Wg", "region_attention.w", "pointer.Wv",
      "pointer.Wz",          "pointer.wh",         "sentinel.Wx",
      "sentinel.Wh",         "sentinel.Ws",        "textual.Wq",
      "location.weight",     "location.bias",      "category_embedding",
      "plural.hidden.weight", "plural.hidden.bias", "plural.Wb",
      "fine.hidden.weight",  "fine.hidden.bias",   "fine.Wg",
      "fine.U",
  };
  return names.at(static_cast<std::size_t>(id));
}

namespace {

std::vector<std::size_t> param_shape(ParamId id, const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.hidden);
  const auto m = static_cast<std::size_t>(c.attention);
  const auto dp = static_cast<std::size_t>(c.pooled);
  const auto dr = static_cast<std::size_t>(c.region_dim());
  const auto e = static_cast<std::size_t>(c.word_embed);
  const auto v = static_cast<std::size_t>(c.vocab);
  const auto h = static_cast<std::size_t>(c.refine_hidden());
  switch (id) {
    case ParamId::kWordEmbedding: return {v, e};
    case ParamId::kLstm1Weight: return {4 * d, e + dp + d + d};
    case ParamId::kLstm1Bias: return {4 * d};
    case ParamId::kLstm2Weight: return {4 * d, dp + dr + d + d};
    case ParamId::kLstm2Bias: return {4 * d};
    case ParamId::kGridAttnWv: return {m, dp};
    case ParamId::kGridAttnWg: return {m, d};
    case ParamId::kGridAttnW: return {m};
    case ParamId::kRegionAttnWv: return {m, dr};
    case ParamId::kRegionAttnWg: return {m, d};
    case ParamId::kRegionAttnW: return {m};
    case ParamId::kPointerWv: return {m, dr};
    case ParamId::kPointerWz: return {m, d};
    case ParamId::kPointerWh: return {m};
    case ParamId::kSentinelWx: return {d, e};
    case ParamId::kSentinelWh: return {d, d};
    case ParamId::kSentinelWs: return {m, d};
    case ParamId::kTextualWq: return {v, d};
    case ParamId::kLocationWeight: return {static_cast<std::size_t>(c.location), 4};
    case ParamId::kLocationBias: return {static_cast<std::size_t>(c.location)};
    case ParamId::kCategoryEmbedding:
      return {static_cast<std::size_t>(c.num_categories()),
              static_cast<std::size_t>(c.category_embed)};
    case ParamId::kPluralHiddenWeight: return {h, dr + d};
    case ParamId::kPluralHiddenBias: return {h};
    case ParamId::kPluralWb: return {2, h};
    case ParamId::kFineHiddenWeight: return {h, dr + d};
    case ParamId::kFineHiddenBias: return {h};
    case ParamId::kFineWg: return {static_cast<std::size_t>(c.fine_embed), h};
    case ParamId::kFineU:
      return {static_cast<std::size_t>(c.total_finegrained()),
              static_cast<std::size_t>(c.fine_embed)};
    case ParamId::kCount: break;
  }
  throw std::logic_error("param_shape: bad id");
}

bool is_bias(ParamId id) {
  return id == ParamId::kLstm1Bias || id == ParamId::kLstm2Bias ||
         id == ParamId::kLocationBias || id == ParamId::kPluralHiddenBias ||
         id == ParamId::kFineHiddenBias;
}

}  // namespace

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  params_.reserve(kNumParams);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto id = static_cast<ParamId>(i);
    params_.push_back({std::string(param_name(id)), num::Tensor(param_shape(id, config_)), i});
  }
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams mp(config);
  Rng rng(seed);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto id = static_cast<ParamId>(i);
    if (is_bias(id)) continue;
    for (double& v : mp.params_[i].value.data()) v = rng.uniform(-0.1, 0.1);
  }
  const auto d = static_cast<std::size_t>(config.hidden);
  for (ParamId bias : {ParamId::kLstm1Bias, ParamId::kLstm2Bias}) {
    auto& b = mp[bias].value;
    for (std::size_t j = d; j < 2 * d; ++j) b[j] = 1.0;  // gate order: i, f, o, g
  }
  return mp;
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config_ == other.config_) || params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].value.shape() != other.params_[i].value.shape() ||
        params_[i].value.values() != other.params_[i].value.values()) {
      return false;
    }
  }
  return true;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : ckpt.params.all()) {
    params[p.name] = {{"shape", p.value.shape()}, {"values", p.value.values()}};
  }
  nlohmann::json doc = {{"format", "nbt-checkpoint"},
                        {"version", 1},
                        {"config", ckpt.params.config().to_json()},
                        {"vocabulary", ckpt.vocabulary},
                        {"categories", ckpt.categories},
                        {"params", std::move(params)}};
  if (!ckpt.training.is_null()) doc["training"] = ckpt.training;
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "nbt-checkpoint") {
    throw std::invalid_argument("not an nbt checkpoint");
  }
  Checkpoint ckpt;
  ckpt.params = ModelParams(ModelConfig::from_json(doc.at("config")));
  const auto& params = doc.at("params");
  for (auto& p : ckpt.params.all()) {
    if (!params.contains(p.name)) throw std::invalid_argument("checkpoint lacks parameter " + p.name);
    const auto& entry = params.at(p.name);
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != p.value.shape()) {
      throw std::invalid_argument("checkpoint parameter " + p.name + " has shape mismatch");
    }
    p.value = num::Tensor(std::move(shape), entry.at("values").get<std::vector<double>>());
  }
  ckpt.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
  ckpt.categories = doc.at("categories").get<std::vector<std::string>>();
  if (doc.contains("training")) ckpt.training = doc.at("training");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return checkpoint_from_json(nlohmann::json::parse(in));
}

}  // namespace nbt
