#include "nbt/corpus.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nbt {

std::vector<AnnotatedToken> extract_visual_words(std::span<const std::string> tokens,
                                                 const CategoryMap& categories) {
  std::vector<AnnotatedToken> out;
  out.reserve(tokens.size());
  for (const auto& surface : tokens) {
    AnnotatedToken tok;
    tok.surface = surface;
    const std::string base = categories.lemma(surface);
    if (auto match = categories.find_finegrained(base)) {
      tok.kind = TokenKind::kVisual;
      tok.category = match->category;
      tok.finegrained = match->index;
      tok.plurality = (base != surface) ? Plurality::kPlural : Plurality::kSingular;
    }
    out.push_back(std::move(tok));
  }
  return out;
}

AnnotatedToken match_grounding_regions(AnnotatedToken token,
                                       std::span<const RegionProposal> proposals,
                                       std::span<const GroundTruthBox> gt_boxes,
                                       double threshold) {
  if (!token.is_visual()) return token;
  token.grounding_regions.clear();
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& prop = proposals[i];
    if (prop.category != token.category) continue;
    for (const auto& gt : gt_boxes) {
      if (gt.category == token.category && iou(prop.box, gt.box) >= threshold) {
        token.grounding_regions.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  if (token.grounding_regions.empty()) {
    token.kind = TokenKind::kTextual;
    token.category = -1;
    token.finegrained = -1;
    token.plurality = Plurality::kSingular;
  }
  return token;
}

AnnotatedToken match_grounding_regions(AnnotatedToken token, const ImageRecord& record,
                                       double threshold) {
  return match_grounding_regions(std::move(token), record.proposals, record.gt_boxes, threshold);
}

std::set<CategoryId> mentioned_categories(std::string_view caption,
                                          const CategoryMap& categories) {
  std::set<CategoryId> out;
  const auto tokens = tokenize(caption);
  for (const auto& tok : extract_visual_words(tokens, categories)) {
    if (tok.is_visual()) out.insert(tok.category);
  }
  return out;
}

std::set<CategoryId> mentioned_categories(const ImageRecord& record,
                                          const CategoryMap& categories) {
  std::set<CategoryId> out;
  for (const auto& caption : record.captions) {
    out.merge(mentioned_categories(caption, categories));
  }
  return out;
}

AnnotatedCaption annotate_caption(std::string_view caption, const ImageRecord& record,
                                  const CategoryMap& categories, const CorpusOptions& options) {
  auto tokens = tokenize(caption);
  if (tokens.size() > static_cast<std::size_t>(options.max_caption_tokens)) {
    tokens.resize(static_cast<std::size_t>(options.max_caption_tokens));
  }
  auto annotated = extract_visual_words(tokens, categories);
  for (auto& tok : annotated) {
    tok = match_grounding_regions(std::move(tok), record, options.grounding_iou);
  }
  return annotated;
}

Corpus Corpus::build(std::vector<ImageRecord> records, CategoryMap categories,
                     const CorpusOptions& options, std::optional<Vocabulary> vocabulary) {
  Corpus corpus;
  corpus.options = options;
  corpus.categories = std::move(categories);
  corpus.records = std::move(records);
  if (options.apply_filter) {
    for (auto& rec : corpus.records) rec.proposals = filter_proposals(rec.proposals, options.filter);
  }

  corpus.captions.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) {
    std::vector<AnnotatedCaption> caps;
    caps.reserve(rec.captions.size());
    for (const auto& c : rec.captions) {
      caps.push_back(annotate_caption(c, rec, corpus.categories, options));
    }
    corpus.captions.push_back(std::move(caps));
  }

  if (vocabulary) {
    corpus.vocabulary = std::move(*vocabulary);
  } else {
    std::vector<std::vector<std::string>> tokenized;
    for (const auto& caps : corpus.captions) {
      for (const auto& cap : caps) {
        std::vector<std::string> words;
        words.reserve(cap.size());
        for (const auto& tok : cap) words.push_back(tok.surface);
        tokenized.push_back(std::move(words));
      }
    }
    std::vector<std::string> forced;
    for (std::size_t c = 0; c < corpus.categories.size(); ++c) {
      forced.push_back(corpus.categories.canonical_word(static_cast<CategoryId>(c)));
    }
    corpus.vocabulary = Vocabulary::build(tokenized, options.min_count, forced);
  }
  return corpus;
}

std::size_t Corpus::num_captions() const {
  std::size_t n = 0;
  for (const auto& caps : captions) n += caps.size();
  return n;
}

std::optional<std::size_t> Corpus::find(std::string_view image_id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].image_id == image_id) return i;
  }
  return std::nullopt;
}

namespace {

BoundingBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x1,y1,x2,y2]");
  return BoundingBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                     j[3].get<double>());
}

nlohmann::json box_to_json(const BoundingBox& b) {
  return nlohmann::json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

}  // namespace

ImageRecord record_from_json(const nlohmann::json& doc, const CategoryMap& categories) {
  ImageRecord rec;
  const auto& id = doc.at("image_id");
  rec.image_id = id.is_string() ? id.get<std::string>() : id.dump();
  rec.width = doc.at("width").get<double>();
  rec.height = doc.at("height").get<double>();
  if (!(rec.width > 0.0) || !(rec.height > 0.0)) {
    throw std::invalid_argument("image " + rec.image_id + ": width and height must be positive");
  }
  auto check_box = [&](const BoundingBox& b) {
    if (!b.fits_in(rec.width, rec.height)) {
      throw std::invalid_argument("image " + rec.image_id + ": box outside image bounds");
    }
  };
  for (const auto& p : doc.value("proposals", nlohmann::json::array())) {
    RegionProposal prop{.box = box_from_json(p.at("box")), .feature = {}};
    check_box(prop.box);
    prop.category = categories.category_id(p.at("category").get<std::string>());
    prop.confidence = p.value("confidence", 1.0);
    if (prop.confidence < 0.0 || prop.confidence > 1.0) {
      throw std::invalid_argument("image " + rec.image_id + ": confidence outside [0,1]");
    }
    prop.feature = p.value("feature", std::vector<double>{});
    prop.is_ground_truth = p.value("is_ground_truth", false);
    rec.proposals.push_back(std::move(prop));
  }
  for (const auto& g : doc.value("gt_boxes", nlohmann::json::array())) {
    GroundTruthBox gt{box_from_json(g.at("box")),
                      categories.category_id(g.at("category").get<std::string>())};
    check_box(gt.box);
    rec.gt_boxes.push_back(std::move(gt));
  }
  if (doc.contains("grid_features") && !doc.at("grid_features").is_null()) {
    rec.grid_features = doc.at("grid_features").get<FeatureMatrix>();
  }
  rec.captions = doc.value("captions", std::vector<std::string>{});
  return rec;
}

nlohmann::json record_to_json(const ImageRecord& rec, const CategoryMap& categories) {
  nlohmann::json doc;
  doc["image_id"] = rec.image_id;
  doc["width"] = rec.width;
  doc["height"] = rec.height;
  auto proposals = nlohmann::json::array();
  for (const auto& p : rec.proposals) {
    nlohmann::json jp = {{"box", box_to_json(p.box)},
                         {"category", categories.entry(p.category).name},
                         {"confidence", p.confidence},
                         {"feature", p.feature}};
    if (p.is_ground_truth) jp["is_ground_truth"] = true;
    proposals.push_back(std::move(jp));
  }
  doc["proposals"] = std::move(proposals);
  auto gts = nlohmann::json::array();
  for (const auto& g : rec.gt_boxes) {
    gts.push_back({{"box", box_to_json(g.box)}, {"category", categories.entry(g.category).name}});
  }
  doc["gt_boxes"] = std::move(gts);
  if (rec.grid_features) doc["grid_features"] = *rec.grid_features;
  doc["captions"] = rec.captions;
  return doc;
}

std::vector<ImageRecord> read_dataset(const std::filesystem::path& path,
                                      const CategoryMap& categories) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<ImageRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line), categories));
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
  }
  return records;
}

void write_dataset(const std::filesystem::path& path, std::span<const ImageRecord> records,
                   const CategoryMap& categories) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& rec : records) out << record_to_json(rec, categories).dump() << '\n';
}

}  // namespace nbt
