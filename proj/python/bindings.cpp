#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/category_map.hpp"
#include "nbt/corpus.hpp"
#include "nbt/diagnostics.hpp"
#include "nbt/evaluation.hpp"
#include "nbt/inference.hpp"
#include "nbt/model.hpp"
#include "nbt/synth.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Box = std::array<double, 4>;

nbt::BoundingBox to_box(const Box& b) { return {b[0], b[1], b[2], b[3]}; }

// A loaded checkpoint ready to caption JSON records.
class CaptionModel {
 public:
  CaptionModel(const std::string& checkpoint, const nbt::CategoryMap& categories)
      : categories_(categories), ckpt_(nbt::load_checkpoint(checkpoint)), vocab_(ckpt_.vocabulary) {
    if (ckpt_.categories.size() != categories_.size()) {
      throw std::invalid_argument("checkpoint categories do not match the category map");
    }
    captioner_ = std::make_unique<nbt::Captioner>(ckpt_.params, vocab_, categories_);
  }

  std::string caption(const std::string& record_json, const std::string& mode, int beam_width,
                      int constrain_top, bool oracle_regions) const {
    auto rec = nbt::record_from_json(json::parse(record_json), categories_);
    rec.proposals = nbt::filter_proposals(rec.proposals);
    nbt::DecodeConfig cfg;
    cfg.beam_width = beam_width;
    cfg.oracle_regions = oracle_regions;
    if (mode == "greedy") {
      cfg.mode = nbt::DecodeMode::kGreedy;
    } else if (mode == "beam") {
      cfg.mode = nbt::DecodeMode::kBeam;
    } else if (mode == "constrained") {
      cfg.mode = nbt::DecodeMode::kConstrained;
      cfg.required = nbt::required_concepts(rec, categories_, constrain_top);
    } else {
      throw std::invalid_argument("unknown decode mode '" + mode + "'");
    }
    const auto tmpl = captioner_->decode(rec, cfg);
    return nbt::caption_to_json(tmpl, rec, vocab_).dump();
  }

  std::vector<std::string> vocabulary() const { return vocab_.words(); }

 private:
  nbt::CategoryMap categories_;
  nbt::Checkpoint ckpt_;
  nbt::Vocabulary vocab_;
  std::unique_ptr<nbt::Captioner> captioner_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grounded template captioning: geometry, category maps, synthetic data, decoding and metrics";
  m.attr("__version__") = NBT_VERSION;

  m.def("iou", [](const Box& a, const Box& b) { return nbt::iou(to_box(a), to_box(b)); },
        py::arg("a"), py::arg("b"), "Intersection over union of two [x_min, y_min, x_max, y_max] boxes.");
  m.def("location_feature",
        [](const Box& b, double w, double h) { return nbt::location_feature(to_box(b), w, h); },
        py::arg("box"), py::arg("width"), py::arg("height"));
  m.def("filter_proposals",
        [](const std::vector<std::tuple<Box, int, double>>& proposals) {
          std::vector<nbt::RegionProposal> in;
          for (const auto& [box, category, confidence] : proposals) {
            in.push_back({.box = to_box(box), .category = category, .confidence = confidence, .feature = {},
                          .is_ground_truth = false});
          }
          std::vector<std::tuple<Box, int, double>> out;
          for (const auto& p : nbt::filter_proposals(in)) out.emplace_back(p.box.coords(), p.category, p.confidence);
          return out;
        },
        py::arg("proposals"), "Suppress overlapping (box, category, confidence) proposals.");
  m.def("tokenize", &nbt::tokenize, py::arg("text"));

  py::class_<nbt::CategoryMap>(m, "CategoryMap")
      .def_static("load", [](const std::string& path) { return nbt::CategoryMap::load(path); }, py::arg("path"))
      .def_static("from_json", [](const std::string& text) { return nbt::CategoryMap::from_json(json::parse(text)); },
                  py::arg("text"))
      .def("to_json", [](const nbt::CategoryMap& c) { return c.to_json().dump(); })
      .def("__len__", &nbt::CategoryMap::size)
      .def("names",
           [](const nbt::CategoryMap& c) {
             std::vector<std::string> out;
             for (const auto& e : c.entries()) out.push_back(e.name);
             return out;
           })
      .def("finegrained", [](const nbt::CategoryMap& c, const std::string& name) {
             return c.entry(c.category_id(name)).finegrained;
           }, py::arg("category"))
      .def("lemma", &nbt::CategoryMap::lemma, py::arg("word"))
      .def("pluralize", &nbt::CategoryMap::pluralize, py::arg("word"))
      .def("category_of",
           [](const nbt::CategoryMap& c, const std::string& word) -> std::optional<std::string> {
             const auto m = c.find_finegrained(c.lemma(word));
             if (!m) return std::nullopt;
             return c.entry(m->category).name;
           },
           py::arg("word"), "Category a caption word refers to, or None.");

  m.def("synthesize_json",
        [](const std::string& spec_json, const nbt::CategoryMap& categories) {
          const auto spec = nbt::SynthSpec::from_json(json::parse(spec_json));
          std::vector<std::string> out;
          for (const auto& rec : nbt::synthesize(spec, categories)) {
            out.push_back(nbt::record_to_json(rec, categories).dump());
          }
          return out;
        },
        py::arg("spec"), py::arg("categories"), "Synthetic records as JSON strings.");

  m.def("corpus_bleu",
        [](const std::vector<nbt::Tokens>& candidates, const std::vector<std::vector<nbt::Tokens>>& references,
           int n) { return nbt::corpus_bleu(candidates, references, n); },
        py::arg("candidates"), py::arg("references"), py::arg("n") = 4);
  m.def("f1", [](int tp, int fp, int fn) { return nbt::F1Counts{tp, fp, fn, 0}.f1(); }, py::arg("tp"),
        py::arg("fp"), py::arg("fn"));

  m.def("check_gradients",
        [](int hidden, int regions, int vocab, double eps, std::uint64_t seed) {
          nbt::GradCheckProblem problem;
          problem.hidden = hidden;
          problem.regions = regions;
          problem.vocab = vocab;
          problem.eps = eps;
          problem.seed = seed;
          const auto r = nbt::check_model_gradients(problem);
          return py::dict(py::arg("max_relative_error") = r.max_relative_error,
                          py::arg("worst_parameter") = r.worst_parameter, py::arg("checked") = r.checked);
        },
        py::arg("hidden") = 16, py::arg("regions") = 3, py::arg("vocab") = 20, py::arg("eps") = 1e-4,
        py::arg("seed") = 42, "Finite-difference check of the caption loss gradient.");

  py::class_<CaptionModel>(m, "CaptionModel")
      .def(py::init<const std::string&, const nbt::CategoryMap&>(), py::arg("checkpoint"), py::arg("categories"))
      .def("caption_json", &CaptionModel::caption, py::arg("record"), py::arg("mode") = "greedy",
           py::arg("beam_width") = 3, py::arg("constrain_top") = 1, py::arg("oracle_regions") = false)
      .def("vocabulary", &CaptionModel::vocabulary);
}
