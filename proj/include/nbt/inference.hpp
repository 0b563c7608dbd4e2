#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nbt/corpus.hpp"
#include "nbt/decoder.hpp"
#include "nbt/model.hpp"

namespace nbt {

/// One decoding decision: a textual word grounded in the sentinel, or a slot
/// over region `index`.
struct TokenChoice {
  bool textual = true;
  int index = 0;  // word index when textual, region index otherwise
  double log_prob = 0.0;

  bool operator==(const TokenChoice&) const = default;
};

/// Every admissible choice for one step with its joint log-probability:
/// log p(sentinel) + log P_txt(w) for words (except <bos>), log P_r(i) for
/// regions. Sorted best first; ties go to textual, then the lower index.
std::vector<TokenChoice> step_candidates(const StepOutput& step);

/// The best element of step_candidates().
TokenChoice decode_step_choice(const StepOutput& step);

struct TemplateToken {
  bool slot = false;
  int word = 0;    // textual word index
  int region = 0;  // proposal index for slots

  bool operator==(const TemplateToken&) const = default;
};

struct SlotGrounding {
  int slot_pos = 0;
  int region = 0;
  std::string word;
};

struct Template {
  std::vector<TemplateToken> tokens;  // without <eos>
  std::vector<std::string> filled;    // parallel to tokens
  std::vector<SlotGrounding> groundings;
  double score = 0.0;                 // summed log-probability including <eos>
  bool constraints_satisfied = true;

  std::string caption() const;
};

enum class DecodeMode { kGreedy, kBeam, kConstrained };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kGreedy;
  int beam_width = 3;
  int max_length = 16;  // tokens before the forced <eos>
  std::vector<std::set<std::string>> required;
  bool oracle_regions = false;

  void validate() const;
};

/// Surface word for a slot over `region`: argmax fine-grained word of the
/// region's category, pluralized when the plural class wins.
std::string fill_slot(int region, const ImageRecord& record, const StepOutput& step,
                      const CategoryMap& categories);

/// Proposals replaced by the ground-truth boxes (confidence 1). Each takes the
/// pooled feature of the best-overlapping original proposal, zeros if none.
ImageRecord with_oracle_regions(const ImageRecord& record, int pooled_dim);

/// Acceptable surface forms (fine-grained words and their plurals) of the
/// `top` highest-confidence distinct categories among the proposals.
std::vector<std::set<std::string>> required_concepts(const ImageRecord& record,
                                                     const CategoryMap& categories, int top);

/// Decoding against a trained model. Records are expected to carry filtered
/// proposals.
class Captioner {
 public:
  Captioner(const ModelParams& params, const Vocabulary& vocabulary,
            const CategoryMap& categories);

  Template greedy(const ImageRecord& record, int max_length = 16) const;

  /// Beams sorted by score, best first. Width 1 reproduces greedy().
  std::vector<Template> beam(const ImageRecord& record, int width, int max_length = 16) const;

  /// Beam search over (hypothesis, satisfied-constraint subset) pairs with one
  /// beam per subset. Only hypotheses that satisfied every set may emit <eos>.
  /// When none completes, the hypothesis that satisfied the most sets is
  /// returned with constraints_satisfied = false.
  Template constrained(const ImageRecord& record, const std::vector<std::set<std::string>>& required,
                       int width, int max_length = 16) const;

  /// Dispatches on config.mode, applying oracle regions when requested.
  Template decode(const ImageRecord& record, const DecodeConfig& config) const;

  const Vocabulary& vocabulary() const { return *vocab_; }
  const CategoryMap& categories() const { return *categories_; }

 private:
  std::vector<Template> search(const ImageRecord& record,
                               const std::vector<std::set<std::string>>& required, int width,
                               int max_length) const;

  Decoder decoder_;
  const Vocabulary* vocab_;
  const CategoryMap* categories_;
};

/// Copies the word-embedding rows and category embedding of each stand-in
/// category onto its novel category, so an unseen category borrows a trained
/// neighbour's embeddings. Keys and values are category names.
void substitute_novel_embeddings(ModelParams& params, const Vocabulary& vocabulary,
                                 const CategoryMap& categories,
                                 const std::map<std::string, std::string>& novel_to_standin);

/// {"image_id", "caption", "template", "groundings", "score"}
nlohmann::json caption_to_json(const Template& tmpl, const ImageRecord& record,
                               const Vocabulary& vocabulary);

}  // namespace nbt
