#pragma once

#include "shibboleth/attribution.hpp"
#include "shibboleth/corpus.hpp"
#include "shibboleth/extraction.hpp"
#include "shibboleth/model.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shibboleth {

// --- Gold features and pick-up rate ------------------------------------------

enum class PatternKind { Word, Suffix };

struct GoldFeature {
  std::string label;
  PatternKind kind = PatternKind::Word;
  std::string pattern;  // as declared, e.g. "mik" or "-(e)n"

  // Literal: exact token equality. Suffix: the token ends with one of the
  // pattern's expansions.
  bool matches(std::string_view token) const;
  bool operator==(const GoldFeature&) const = default;
};

// "-(e)n" -> {"en", "n"}. A leading '-' is dropped and every parenthesised
// group is optional. Longest alternatives first.
std::vector<std::string> expand_suffix(std::string_view pattern);

// TSV: label<TAB>kind(word|suffix)<TAB>pattern. Lines starting with '#' are
// comments. Word patterns get the corpus normalisation; suffix patterns are
// lowercased.
std::vector<GoldFeature> load_gold_features(const std::filesystem::path& path);
std::vector<GoldFeature> gold_features_from_sets(const GoldSets& gold);

struct PickupRow {
  GoldFeature feature;
  std::size_t corpus_count = 0;                   // c_g over the whole split
  std::vector<std::size_t> text_counts;           // occurrences in each class's sentences
  std::vector<std::size_t> explanation_counts;    // e_g per explanation class
  std::vector<std::optional<double>> rates;       // PR in percent, 1 decimal; nullopt when c_g = 0

  bool undefined() const { return corpus_count == 0; }
  bool operator==(const PickupRow&) const = default;
};

struct PickupAverage {
  std::string gold_label;
  std::string explanation_class;
  std::optional<double> mean_rate;  // percent, 1 decimal, over defined rows only
  std::size_t defined = 0;
  std::size_t undefined = 0;

  bool operator==(const PickupAverage&) const = default;
};

struct PickupReport {
  std::vector<std::string> classes;  // explanation classes = predicted labels
  std::vector<PickupRow> rows;
  std::vector<PickupAverage> averages;

  const PickupRow& row(std::string_view pattern) const;
  bool operator==(const PickupReport&) const = default;
};

// PR(g) = e_g / c_g, where e_g counts occurrences of g among the top-k
// tokens of explanations predicted as a class and c_g counts occurrences of
// g in the corpus split the explanations were produced from.
PickupReport pickup_rate(const ExplanationSet& explanations, const LabeledCorpus& corpus,
                         const std::vector<GoldFeature>& gold);

// 100 * numerator / denominator rounded to one decimal.
double percent_1dp(std::size_t numerator, std::size_t denominator);
std::string format_percent(std::optional<double> rate);

nlohmann::json to_json(const PickupReport& report);
PickupReport pickup_from_json(const nlohmann::json& j);
void write_pickup_tsv(const PickupReport& report, const std::filesystem::path& path);

// Tokens co-occurring with a label's gold features in that label's
// sentences, ranked by count (ties by token). Gold tokens themselves are
// excluded. Used to grow a gold feature list by hand.
struct Candidate {
  std::string token;
  std::size_t count = 0;
  bool operator==(const Candidate&) const = default;
};
std::vector<Candidate> cooccurrence_candidates(const LabeledCorpus& corpus,
                                               const std::vector<GoldFeature>& gold,
                                               std::string_view label, std::size_t limit);

// --- Sufficiency -------------------------------------------------------------

using Trainer = std::function<TrainedModel(const LabeledCorpus&)>;
Trainer make_trainer(const Hyperparams& hp);

inline constexpr double kSufficiencyHoldout = 0.2;

struct SufficiencyResult {
  std::size_t k = 0;
  double accuracy = 0.0;
  Method method = Method::Loo;
  std::size_t train_size = 0;
  std::size_t eval_size = 0;

  bool operator==(const SufficiencyResult&) const = default;
};

// One sentence per explanation: its k best tokens in sentence order,
// labelled with the predicted label.
LabeledCorpus sufficiency_corpus(const ExplanationSet& explanations, std::size_t k,
                                 const std::vector<std::string>& labels);

// Trains on 80% of the derived corpus and reports how often the new model
// reproduces the original predictions on the remaining 20%.
SufficiencyResult sufficiency(const Trainer& trainer, const ExplanationSet& explanations, std::size_t k,
                              std::uint64_t seed, const std::vector<std::string>& labels);

nlohmann::json to_json(const SufficiencyResult& r);
SufficiencyResult sufficiency_from_json(const nlohmann::json& j);

} // namespace shibboleth
