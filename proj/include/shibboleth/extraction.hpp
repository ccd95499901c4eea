#pragma once

// Corpus-level ("global") features from sentence-level explanations.
//
// E' keeps explanations whose prediction is correct, and within each of them
// only the top-k tokens that are top-k tokens for a single label across all
// correct explanations. The surviving tokens of each label form one document;
// TF-IDF over the per-label documents ranks the features.

#include "shibboleth/attribution.hpp"
#include "shibboleth/corpus.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shibboleth {

struct ExplanationSet {
  std::vector<Explanation> explanations;
  std::string split = "test";  // "test" or "train"
};

enum class Provenance { Ours, Baseline };
std::string_view to_string(Provenance p);

enum class TfMode {
  Normalized,  // count(t, d) / |d|
  RawCount,    // count(t, d)
};

inline constexpr std::size_t kDefaultTopN = 20;

struct ScoredToken {
  std::string token;
  double score = 0.0;

  bool operator==(const ScoredToken&) const = default;
};

struct LabelFeatures {
  std::string label;
  std::vector<ScoredToken> features;  // score non-increasing, then token ascending

  bool operator==(const LabelFeatures&) const = default;
};

struct FeatureSet {
  std::vector<LabelFeatures> labels;
  Provenance provenance = Provenance::Ours;
  std::size_t top_n = kDefaultTopN;
  bool empty_input = false;  // set when E' was empty

  const LabelFeatures& for_label(std::string_view label) const;
  bool operator==(const FeatureSet&) const = default;
};

ExplanationSet filter_explanations(const ExplanationSet& explanations);

// TF(t, d) * IDF(t, D) with IDF = ln((1 + |D|) / (1 + df(t))) + 1.
// One score map per document; empty documents yield empty maps.
std::vector<std::map<std::string, double>> compute_tfidf(
    const std::vector<std::vector<std::string>>& documents, TfMode tf = TfMode::Normalized);

// `filtered` should come from filter_explanations. `labels` fixes the
// output order; labels with no surviving tokens get an empty list.
FeatureSet extract_global_features(const ExplanationSet& filtered, const std::vector<std::string>& labels,
                                   std::size_t top_n = kDefaultTopN, TfMode tf = TfMode::Normalized);

// TF-IDF over the raw text of each label, no classifier involved.
FeatureSet baseline_features(const LabeledCorpus& corpus, std::size_t top_n = kDefaultTopN,
                             TfMode tf = TfMode::Normalized);

// TSV rows: label, rank (1-based), token, score.
void write_features_tsv(const FeatureSet& features, const std::filesystem::path& path);
nlohmann::json to_json(const FeatureSet& features);
FeatureSet feature_set_from_json(const nlohmann::json& j);
void write_features_json(const FeatureSet& features, const std::filesystem::path& path);
FeatureSet read_features_json(const std::filesystem::path& path);

// Pools the features of every label, drops scores and duplicate tokens, and
// shuffles with `seed`. Columns: item, token, judgment (left blank).
void write_annotation_sheet(const FeatureSet& features, std::uint64_t seed,
                            const std::filesystem::path& path);
std::vector<std::string> annotation_items(const FeatureSet& features, std::uint64_t seed);

} // namespace shibboleth
