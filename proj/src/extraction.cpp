#include "shibboleth/extraction.hpp"

#include "shibboleth/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

namespace shibboleth {

using nlohmann::json;

std::string_view to_string(Provenance p) {
  return p == Provenance::Ours ? "ours" : "baseline";
}

const LabelFeatures& FeatureSet::for_label(std::string_view label) const {
  for (const auto& l : labels) {
    if (l.label == label) return l;
  }
  throw DataError(fmt::format("feature set has no label '{}'", label));
}

ExplanationSet filter_explanations(const ExplanationSet& explanations) {
  std::unordered_set<std::int64_t> seen;
  for (const auto& e : explanations.explanations) {
    if (!seen.insert(e.sentence_id).second) {
      throw DataError(fmt::format("duplicate sentence id {} in explanation set", e.sentence_id));
    }
  }

  // token -> labels it is a top-k token for, among correct predictions
  std::map<std::string, std::set<std::string>> owners;
  for (const auto& e : explanations.explanations) {
    if (!e.correct()) continue;
    for (const auto& t : e.top_k_tokens()) {
      owners[t].insert(e.gold_label);
    }
  }

  ExplanationSet out;
  out.split = explanations.split;
  for (const auto& e : explanations.explanations) {
    if (!e.correct()) continue;
    Explanation kept = e;
    std::erase_if(kept.top_k, [&](std::size_t pos) {
      return owners.at(e.relevances.at(pos).token).size() != 1;
    });
    if (!kept.top_k.empty()) {
      out.explanations.push_back(std::move(kept));
    }
  }
  return out;
}

std::vector<std::map<std::string, double>> compute_tfidf(
    const std::vector<std::vector<std::string>>& documents, TfMode tf) {
  if (documents.empty()) {
    throw DataError("TF-IDF needs at least one document");
  }
  std::vector<std::map<std::string, std::size_t>> counts(documents.size());
  std::map<std::string, std::size_t> df;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& t : documents[d]) {
      ++counts[d][t];
    }
    for (const auto& [t, c] : counts[d]) {
      ++df[t];
    }
  }
  const double n_docs = static_cast<double>(documents.size());
  std::vector<std::map<std::string, double>> scores(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    const double length = static_cast<double>(documents[d].size());
    for (const auto& [t, c] : counts[d]) {
      const double term_freq = tf == TfMode::Normalized ? static_cast<double>(c) / length
                                                        : static_cast<double>(c);
      const double idf = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[t]))) + 1.0;
      scores[d][t] = term_freq * idf;
    }
  }
  return scores;
}

namespace {

std::vector<ScoredToken> rank(const std::map<std::string, double>& scores, std::size_t top_n) {
  std::vector<ScoredToken> ranked;
  ranked.reserve(scores.size());
  for (const auto& [t, s] : scores) {
    ranked.push_back({t, s});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredToken& a, const ScoredToken& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.token < b.token;
  });
  if (ranked.size() > top_n) {
    ranked.resize(top_n);
  }
  return ranked;
}

FeatureSet rank_documents(const std::vector<std::string>& labels,
                          const std::vector<std::vector<std::string>>& documents, std::size_t top_n,
                          TfMode tf, Provenance provenance) {
  FeatureSet out;
  out.provenance = provenance;
  out.top_n = top_n;
  const auto scores = compute_tfidf(documents, tf);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.labels.push_back({labels[i], rank(scores[i], top_n)});
  }
  return out;
}

} // namespace

FeatureSet extract_global_features(const ExplanationSet& filtered, const std::vector<std::string>& labels,
                                   std::size_t top_n, TfMode tf) {
  if (labels.empty()) {
    throw ConfigError("feature extraction needs at least one label");
  }
  if (filtered.explanations.empty()) {
    FeatureSet out;
    out.provenance = Provenance::Ours;
    out.top_n = top_n;
    out.empty_input = true;
    for (const auto& l : labels) {
      out.labels.push_back({l, {}});
    }
    return out;
  }
  std::vector<std::vector<std::string>> documents(labels.size());
  for (const auto& e : filtered.explanations) {
    const auto it = std::find(labels.begin(), labels.end(), e.gold_label);
    if (it == labels.end()) {
      throw DataError(fmt::format("explanation {} has label '{}' outside the label set", e.sentence_id,
                                  e.gold_label));
    }
    auto& doc = documents[static_cast<std::size_t>(it - labels.begin())];
    for (const auto& t : e.top_k_tokens()) {
      doc.push_back(t);
    }
  }
  return rank_documents(labels, documents, top_n, tf, Provenance::Ours);
}

FeatureSet baseline_features(const LabeledCorpus& corpus, std::size_t top_n, TfMode tf) {
  if (corpus.empty()) {
    throw DataError("baseline features need a non-empty corpus");
  }
  std::vector<std::vector<std::string>> documents(corpus.labels.size());
  for (const auto& s : corpus.sentences) {
    auto& doc = documents[corpus.label_index(s.label)];
    doc.insert(doc.end(), s.tokens.begin(), s.tokens.end());
  }
  return rank_documents(corpus.labels, documents, top_n, tf, Provenance::Baseline);
}

// --- IO ----------------------------------------------------------------------

void write_features_tsv(const FeatureSet& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << "label\trank\ttoken\tscore\n";
  for (const auto& l : features.labels) {
    for (std::size_t r = 0; r < l.features.size(); ++r) {
      out << l.label << '\t' << r + 1 << '\t' << l.features[r].token << '\t'
          << fmt::format("{:.9f}", l.features[r].score) << '\n';
    }
  }
}

json to_json(const FeatureSet& features) {
  json labels = json::array();
  for (const auto& l : features.labels) {
    json rows = json::array();
    for (const auto& f : l.features) {
      rows.push_back({{"token", f.token}, {"score", f.score}});
    }
    labels.push_back({{"label", l.label}, {"features", std::move(rows)}});
  }
  return {{"provenance", std::string(to_string(features.provenance))},
          {"top_n", features.top_n},
          {"empty_input", features.empty_input},
          {"labels", std::move(labels)}};
}

FeatureSet feature_set_from_json(const json& doc) {
  FeatureSet out;
  const auto prov = doc.at("provenance").get<std::string>();
  if (prov != "ours" && prov != "baseline") {
    throw DataError(fmt::format("unknown provenance '{}'", prov));
  }
  out.provenance = prov == "ours" ? Provenance::Ours : Provenance::Baseline;
  out.top_n = doc.at("top_n").get<std::size_t>();
  out.empty_input = doc.value("empty_input", false);
  for (const auto& l : doc.at("labels")) {
    LabelFeatures lf;
    lf.label = l.at("label").get<std::string>();
    for (const auto& f : l.at("features")) {
      lf.features.push_back({f.at("token").get<std::string>(), f.at("score").get<double>()});
    }
    out.labels.push_back(std::move(lf));
  }
  return out;
}

void write_features_json(const FeatureSet& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << to_json(features).dump(2) << '\n';
}

FeatureSet read_features_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open feature file '{}'", path.string()));
  }
  try {
    return feature_set_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed feature file: {}", path.string(), e.what()));
  }
}

std::vector<std::string> annotation_items(const FeatureSet& features, std::uint64_t seed) {
  std::vector<std::string> items;
  std::set<std::string> seen;
  for (const auto& l : features.labels) {
    for (const auto& f : l.features) {
      if (seen.insert(f.token).second) {
        items.push_back(f.token);
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  return items;
}

void write_annotation_sheet(const FeatureSet& features, std::uint64_t seed,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  std::string options;
  for (const auto& l : features.labels) {
    options += l.label + "|";
  }
  out << "item\ttoken\tjudgment(" << options << "both|neither)\n";
  const auto items = annotation_items(features, seed);
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << i + 1 << '\t' << items[i] << "\t\n";
  }
}

} // namespace shibboleth
