#include "shibboleth/metrics.hpp"

#include "shibboleth/error.hpp"
#include "shibboleth/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

namespace shibboleth {

using nlohmann::json;

// --- Gold features -----------------------------------------------------------

std::vector<std::string> expand_suffix(std::string_view pattern) {
  if (!pattern.empty() && pattern.front() == '-') {
    pattern.remove_prefix(1);
  }
  std::vector<std::string> alternatives{""};
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '(') {
      const auto close = pattern.find(')', i);
      if (close == std::string_view::npos) {
        throw DataError(fmt::format("unbalanced '(' in suffix pattern '{}'", pattern));
      }
      const std::string optional(pattern.substr(i + 1, close - i - 1));
      const std::size_t n = alternatives.size();
      for (std::size_t a = 0; a < n; ++a) {
        alternatives.push_back(alternatives[a] + optional);
      }
      i = close + 1;
    } else if (pattern[i] == ')') {
      throw DataError(fmt::format("unbalanced ')' in suffix pattern '{}'", pattern));
    } else {
      for (auto& alt : alternatives) {
        alt.push_back(pattern[i]);
      }
      ++i;
    }
  }
  std::erase(alternatives, std::string{});
  std::sort(alternatives.begin(), alternatives.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() > b.size() : a < b;
  });
  alternatives.erase(std::unique(alternatives.begin(), alternatives.end()), alternatives.end());
  if (alternatives.empty()) {
    throw DataError(fmt::format("suffix pattern '{}' is empty", pattern));
  }
  return alternatives;
}

bool GoldFeature::matches(std::string_view token) const {
  if (kind == PatternKind::Word) {
    return token == pattern;
  }
  const auto alternatives = expand_suffix(pattern);
  return std::any_of(alternatives.begin(), alternatives.end(),
                     [&](const std::string& alt) { return text::ends_with(token, alt); });
}

namespace {

std::string lowercase_latin(std::string_view s) {
  std::u32string out;
  for (char32_t cp : text::decode_utf8(s)) {
    out.push_back(text::lower_latin(cp));
  }
  return text::encode_utf8(out);
}

GoldFeature make_feature(std::string label, PatternKind kind, std::string_view raw) {
  GoldFeature g;
  g.label = std::move(label);
  g.kind = kind;
  if (kind == PatternKind::Word) {
    g.pattern = text::encode_utf8(text::normalize(text::decode_utf8(raw)));
    if (g.pattern.empty()) {
      throw DataError(fmt::format("gold word '{}' is empty after normalisation", raw));
    }
    for (char32_t cp : text::decode_utf8(g.pattern)) {
      if (text::is_whitespace(cp)) {
        throw DataError(fmt::format("gold word '{}' contains whitespace", raw));
      }
    }
  } else {
    g.pattern = lowercase_latin(raw);
    expand_suffix(g.pattern);
  }
  return g;
}

// Byte-level split on TAB.
std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

} // namespace

std::vector<GoldFeature> load_gold_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open gold feature file '{}'", path.string()));
  }
  std::vector<GoldFeature> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw DataError(fmt::format("{}: line {}: expected label<TAB>kind<TAB>pattern", path.string(), lineno));
    }
    PatternKind kind;
    if (fields[1] == "word") {
      kind = PatternKind::Word;
    } else if (fields[1] == "suffix") {
      kind = PatternKind::Suffix;
    } else {
      throw DataError(fmt::format("{}: line {}: unknown kind '{}' (expected word or suffix)",
                                  path.string(), lineno, fields[1]));
    }
    try {
      out.push_back(make_feature(fields[0], kind, fields[2]));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: line {}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

std::vector<GoldFeature> gold_features_from_sets(const GoldSets& gold) {
  std::vector<GoldFeature> out;
  for (const auto& [label, tokens] : gold) {
    for (const auto& t : tokens) {
      out.push_back(make_feature(label, PatternKind::Word, t));
    }
  }
  return out;
}

// --- Pick-up rate ------------------------------------------------------------

double percent_1dp(std::size_t numerator, std::size_t denominator) {
  // Integer round-half-up of 1000 * n / d, so table values are exact.
  const auto tenths = (2000 * static_cast<std::uint64_t>(numerator) + denominator) /
                      (2 * static_cast<std::uint64_t>(denominator));
  return static_cast<double>(tenths) / 10.0;
}

std::string format_percent(std::optional<double> rate) {
  return rate ? fmt::format("{:.1f}", *rate) : std::string("n/a");
}

const PickupRow& PickupReport::row(std::string_view pattern) const {
  for (const auto& r : rows) {
    if (r.feature.pattern == pattern) return r;
  }
  throw DataError(fmt::format("pick-up report has no feature '{}'", pattern));
}

PickupReport pickup_rate(const ExplanationSet& explanations, const LabeledCorpus& corpus,
                         const std::vector<GoldFeature>& gold) {
  PickupReport report;
  report.classes = corpus.labels;
  const std::size_t n_classes = report.classes.size();

  std::unordered_set<std::int64_t> corpus_ids;
  for (const auto& s : corpus.sentences) {
    corpus_ids.insert(s.id);
  }
  for (const auto& e : explanations.explanations) {
    if (!corpus_ids.contains(e.sentence_id)) {
      throw DataError(fmt::format(
          "explanation for sentence {} does not belong to the corpus split being counted", e.sentence_id));
    }
  }

  for (const auto& g : gold) {
    PickupRow row;
    row.feature = g;
    row.text_counts.assign(n_classes, 0);
    row.explanation_counts.assign(n_classes, 0);
    for (const auto& s : corpus.sentences) {
      const auto c = corpus.label_index(s.label);
      for (const auto& t : s.tokens) {
        if (g.matches(t)) {
          ++row.text_counts[c];
          ++row.corpus_count;
        }
      }
    }
    for (const auto& e : explanations.explanations) {
      const auto c = corpus.label_index(e.predicted_label);
      for (const auto& t : e.top_k_tokens()) {
        if (g.matches(t)) {
          ++row.explanation_counts[c];
        }
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (row.corpus_count == 0) {
        row.rates.push_back(std::nullopt);
      } else {
        row.rates.push_back(percent_1dp(row.explanation_counts[c], row.corpus_count));
      }
    }
    report.rows.push_back(std::move(row));
  }

  std::vector<std::string> gold_labels;
  for (const auto& g : gold) {
    if (std::find(gold_labels.begin(), gold_labels.end(), g.label) == gold_labels.end()) {
      gold_labels.push_back(g.label);
    }
  }
  for (const auto& gl : gold_labels) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      PickupAverage avg;
      avg.gold_label = gl;
      avg.explanation_class = report.classes[c];
      double sum = 0.0;
      for (const auto& r : report.rows) {
        if (r.feature.label != gl) continue;
        if (r.undefined()) {
          ++avg.undefined;
        } else {
          ++avg.defined;
          sum += 100.0 * static_cast<double>(r.explanation_counts[c]) / static_cast<double>(r.corpus_count);
        }
      }
      if (avg.defined > 0) {
        avg.mean_rate = std::round(10.0 * sum / static_cast<double>(avg.defined)) / 10.0;
      }
      report.averages.push_back(std::move(avg));
    }
  }
  return report;
}

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> number_or_null(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

} // namespace

json to_json(const PickupReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json rates = json::array();
    for (const auto& v : r.rates) rates.push_back(optional_number(v));
    rows.push_back({{"label", r.feature.label},
                    {"kind", r.feature.kind == PatternKind::Word ? "word" : "suffix"},
                    {"pattern", r.feature.pattern},
                    {"corpus_count", r.corpus_count},
                    {"text_counts", r.text_counts},
                    {"explanation_counts", r.explanation_counts},
                    {"pr", std::move(rates)},
                    {"undefined", r.undefined()}});
  }
  json averages = json::array();
  for (const auto& a : report.averages) {
    averages.push_back({{"gold_label", a.gold_label},
                        {"explanation_class", a.explanation_class},
                        {"mean_pr", optional_number(a.mean_rate)},
                        {"defined", a.defined},
                        {"undefined", a.undefined}});
  }
  return {{"classes", report.classes}, {"rows", std::move(rows)}, {"averages", std::move(averages)}};
}

PickupReport pickup_from_json(const json& j) {
  PickupReport report;
  report.classes = j.at("classes").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    PickupRow row;
    row.feature.label = r.at("label").get<std::string>();
    row.feature.kind = r.at("kind").get<std::string>() == "word" ? PatternKind::Word : PatternKind::Suffix;
    row.feature.pattern = r.at("pattern").get<std::string>();
    row.corpus_count = r.at("corpus_count").get<std::size_t>();
    row.text_counts = r.at("text_counts").get<std::vector<std::size_t>>();
    row.explanation_counts = r.at("explanation_counts").get<std::vector<std::size_t>>();
    for (const auto& v : r.at("pr")) row.rates.push_back(number_or_null(v));
    report.rows.push_back(std::move(row));
  }
  for (const auto& a : j.at("averages")) {
    PickupAverage avg;
    avg.gold_label = a.at("gold_label").get<std::string>();
    avg.explanation_class = a.at("explanation_class").get<std::string>();
    avg.mean_rate = number_or_null(a.at("mean_pr"));
    avg.defined = a.at("defined").get<std::size_t>();
    avg.undefined = a.at("undefined").get<std::size_t>();
    report.averages.push_back(std::move(avg));
  }
  return report;
}

void write_pickup_tsv(const PickupReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << "label\tkind\tpattern\ttext";
  for (const auto& c : report.classes) out << "\t" << c << "_exp";
  for (const auto& c : report.classes) out << "\t" << c << "_pr";
  out << '\n';
  for (const auto& r : report.rows) {
    out << r.feature.label << '\t' << (r.feature.kind == PatternKind::Word ? "word" : "suffix") << '\t'
        << r.feature.pattern << '\t' << r.corpus_count;
    for (auto e : r.explanation_counts) out << '\t' << e;
    for (const auto& v : r.rates) out << '\t' << format_percent(v);
    out << '\n';
  }
  for (const auto& a : report.averages) {
    out << "# avg\t" << a.gold_label << '\t' << a.explanation_class << '\t' << format_percent(a.mean_rate)
        << '\n';
  }
}

std::vector<Candidate> cooccurrence_candidates(const LabeledCorpus& corpus,
                                               const std::vector<GoldFeature>& gold,
                                               std::string_view label, std::size_t limit) {
  std::vector<const GoldFeature*> own;
  for (const auto& g : gold) {
    if (g.label == label) own.push_back(&g);
  }
  auto is_gold = [&](const std::string& t) {
    return std::any_of(own.begin(), own.end(), [&](const GoldFeature* g) { return g->matches(t); });
  };
  std::map<std::string, std::size_t> counts;
  for (const auto& s : corpus.sentences) {
    if (s.label != label || std::none_of(s.tokens.begin(), s.tokens.end(), is_gold)) continue;
    for (const auto& t : s.tokens) {
      if (!is_gold(t)) ++counts[t];
    }
  }
  std::vector<Candidate> out;
  for (const auto& [t, c] : counts) out.push_back({t, c});
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) { return a.count > b.count; });
  if (out.size() > limit) out.resize(limit);
  return out;
}

// --- Sufficiency -------------------------------------------------------------

Trainer make_trainer(const Hyperparams& hp) {
  return [hp](const LabeledCorpus& corpus) { return train(corpus, hp); };
}

LabeledCorpus sufficiency_corpus(const ExplanationSet& explanations, std::size_t k,
                                 const std::vector<std::string>& labels) {
  if (k < 1) {
    throw ConfigError("k must be at least 1");
  }
  std::vector<Sentence> sentences;
  sentences.reserve(explanations.explanations.size());
  for (const auto& e : explanations.explanations) {
    auto positions = top_k(e.relevances, k);
    std::sort(positions.begin(), positions.end());
    Sentence s;
    s.id = e.sentence_id;
    s.label = e.predicted_label;
    for (auto p : positions) {
      s.tokens.push_back(e.relevances.at(p).token);
    }
    if (s.tokens.empty()) {
      throw DataError(fmt::format("explanation for sentence {} has no tokens", e.sentence_id));
    }
    sentences.push_back(std::move(s));
  }
  return make_corpus(std::move(sentences), labels);
}

SufficiencyResult sufficiency(const Trainer& trainer, const ExplanationSet& explanations, std::size_t k,
                              std::uint64_t seed, const std::vector<std::string>& labels) {
  if (explanations.explanations.empty()) {
    throw DataError("sufficiency needs at least one explanation");
  }
  const auto derived = sufficiency_corpus(explanations, k, labels);
  if (derived.labels.size() != 2 || derived.count_label(derived.labels[0]) == 0 ||
      derived.count_label(derived.labels[1]) == 0) {
    throw DataError("explanation-only corpus has a single predicted label; sufficiency is undefined");
  }
  auto [train_part, eval_part] = split(derived, kSufficiencyHoldout, seed);
  const TrainedModel model = trainer(train_part);
  std::size_t agree = 0;
  for (const auto& s : eval_part.sentences) {
    if (predict(model, s).label == s.label) ++agree;
  }
  SufficiencyResult r;
  r.k = k;
  r.method = explanations.explanations.front().method;
  r.train_size = train_part.size();
  r.eval_size = eval_part.size();
  r.accuracy = static_cast<double>(agree) / static_cast<double>(eval_part.size());
  return r;
}

json to_json(const SufficiencyResult& r) {
  return {{"k", r.k},
          {"method", std::string(to_string(r.method))},
          {"accuracy", r.accuracy},
          {"accuracy_pct", percent_1dp(static_cast<std::size_t>(std::llround(r.accuracy * static_cast<double>(r.eval_size))), r.eval_size)},
          {"train_size", r.train_size},
          {"eval_size", r.eval_size}};
}

SufficiencyResult sufficiency_from_json(const json& j) {
  SufficiencyResult r;
  r.k = j.at("k").get<std::size_t>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.accuracy = j.at("accuracy").get<double>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.eval_size = j.at("eval_size").get<std::size_t>();
  return r;
}

} // namespace shibboleth
