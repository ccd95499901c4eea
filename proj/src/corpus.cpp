#include "shibboleth/corpus.hpp"

#include "shibboleth/error.hpp"
#include "shibboleth/text.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace shibboleth {

using nlohmann::json;

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::Jsonl;
  if (name == "tsv") return CorpusFormat::Tsv;
  throw ConfigError(fmt::format("unknown corpus format '{}' (expected jsonl or tsv)", name));
}

Tokenizer parse_tokenizer(std::string_view name) {
  if (name == "whitespace") return Tokenizer::Whitespace;
  if (name == "char") return Tokenizer::Char;
  throw ConfigError(fmt::format("unknown tokenizer '{}' (expected whitespace or char)", name));
}

std::string_view to_string(CorpusFormat format) {
  return format == CorpusFormat::Jsonl ? "jsonl" : "tsv";
}

std::string_view to_string(Tokenizer tokenizer) {
  return tokenizer == Tokenizer::Whitespace ? "whitespace" : "char";
}

CorpusFormat guess_corpus_format(const std::filesystem::path& path) {
  return path.extension() == ".tsv" ? CorpusFormat::Tsv : CorpusFormat::Jsonl;
}

// --- Vocabulary --------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) {
    add(t);
  }
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, tokens_.size());
  if (inserted) {
    tokens_.push_back(token);
  }
  return it->second;
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) {
    return std::nullopt;
  }
  return it->second;
}

// --- LabeledCorpus -----------------------------------------------------------

std::size_t LabeledCorpus::label_index(std::string_view label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw DataError(fmt::format("unknown label '{}'", label));
  }
  return static_cast<std::size_t>(it - labels.begin());
}

std::size_t LabeledCorpus::count_label(std::string_view label) const {
  return static_cast<std::size_t>(std::count_if(
      sentences.begin(), sentences.end(), [&](const Sentence& s) { return s.label == label; }));
}

// --- Loading -----------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto cps = text::decode_utf8(s);
  std::size_t b = 0;
  std::size_t e = cps.size();
  while (b < e && text::is_whitespace(cps[b])) ++b;
  while (e > b && text::is_whitespace(cps[e - 1])) --e;
  return text::encode_utf8(std::u32string_view(cps).substr(b, e - b));
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; });
}

RawRecord parse_line(std::string_view line, CorpusFormat format, std::size_t lineno) {
  RawRecord rec;
  if (format == CorpusFormat::Jsonl) {
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("line {}: malformed JSON: {}", lineno, e.what()));
    }
    if (!obj.is_object() || !obj.contains("text") || !obj.contains("label") ||
        !obj["text"].is_string() || !obj["label"].is_string()) {
      throw DataError(
          fmt::format("line {}: expected an object with string keys \"text\" and \"label\"", lineno));
    }
    rec.text = obj["text"].get<std::string>();
    rec.label = obj["label"].get<std::string>();
  } else {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError(fmt::format("line {}: expected label<TAB>text", lineno));
    }
    rec.label = std::string(line.substr(0, tab));
    rec.text = std::string(line.substr(tab + 1));
  }
  try {
    rec.label = trim(rec.label);
    if (trim(rec.text).empty()) {
      throw DataError("empty text");
    }
  } catch (const DataError& e) {
    throw DataError(fmt::format("line {}: {}", lineno, e.what()));
  }
  if (rec.label.empty()) {
    throw DataError(fmt::format("line {}: empty label", lineno));
  }
  return rec;
}

} // namespace

std::vector<RawRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open corpus file '{}'", path.string()));
  }
  std::vector<RawRecord> records;
  std::vector<std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (is_blank(line)) {
      continue;
    }
    auto rec = parse_line(line, format, lineno);
    if (std::find(labels.begin(), labels.end(), rec.label) == labels.end()) {
      labels.push_back(rec.label);
      if (labels.size() > 2) {
        throw ConfigError(fmt::format(
            "{}: line {}: more than two distinct labels ({}, {}, {}); runs are binary",
            path.string(), lineno, labels[0], labels[1], labels[2]));
      }
    }
    records.push_back(std::move(rec));
  }
  if (in.bad()) {
    throw DataError(fmt::format("I/O error while reading '{}'", path.string()));
  }
  return records;
}

// --- Preprocessing -----------------------------------------------------------

Sentence preprocess(const RawRecord& record, Tokenizer tokenizer, std::int64_t id) {
  const auto normalized = text::normalize(text::decode_utf8(record.text));
  Sentence out;
  out.label = record.label;
  out.id = id;
  if (tokenizer == Tokenizer::Whitespace) {
    for (const auto& piece : text::split_whitespace(normalized)) {
      out.tokens.push_back(text::encode_utf8(piece));
    }
  } else {
    for (char32_t cp : normalized) {
      if (!text::is_whitespace(cp)) {
        out.tokens.push_back(text::encode_utf8(cp));
      }
    }
  }
  if (out.tokens.empty()) {
    throw DataError(fmt::format("sentence {} is empty after preprocessing: \"{}\"", id, record.text));
  }
  return out;
}

LabeledCorpus make_corpus(std::vector<Sentence> sentences, std::vector<std::string> labels) {
  LabeledCorpus corpus;
  corpus.labels = std::move(labels);
  for (const auto& s : sentences) {
    if (std::find(corpus.labels.begin(), corpus.labels.end(), s.label) == corpus.labels.end()) {
      corpus.labels.push_back(s.label);
    }
    for (const auto& t : s.tokens) {
      corpus.vocab.add(t);
    }
  }
  if (corpus.labels.size() > 2) {
    throw ConfigError(fmt::format("more than two distinct labels ({} found); runs are binary",
                                  corpus.labels.size()));
  }
  corpus.sentences = std::move(sentences);
  return corpus;
}

LabeledCorpus build_corpus(const std::vector<RawRecord>& records, Tokenizer tokenizer,
                           std::vector<std::string> labels, std::int64_t id_offset) {
  std::vector<Sentence> sentences;
  sentences.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    sentences.push_back(preprocess(records[i], tokenizer, static_cast<std::int64_t>(i) + id_offset));
  }
  return make_corpus(std::move(sentences), std::move(labels));
}

// --- Splitting ---------------------------------------------------------------

std::pair<LabeledCorpus, LabeledCorpus> split(const LabeledCorpus& corpus, double test_fraction,
                                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test fraction must lie in (0, 1), got {}", test_fraction));
  }
  std::mt19937_64 rng(seed);
  std::vector<bool> in_test(corpus.size(), false);
  for (const auto& label : corpus.labels) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus.sentences[i].label == label) {
        members.push_back(i);
      }
    }
    if (members.size() < 2) {
      throw DataError(fmt::format("label '{}' has {} sentence(s); at least 2 are needed to split",
                                  label, members.size()));
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    for (std::size_t j = 0; j < n_test; ++j) {
      in_test[members[j]] = true;
    }
  }
  std::vector<Sentence> train;
  std::vector<Sentence> test;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (in_test[i] ? test : train).push_back(corpus.sentences[i]);
  }
  return {make_corpus(std::move(train), corpus.labels), make_corpus(std::move(test), corpus.labels)};
}

// --- Writing -----------------------------------------------------------------

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

} // namespace

void write_corpus_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  for (const auto& s : corpus.sentences) {
    json line = {{"id", s.id}, {"text", join_tokens(s.tokens)}, {"label", s.label}};
    out << line.dump() << '\n';
  }
}

LabeledCorpus read_corpus_jsonl(const std::filesystem::path& path, std::vector<std::string> labels) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open corpus '{}'", path.string()));
  }
  std::vector<Sentence> sentences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      Sentence s;
      s.id = j.at("id").get<std::int64_t>();
      s.label = j.at("label").get<std::string>();
      std::istringstream text(j.at("text").get<std::string>());
      for (std::string t; text >> t;) {
        s.tokens.push_back(std::move(t));
      }
      if (s.tokens.empty()) {
        throw DataError("empty sentence");
      }
      sentences.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return make_corpus(std::move(sentences), std::move(labels));
}

void write_gold_json(const GoldSets& gold, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << json(gold).dump(2) << '\n';
}

GoldSets read_gold_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open gold set file '{}'", path.string()));
  }
  try {
    return json::parse(in).get<GoldSets>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed gold set: {}", path.string(), e.what()));
  }
}

} // namespace shibboleth
