#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace shibboleth {

enum class CorpusFormat { Jsonl, Tsv };
enum class Tokenizer { Whitespace, Char };

CorpusFormat parse_corpus_format(std::string_view name);
Tokenizer parse_tokenizer(std::string_view name);
std::string_view to_string(CorpusFormat format);
std::string_view to_string(Tokenizer tokenizer);

// Picks the format from the file extension (.tsv -> Tsv, otherwise Jsonl).
CorpusFormat guess_corpus_format(const std::filesystem::path& path);

struct RawRecord {
  std::string text;
  std::string label;

  bool operator==(const RawRecord&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::string label;
  std::int64_t id = 0;

  bool operator==(const Sentence&) const = default;
};

// Token -> dense integer id, in order of first appearance.
class Vocabulary {
public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t add(const std::string& token);
  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct LabeledCorpus {
  std::vector<Sentence> sentences;
  std::vector<std::string> labels;  // declared order; at most two entries
  Vocabulary vocab;

  // Index of `label` in `labels`; throws DataError when unknown.
  std::size_t label_index(std::string_view label) const;
  std::size_t count_label(std::string_view label) const;
  bool empty() const { return sentences.empty(); }
  std::size_t size() const { return sentences.size(); }
};

// Reads one record per non-blank line. JSONL lines are objects with string
// keys "text" and "label"; TSV lines are "label<TAB>text".
std::vector<RawRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format);

// Removes punctuation, lowercases Latin letters and tokenizes.
Sentence preprocess(const RawRecord& record, Tokenizer tokenizer, std::int64_t id = 0);

// Preprocesses every record (ids = record index + id_offset) and indexes the
// vocabulary. `labels`, when given, fixes the label order; otherwise labels
// are taken in order of first appearance.
LabeledCorpus build_corpus(const std::vector<RawRecord>& records, Tokenizer tokenizer,
                           std::vector<std::string> labels = {}, std::int64_t id_offset = 0);

// Wraps already-tokenized sentences, rebuilding the vocabulary.
LabeledCorpus make_corpus(std::vector<Sentence> sentences, std::vector<std::string> labels);

// Stratified, seed-deterministic partition into (train, test).
std::pair<LabeledCorpus, LabeledCorpus> split(const LabeledCorpus& corpus, double test_fraction,
                                              std::uint64_t seed);

// Tokenized corpus as JSONL {"id","text","label"}, tokens joined by single
// spaces. read_corpus_jsonl restores ids and tokens without preprocessing.
void write_corpus_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path);
LabeledCorpus read_corpus_jsonl(const std::filesystem::path& path, std::vector<std::string> labels = {});

// ---------------------------------------------------------------------------
// Synthetic corpora with planted label-exclusive tokens.

using GoldSets = std::map<std::string, std::vector<std::string>>;

struct SynthConfig {
  std::size_t shared_vocab_size = 500;
  std::size_t exclusive_per_label = 20;
  double shibboleth_prob = 0.9;
  std::size_t min_len = 8;
  std::size_t max_len = 16;
  std::size_t n_train = 2000;
  std::size_t n_test = 400;
  std::uint64_t seed = 1;
  std::vector<std::string> labels{"A", "B"};

  void validate() const;
};

struct SyntheticCorpus {
  LabeledCorpus train;
  LabeledCorpus test;
  GoldSets gold;
  // Planted occurrences per exclusive token, summed over both splits.
  std::map<std::string, std::size_t> planted_tally;
};

SyntheticCorpus generate_synthetic(const SynthConfig& config);

// Corpus whose only distinguishing signal is a verb suffix: label 1 verbs end
// in "en", label 0 verbs in "et", over a shared stem inventory.
struct SuffixSynthConfig {
  std::size_t shared_vocab_size = 300;
  std::size_t stems = 40;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  std::size_t n_train = 1200;
  std::size_t n_test = 400;
  std::uint64_t seed = 3;
  std::vector<std::string> labels{"C0", "C1"};

  void validate() const;
};

struct SuffixSyntheticCorpus {
  LabeledCorpus train;
  LabeledCorpus test;
};

SuffixSyntheticCorpus generate_suffix_synthetic(const SuffixSynthConfig& config);

// Gold sets as JSON {label: [tokens]}.
void write_gold_json(const GoldSets& gold, const std::filesystem::path& path);
GoldSets read_gold_json(const std::filesystem::path& path);

} // namespace shibboleth
