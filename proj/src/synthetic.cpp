#include "shibboleth/corpus.hpp"

#include "shibboleth/error.hpp"

#include <fmt/format.h>

#include <random>

namespace shibboleth {

namespace {

std::string numbered(std::string_view prefix, std::size_t i, std::size_t count) {
  const auto width = fmt::format("{}", count > 0 ? count - 1 : 0).size();
  return fmt::format("{}{:0{}}", prefix, i, width);
}

void check_common(std::size_t min_len, std::size_t max_len, std::size_t n_train, std::size_t n_test,
                  const std::vector<std::string>& labels) {
  if (labels.size() != 2 || labels[0] == labels[1]) {
    throw ConfigError("synthetic corpora need exactly two distinct labels");
  }
  if (min_len < 1 || min_len > max_len) {
    throw ConfigError(fmt::format("invalid sentence length range ({}, {})", min_len, max_len));
  }
  if (n_train < 2 || n_test < 2) {
    throw ConfigError("n_train and n_test must each be at least 2");
  }
}

} // namespace

void SynthConfig::validate() const {
  check_common(min_len, max_len, n_train, n_test, labels);
  if (shared_vocab_size < 1) {
    throw ConfigError("shared_vocab_size must be at least 1");
  }
  if (!(shibboleth_prob >= 0.0 && shibboleth_prob <= 1.0)) {
    throw ConfigError(fmt::format("shibboleth_prob must lie in [0, 1], got {}", shibboleth_prob));
  }
  if (exclusive_per_label < 1 && shibboleth_prob > 0.0) {
    throw ConfigError("exclusive_per_label must be at least 1 when shibboleth_prob > 0");
  }
}

SyntheticCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();

  std::vector<std::string> shared;
  for (std::size_t i = 0; i < config.shared_vocab_size; ++i) {
    shared.push_back(numbered("w", i, config.shared_vocab_size));
  }
  SyntheticCorpus out;
  std::vector<std::vector<std::string>> exclusive(2);
  for (std::size_t li = 0; li < 2; ++li) {
    const std::string prefix = fmt::format("x{}", static_cast<char>('a' + li));
    for (std::size_t i = 0; i < config.exclusive_per_label; ++i) {
      exclusive[li].push_back(numbered(prefix, i, config.exclusive_per_label));
      out.planted_tally[exclusive[li].back()] = 0;
    }
    out.gold[config.labels[li]] = exclusive[li];
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_len(config.min_len, config.max_len);
  std::uniform_int_distribution<std::size_t> pick_shared(0, shared.size() - 1);
  std::bernoulli_distribution plant(config.shibboleth_prob);

  auto make_split = [&](std::size_t count, std::int64_t id_offset) {
    std::vector<Sentence> sentences;
    sentences.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t li = i % 2;
      Sentence s;
      s.id = id_offset + static_cast<std::int64_t>(i);
      s.label = config.labels[li];
      const std::size_t len = pick_len(rng);
      for (std::size_t t = 0; t < len; ++t) {
        s.tokens.push_back(shared[pick_shared(rng)]);
      }
      if (plant(rng)) {
        std::uniform_int_distribution<std::size_t> pick_ex(0, exclusive[li].size() - 1);
        std::uniform_int_distribution<std::size_t> pick_pos(0, s.tokens.size());
        const auto& token = exclusive[li][pick_ex(rng)];
        s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(pick_pos(rng)), token);
        ++out.planted_tally[token];
      }
      sentences.push_back(std::move(s));
    }
    return make_corpus(std::move(sentences), config.labels);
  };

  out.train = make_split(config.n_train, 0);
  out.test = make_split(config.n_test, static_cast<std::int64_t>(config.n_train));
  return out;
}

void SuffixSynthConfig::validate() const {
  check_common(min_len, max_len, n_train, n_test, labels);
  if (shared_vocab_size < 1 || stems < 1) {
    throw ConfigError("shared_vocab_size and stems must be at least 1");
  }
}

SuffixSyntheticCorpus generate_suffix_synthetic(const SuffixSynthConfig& config) {
  config.validate();

  // Shared filler ends in a digit and stems end in a consonant other than
  // n/t, so only inflected verbs match the -(e)n / -(e)t patterns.
  std::vector<std::string> shared;
  for (std::size_t i = 0; i < config.shared_vocab_size; ++i) {
    shared.push_back(numbered("w", i, config.shared_vocab_size));
  }
  static constexpr std::string_view kOnsets[] = {"b", "d", "g", "k", "l", "m", "p", "r", "s", "v"};
  static constexpr std::string_view kCodas[] = {"ak", "ep", "ol", "uk", "ar", "ib", "om", "eg"};
  std::vector<std::string> stems;
  for (std::size_t i = 0; i < config.stems; ++i) {
    stems.push_back(fmt::format("{}{}{}", kOnsets[i % 10], i / 10, kCodas[(i * 3) % 8]));
  }
  static constexpr std::string_view kSuffix[] = {"et", "en"};

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_len(config.min_len, config.max_len);
  std::uniform_int_distribution<std::size_t> pick_shared(0, shared.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_stem(0, stems.size() - 1);

  auto make_split = [&](std::size_t count, std::int64_t id_offset) {
    std::vector<Sentence> sentences;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t li = i % 2;
      Sentence s;
      s.id = id_offset + static_cast<std::int64_t>(i);
      s.label = config.labels[li];
      const std::size_t len = pick_len(rng);
      for (std::size_t t = 0; t < len; ++t) {
        s.tokens.push_back(shared[pick_shared(rng)]);
      }
      std::uniform_int_distribution<std::size_t> pick_pos(0, s.tokens.size());
      const auto pos = pick_pos(rng);
      s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                      stems[pick_stem(rng)] + std::string(kSuffix[li]));
      sentences.push_back(std::move(s));
    }
    return make_corpus(std::move(sentences), config.labels);
  };

  SuffixSyntheticCorpus out;
  out.train = make_split(config.n_train, 0);
  out.test = make_split(config.n_test, static_cast<std::int64_t>(config.n_train));
  return out;
}

} // namespace shibboleth
