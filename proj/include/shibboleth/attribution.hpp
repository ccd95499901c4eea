#pragma once

// Token-level relevance scores.
//
// Leave-one-out (post-hoc): r_i = l(X) - l(X \ {x_i}) at the predicted
// label, with the token deleted and the sequence closed up.
// Intrinsic (LIL): r_j = l[y] - s_j[y] at the gold label (predicted label
// when the gold label is unknown), from a single encoder pass.

#include "shibboleth/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shibboleth {

enum class Method { Loo, Intrinsic };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

inline constexpr std::size_t kDefaultTopK = 3;

struct TokenRelevance {
  std::string token;
  std::size_t index = 0;
  double score = 0.0;

  bool operator==(const TokenRelevance&) const = default;
};

struct Explanation {
  std::int64_t sentence_id = 0;
  std::string gold_label;
  std::string predicted_label;
  Method method = Method::Loo;
  std::vector<TokenRelevance> relevances;  // one per token, in sentence order
  std::vector<std::size_t> top_k;          // positions, best first

  bool correct() const { return gold_label == predicted_label; }
  std::vector<std::string> top_k_tokens() const;
  bool operator==(const Explanation&) const = default;
};

std::vector<TokenRelevance> loo_attribute(const TrainedModel& model, const Sentence& sentence);

// `use_gold`: score at the sentence's own label when the model knows it.
std::vector<TokenRelevance> intrinsic_attribute(const TrainedModel& model, const Sentence& sentence,
                                                bool use_gold = true);

// Positions of the k best scores, descending; ties go to the earlier
// position. Returns every position when k exceeds the sentence length.
std::vector<std::size_t> top_k(std::span<const TokenRelevance> relevances, std::size_t k);

Explanation explain(const TrainedModel& model, const Sentence& sentence, Method method,
                    std::size_t k = kDefaultTopK);

// Explains every sentence; results are in corpus order regardless of
// `threads`.
std::vector<Explanation> explain_corpus(const TrainedModel& model, const LabeledCorpus& corpus,
                                        Method method, std::size_t k = kDefaultTopK,
                                        std::size_t threads = 1);

// JSONL, one explanation per line:
// {"sentence_id","gold","pred","method","split","tokens":[{"t","i","score"}],"top_k":[{"t","i"}]}
// Scores are written with 9 decimal digits.
void write_explanations(const std::filesystem::path& path, std::span<const Explanation> explanations,
                        std::string_view split_tag);
struct ExplanationFile {
  std::vector<Explanation> explanations;
  std::string split = "test";
};
ExplanationFile read_explanations(const std::filesystem::path& path);

} // namespace shibboleth
