#pragma once

// A small from-scratch dialect classifier.
//
// Encoder output is a matrix U with one row per position: row 0 is the
// prepended sentence slot (u_s), row j >= 1 is token j (u_j).
//
// Attention encoder: token rows enter as sqrt(embed_dim) * embedding, the
// slot row as a zero vector. Sinusoidal positions are added to the inputs of
// the query and key projections only, so values carry content alone:
//   Q = (X + P) Wq^T,  K = (X + P) Wk^T,  V = X Wv^T,
//   A = softmax(Q K^T / sqrt(hidden_dim)),  U = V + A V.
// u_s is thus an attention-weighted sum of token values whose weights depend
// on position and content.
//
// The prediction
// head is softmax(affine(ReLU(u_s))); the optional local interpretability
// (LIL) head is softmax(affine'(ReLU(u_s) - ReLU(u_j))) per token.
//
// Training minimises, per sentence with gold label y,
//   -log l[y]  +  alpha1 * (1/n) * sum_j -log s_j[y]
// with plain minibatch SGD. Gradients are derived by hand.

#include "shibboleth/corpus.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shibboleth {

enum class EncoderKind {
  Attention,        // single-head self-attention over embeddings + sinusoidal positions
  BagOfEmbeddings,  // u_s = mean embedding, u_j = embedding of token j
};

EncoderKind parse_encoder(std::string_view name);
std::string_view to_string(EncoderKind kind);

struct Hyperparams {
  EncoderKind encoder = EncoderKind::Attention;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double learning_rate = 0.3;
  double alpha1 = 0.5;
  bool lil_enabled = true;
  bool positional = true;
  std::uint64_t seed = 1;

  // Throws ConfigError. The bag-of-embeddings encoder has no projection, so
  // it requires hidden_dim == embed_dim.
  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

// Probabilities over the two labels, in label order.
struct Distribution {
  std::array<double, 2> p{0.5, 0.5};

  double operator[](std::size_t i) const { return p[i]; }
  // First label wins ties.
  std::size_t argmax() const { return p[1] > p[0] ? 1 : 0; }
  bool operator==(const Distribution&) const = default;
};

struct Prediction {
  std::size_t label_index = 0;
  std::string label;
  Distribution distribution;
};

struct Representations {
  Eigen::VectorXd sentence;             // u_s
  std::vector<Eigen::VectorXd> tokens;  // u_j, one per input token
};

struct EpochLog {
  std::size_t epoch = 0;
  double total_loss = 0.0;  // summed combined loss over the epoch
  double mean_loss = 0.0;   // per sentence

  bool operator==(const EpochLog&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

// Named slice of the flat parameter buffer.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

// Reserved embedding rows. The slot row is held at zero and never trained.
inline constexpr std::size_t kSlotId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kFirstTokenId = 2;

class TrainedModel {
public:
  // Allocates parameters and draws them uniformly from [-0.1, 0.1] using
  // hp.seed. LIL parameters are drawn last so that enabling the LIL head
  // does not perturb the initial values of the other parameters.
  TrainedModel(Hyperparams hp, std::vector<std::string> labels, Vocabulary vocab);

  const Hyperparams& hyperparams() const { return hp_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const Vocabulary& vocab() const { return vocab_; }
  bool has_lil() const { return hp_.lil_enabled; }
  std::size_t hidden_dim() const { return hp_.hidden_dim; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::string_view name) const;
  MatrixView view(std::string_view name);
  ConstMatrixView view(std::string_view name) const;

  // Embedding row ids for `tokens`, with a leading sentence slot. Unknown
  // tokens map to kUnkId.
  std::vector<std::size_t> encode_ids(std::span<const std::string> tokens) const;

  const std::vector<EpochLog>& training_log() const { return log_; }
  std::vector<EpochLog>& training_log() { return log_; }

  bool operator==(const TrainedModel& other) const;

private:
  Hyperparams hp_;
  std::vector<std::string> labels_;
  Vocabulary vocab_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  std::vector<EpochLog> log_;
};

// Encoder output: row 0 = u_s, row j = u_j. `ids` must start with kSlotId.
RowMatrix encode(const TrainedModel& model, std::span<const std::size_t> ids);

Distribution softmax2(double z0, double z1);
Distribution classify(const TrainedModel& model, const Eigen::Ref<const Eigen::VectorXd>& sentence_rep);
// s_j from the LIL head; throws UnsupportedMethodError without one.
Distribution lil_distribution(const TrainedModel& model,
                              const Eigen::Ref<const Eigen::VectorXd>& sentence_rep,
                              const Eigen::Ref<const Eigen::VectorXd>& token_rep);

TrainedModel train(const LabeledCorpus& corpus, const Hyperparams& hp);

Prediction predict(const TrainedModel& model, const Sentence& sentence);
Distribution predict_ids(const TrainedModel& model, std::span<const std::size_t> ids);
Representations representations(const TrainedModel& model, const Sentence& sentence);
double evaluate_accuracy(const TrainedModel& model, const LabeledCorpus& test);

// Combined loss summed over `sentences`, and its exact gradient with respect
// to the flat parameter buffer (overwrites `grad`, resized as needed).
double objective(const TrainedModel& model, std::span<const Sentence> sentences);
double objective_gradient(const TrainedModel& model, std::span<const Sentence> sentences,
                          std::vector<double>& grad);

// Number of encoder passes run by the calling thread.
std::uint64_t encoder_invocations();

// Serialization as a versioned JSON document.
inline constexpr int kModelFormatVersion = 1;
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);
// FNV-1a over the vocabulary tokens, NUL-separated, as 16 hex digits.
std::string vocab_hash(const Vocabulary& vocab);

} // namespace shibboleth
