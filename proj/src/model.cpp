#include "shibboleth/model.hpp"

#include "shibboleth/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace shibboleth {

namespace {

thread_local std::uint64_t g_encoder_calls = 0;

constexpr double kInitScale = 0.1;

} // namespace

EncoderKind parse_encoder(std::string_view name) {
  if (name == "attention") return EncoderKind::Attention;
  if (name == "bag") return EncoderKind::BagOfEmbeddings;
  throw ConfigError(fmt::format("unknown encoder '{}' (expected attention or bag)", name));
}

std::string_view to_string(EncoderKind kind) {
  return kind == EncoderKind::Attention ? "attention" : "bag";
}

void Hyperparams::validate() const {
  if (embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("embed_dim and hidden_dim must be at least 1");
  }
  if (encoder == EncoderKind::BagOfEmbeddings && embed_dim != hidden_dim) {
    throw ConfigError(fmt::format(
        "bag encoder requires hidden_dim == embed_dim (got {} and {})", hidden_dim, embed_dim));
  }
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(fmt::format("learning_rate must be positive, got {}", learning_rate));
  }
  if (!(alpha1 >= 0.0) || !std::isfinite(alpha1)) {
    throw ConfigError(fmt::format("alpha1 must be nonnegative, got {}", alpha1));
  }
}

// --- TrainedModel ------------------------------------------------------------

TrainedModel::TrainedModel(Hyperparams hp, std::vector<std::string> labels, Vocabulary vocab)
    : hp_(hp), labels_(std::move(labels)), vocab_(std::move(vocab)) {
  hp_.validate();
  if (labels_.size() != 2 || labels_[0] == labels_[1]) {
    throw DataError(fmt::format("a model needs exactly two distinct labels, got {}", labels_.size()));
  }
  const std::size_t de = hp_.embed_dim;
  const std::size_t dh = hp_.hidden_dim;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    blocks_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  add("embedding", vocab_.size() + kFirstTokenId, de);
  if (hp_.encoder == EncoderKind::Attention) {
    add("w_query", dh, de);
    add("w_key", dh, de);
    add("w_value", dh, de);
  }
  add("head_w", 2, dh);
  add("head_b", 2, 1);
  if (hp_.lil_enabled) {
    add("lil_w", 2, dh);
    add("lil_b", 2, 1);
  }
  params_.resize(offset);
  std::mt19937_64 rng(hp_.seed);
  std::uniform_real_distribution<double> init(-kInitScale, kInitScale);
  for (double& p : params_) {
    p = init(rng);
  }
  // The slot row carries no content; see encode_into.
  std::fill_n(params_.begin(), de, 0.0);
}

const ParamBlock& TrainedModel::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw ConfigError(fmt::format("model has no parameter block '{}'", name));
}

MatrixView TrainedModel::view(std::string_view name) {
  const auto& b = block(name);
  return MatrixView(params_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                    static_cast<Eigen::Index>(b.cols));
}

ConstMatrixView TrainedModel::view(std::string_view name) const {
  const auto& b = block(name);
  return ConstMatrixView(params_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                         static_cast<Eigen::Index>(b.cols));
}

std::vector<std::size_t> TrainedModel::encode_ids(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(kSlotId);
  for (const auto& t : tokens) {
    const auto id = vocab_.find(t);
    ids.push_back(id ? *id + kFirstTokenId : kUnkId);
  }
  return ids;
}

bool TrainedModel::operator==(const TrainedModel& other) const {
  return hp_ == other.hp_ && labels_ == other.labels_ && vocab_ == other.vocab_ &&
         params_ == other.params_ && log_ == other.log_;
}

// --- Forward / backward ------------------------------------------------------

namespace {

// Intermediate values of one encoder pass, kept for backpropagation.
struct EncoderCache {
  RowMatrix x;   // token content rows (scaled embeddings)
  RowMatrix xp;  // content + position; feeds queries and keys
  RowMatrix q, k, v, a;
  RowMatrix u;
};

void add_positions(RowMatrix& x) {
  const auto d = x.cols();
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      x(t, i) += std::sin(static_cast<double>(t) * freq);
      if (i + 1 < d) {
        x(t, i + 1) += std::cos(static_cast<double>(t) * freq);
      }
    }
  }
}

void encode_into(const TrainedModel& model, std::span<const std::size_t> ids, EncoderCache& c) {
  ++g_encoder_calls;
  const auto& hp = model.hyperparams();
  const auto emb = model.view("embedding");
  const auto m = static_cast<Eigen::Index>(ids.size());

  if (hp.encoder == EncoderKind::BagOfEmbeddings) {
    c.u.setZero(m, static_cast<Eigen::Index>(hp.embed_dim));
    for (Eigen::Index t = 1; t < m; ++t) {
      c.u.row(t) = emb.row(static_cast<Eigen::Index>(ids[t]));
      c.u.row(0) += c.u.row(t);
    }
    if (m > 1) {
      c.u.row(0) /= static_cast<double>(m - 1);
    }
    return;
  }

  const double emb_scale = std::sqrt(static_cast<double>(hp.embed_dim));
  c.x.resize(m, static_cast<Eigen::Index>(hp.embed_dim));
  for (Eigen::Index t = 0; t < m; ++t) {
    c.x.row(t) = emb_scale * emb.row(static_cast<Eigen::Index>(ids[t]));
  }
  c.x.row(0).setZero();
  c.xp = c.x;
  if (hp.positional) {
    add_positions(c.xp);
  }
  c.q.noalias() = c.xp * model.view("w_query").transpose();
  c.k.noalias() = c.xp * model.view("w_key").transpose();
  c.v.noalias() = c.x * model.view("w_value").transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hp.hidden_dim));
  c.a.noalias() = c.q * c.k.transpose();
  c.a *= scale;
  for (Eigen::Index t = 0; t < m; ++t) {
    const double mx = c.a.row(t).maxCoeff();
    c.a.row(t) = (c.a.row(t).array() - mx).exp();
    c.a.row(t) /= c.a.row(t).sum();
  }
  c.u = c.v;
  c.u.noalias() += c.a * c.v;
}

// -log softmax(z)[y], stable.
double nll2(double z0, double z1, std::size_t y) {
  const double mx = std::max(z0, z1);
  const double lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
  return lse - (y == 0 ? z0 : z1);
}

Eigen::VectorXd relu(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.cwiseMax(0.0);
}

Eigen::VectorXd relu_mask(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return (v.array() > 0.0).cast<double>().matrix();
}

// Combined loss of one sentence; accumulates its gradient into `grad` when
// non-null. `grad` is laid out like model.parameters().
double sentence_objective(const TrainedModel& model, std::span<const std::size_t> ids,
                          std::size_t y, double* grad) {
  const auto& hp = model.hyperparams();
  EncoderCache c;
  encode_into(model, ids, c);
  const Eigen::Index m = c.u.rows();
  const Eigen::Index n = m - 1;
  const Eigen::VectorXd us = c.u.row(0).transpose();
  const Eigen::VectorXd hs = relu(us);

  const auto head_w = model.view("head_w");
  const auto head_b = model.view("head_b");
  const Eigen::Vector2d logits = head_w * hs + head_b.col(0);
  double loss = nll2(logits[0], logits[1], y);

  const bool lil = hp.lil_enabled && n > 0;
  const double lil_weight = lil ? hp.alpha1 / static_cast<double>(n) : 0.0;

  Eigen::Matrix2Xd lil_delta;  // d loss / d lil logits, one column per token
  std::vector<Eigen::VectorXd> gaps;
  if (lil) {
    const auto lil_w = model.view("lil_w");
    const auto lil_b = model.view("lil_b");
    lil_delta.resize(2, n);
    gaps.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index j = 1; j <= n; ++j) {
      Eigen::VectorXd gap = hs - relu(c.u.row(j).transpose());
      const Eigen::Vector2d z = lil_w * gap + lil_b.col(0);
      loss += lil_weight * nll2(z[0], z[1], y);
      const Distribution s = softmax2(z[0], z[1]);
      lil_delta(0, j - 1) = lil_weight * (s[0] - (y == 0 ? 1.0 : 0.0));
      lil_delta(1, j - 1) = lil_weight * (s[1] - (y == 1 ? 1.0 : 0.0));
      gaps.push_back(std::move(gap));
    }
  }

  if (grad == nullptr) {
    return loss;
  }

  auto grad_view = [&](std::string_view name) {
    const auto& b = model.block(name);
    return MatrixView(grad + b.offset, static_cast<Eigen::Index>(b.rows),
                      static_cast<Eigen::Index>(b.cols));
  };

  const Distribution l = softmax2(logits[0], logits[1]);
  const Eigen::Vector2d dlogits(l[0] - (y == 0 ? 1.0 : 0.0), l[1] - (y == 1 ? 1.0 : 0.0));
  grad_view("head_w").noalias() += dlogits * hs.transpose();
  grad_view("head_b").col(0) += dlogits;
  Eigen::VectorXd dhs = head_w.transpose() * dlogits;

  RowMatrix du = RowMatrix::Zero(m, c.u.cols());
  if (lil) {
    const auto lil_w = model.view("lil_w");
    auto g_lil_w = grad_view("lil_w");
    auto g_lil_b = grad_view("lil_b");
    for (Eigen::Index j = 1; j <= n; ++j) {
      const Eigen::Vector2d dz = lil_delta.col(j - 1);
      g_lil_w.noalias() += dz * gaps[static_cast<std::size_t>(j - 1)].transpose();
      g_lil_b.col(0) += dz;
      const Eigen::VectorXd dgap = lil_w.transpose() * dz;
      dhs += dgap;
      du.row(j) = -(dgap.array() * relu_mask(c.u.row(j).transpose()).array()).matrix().transpose();
    }
  }
  du.row(0) = (dhs.array() * relu_mask(us).array()).matrix().transpose();

  auto g_emb = grad_view("embedding");
  if (hp.encoder == EncoderKind::BagOfEmbeddings) {
    for (Eigen::Index t = 1; t < m; ++t) {
      g_emb.row(static_cast<Eigen::Index>(ids[t])) += du.row(t) + du.row(0) / static_cast<double>(n);
    }
    return loss;
  }

  // u = v + a v
  const double scale = 1.0 / std::sqrt(static_cast<double>(hp.hidden_dim));
  RowMatrix dv = du;
  dv.noalias() += c.a.transpose() * du;
  RowMatrix da = du * c.v.transpose();
  RowMatrix dz(m, m);
  for (Eigen::Index t = 0; t < m; ++t) {
    const double dot = c.a.row(t).dot(da.row(t));
    dz.row(t) = (c.a.row(t).array() * (da.row(t).array() - dot)).matrix();
  }
  dz *= scale;
  const RowMatrix dq = dz * c.k;
  const RowMatrix dk = dz.transpose() * c.q;

  grad_view("w_query").noalias() += dq.transpose() * c.xp;
  grad_view("w_key").noalias() += dk.transpose() * c.xp;
  grad_view("w_value").noalias() += dv.transpose() * c.x;
  RowMatrix dx = dq * model.view("w_query");
  dx.noalias() += dk * model.view("w_key");
  dx.noalias() += dv * model.view("w_value");
  const double emb_scale = std::sqrt(static_cast<double>(hp.embed_dim));
  for (Eigen::Index t = 1; t < m; ++t) {
    g_emb.row(static_cast<Eigen::Index>(ids[t])) += emb_scale * dx.row(t);
  }
  return loss;
}

} // namespace

RowMatrix encode(const TrainedModel& model, std::span<const std::size_t> ids) {
  EncoderCache c;
  encode_into(model, ids, c);
  return std::move(c.u);
}

Distribution softmax2(double z0, double z1) {
  const double mx = std::max(z0, z1);
  const double e0 = std::exp(z0 - mx);
  const double e1 = std::exp(z1 - mx);
  const double sum = e0 + e1;
  return Distribution{{e0 / sum, e1 / sum}};
}

Distribution classify(const TrainedModel& model, const Eigen::Ref<const Eigen::VectorXd>& sentence_rep) {
  const Eigen::Vector2d z = model.view("head_w") * relu(sentence_rep) + model.view("head_b").col(0);
  return softmax2(z[0], z[1]);
}

Distribution lil_distribution(const TrainedModel& model,
                              const Eigen::Ref<const Eigen::VectorXd>& sentence_rep,
                              const Eigen::Ref<const Eigen::VectorXd>& token_rep) {
  if (!model.has_lil()) {
    throw UnsupportedMethodError("model was trained without the LIL head");
  }
  const Eigen::VectorXd gap = relu(sentence_rep) - relu(token_rep);
  const Eigen::Vector2d z = model.view("lil_w") * gap + model.view("lil_b").col(0);
  return softmax2(z[0], z[1]);
}

// --- Training ----------------------------------------------------------------

namespace {

std::size_t label_of(const TrainedModel& model, const Sentence& s) {
  const auto& labels = model.labels();
  const auto it = std::find(labels.begin(), labels.end(), s.label);
  if (it == labels.end()) {
    throw DataError(fmt::format("sentence {} has label '{}' unknown to the model", s.id, s.label));
  }
  return static_cast<std::size_t>(it - labels.begin());
}

} // namespace

double objective(const TrainedModel& model, std::span<const Sentence> sentences) {
  double total = 0.0;
  for (const auto& s : sentences) {
    total += sentence_objective(model, model.encode_ids(s.tokens), label_of(model, s), nullptr);
  }
  return total;
}

double objective_gradient(const TrainedModel& model, std::span<const Sentence> sentences,
                          std::vector<double>& grad) {
  grad.assign(model.parameters().size(), 0.0);
  double total = 0.0;
  for (const auto& s : sentences) {
    total += sentence_objective(model, model.encode_ids(s.tokens), label_of(model, s), grad.data());
  }
  return total;
}

TrainedModel train(const LabeledCorpus& corpus, const Hyperparams& hp) {
  hp.validate();
  if (corpus.empty()) {
    throw DataError("cannot train on an empty corpus");
  }
  if (corpus.labels.size() != 2 || corpus.count_label(corpus.labels[0]) == 0 ||
      corpus.count_label(corpus.labels[1]) == 0) {
    throw DataError("training corpus must contain sentences of both labels");
  }
  TrainedModel model(hp, corpus.labels, corpus.vocab);

  struct Example {
    std::vector<std::size_t> ids;
    std::size_t label;
  };
  std::vector<Example> examples;
  examples.reserve(corpus.size());
  for (const auto& s : corpus.sentences) {
    examples.push_back({model.encode_ids(s.tokens), corpus.label_index(s.label)});
  }

  std::seed_seq shuffle_seed{hp.seed, std::uint64_t{0x5348}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(model.parameters().size());
  auto params = model.parameters();

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        batch_loss += sentence_objective(model, ex.ids, ex.label, grad.data());
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError(fmt::format(
            "non-finite training loss in epoch {} at example {} (learning rate {})", epoch, start,
            hp.learning_rate));
      }
      epoch_loss += batch_loss;
      const double step = hp.learning_rate / static_cast<double>(end - start);
      for (std::size_t p = 0; p < params.size(); ++p) {
        params[p] -= step * grad[p];
      }
    }
    if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
      throw DivergenceError(fmt::format("non-finite parameters after epoch {}", epoch));
    }
    model.training_log().push_back(
        {epoch, epoch_loss, epoch_loss / static_cast<double>(examples.size())});
  }
  return model;
}

// --- Inference ---------------------------------------------------------------

Distribution predict_ids(const TrainedModel& model, std::span<const std::size_t> ids) {
  const RowMatrix u = encode(model, ids);
  return classify(model, u.row(0).transpose());
}

Prediction predict(const TrainedModel& model, const Sentence& sentence) {
  const auto ids = model.encode_ids(sentence.tokens);
  Prediction out;
  out.distribution = predict_ids(model, ids);
  out.label_index = out.distribution.argmax();
  out.label = model.labels()[out.label_index];
  return out;
}

Representations representations(const TrainedModel& model, const Sentence& sentence) {
  const auto ids = model.encode_ids(sentence.tokens);
  const RowMatrix u = encode(model, ids);
  Representations out;
  out.sentence = u.row(0).transpose();
  for (Eigen::Index j = 1; j < u.rows(); ++j) {
    out.tokens.emplace_back(u.row(j).transpose());
  }
  return out;
}

double evaluate_accuracy(const TrainedModel& model, const LabeledCorpus& test) {
  if (test.empty()) {
    throw DataError("cannot evaluate accuracy on an empty corpus");
  }
  std::size_t correct = 0;
  for (const auto& s : test.sentences) {
    if (predict(model, s).label == s.label) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::uint64_t encoder_invocations() { return g_encoder_calls; }

} // namespace shibboleth
