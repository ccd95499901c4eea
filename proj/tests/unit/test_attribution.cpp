#include "fixtures.hpp"
#include "oracles.hpp"

#include "shibboleth/attribution.hpp"
#include "shibboleth/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace shibboleth;

namespace {

std::vector<TokenRelevance> scored(const std::vector<double>& scores) {
  std::vector<TokenRelevance> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({"t" + std::to_string(i), i, scores[i]});
  return out;
}

LabeledCorpus small_corpus() {
  return make_corpus({{{"mik", "gaan", "huus"}, "A", 0},
                      {{"ik", "gaan", "naar", "huis"}, "B", 1},
                      {{"mik", "huus", "wi", "gaan", "naar"}, "A", 2},
                      {{"ik", "huis"}, "B", 3}},
                     {"A", "B"});
}

TrainedModel random_model(EncoderKind kind, bool lil, std::uint64_t seed) {
  const auto c = small_corpus();
  Hyperparams hp;
  hp.encoder = kind;
  hp.embed_dim = hp.hidden_dim = 5;
  hp.lil_enabled = lil;
  TrainedModel m(hp, c.labels, c.vocab);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& p : m.parameters()) p = u(rng);
  m.view("embedding").row(kSlotId).setZero();
  return m;
}

// Trained once per process on the default synthetic corpus.
struct Trained {
  SyntheticCorpus data;
  TrainedModel model;
};

const Trained& trained_default(double alpha1) {
  static std::map<double, Trained> cache;
  auto it = cache.find(alpha1);
  if (it == cache.end()) {
    auto data = generate_synthetic(SynthConfig{});
    Hyperparams hp;
    hp.alpha1 = alpha1;
    auto model = train(data.train, hp);
    it = cache.emplace(alpha1, Trained{std::move(data), std::move(model)}).first;
  }
  return it->second;
}

bool is_gold(const SyntheticCorpus& d, const std::string& t) {
  for (const auto& [label, toks] : d.gold) {
    if (std::find(toks.begin(), toks.end(), t) != toks.end()) return true;
  }
  return false;
}

}  // namespace

TEST(TopK, TiesGoToTheEarlierPosition) {
  EXPECT_EQ(top_k(scored({0.2, 0.9, 0.9, 0.1}), 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k(scored({0.5, 0.5, 0.5}), 1), (std::vector<std::size_t>{0}));
}

TEST(TopK, ClampsToSentenceLength) {
  EXPECT_EQ(top_k(scored({0.2, 0.9, 0.3, 0.1}), 10), (std::vector<std::size_t>{1, 2, 0, 3}));
  EXPECT_TRUE(top_k(scored({}), 3).empty());
}

TEST(TopK, DependsOnlyOnScoresAndK) {
  const auto r = scored({0.3, -0.1, 0.7, 0.7, 0.0});
  for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(top_k(r, k), top_k(scored({0.3, -0.1, 0.7, 0.7, 0.0}), k));
}

TEST(Loo, MatchesBruteForceAblation) {
  for (auto kind : {EncoderKind::BagOfEmbeddings, EncoderKind::Attention}) {
    const auto m = random_model(kind, false, 11);
    for (const auto& s : small_corpus().sentences) {
      const auto rel = loo_attribute(m, s);
      const auto ref = oracle::loo_scores(m, s.tokens);
      ASSERT_EQ(rel.size(), ref.size());
      for (std::size_t i = 0; i < rel.size(); ++i) {
        EXPECT_EQ(rel[i].token, s.tokens[i]);
        EXPECT_EQ(rel[i].index, i);
        EXPECT_NEAR(rel[i].score, ref[i], 1e-9);
      }
    }
  }
}

TEST(Loo, ZeroHeadGivesZeroScores) {
  auto m = random_model(EncoderKind::Attention, false, 3);
  m.view("head_w").setZero();
  m.view("head_b").setZero();
  const Sentence s{{"mik", "gaan", "huus"}, "A", 0};
  const auto p = predict(m, s);
  EXPECT_EQ(p.distribution[0], 0.5);
  EXPECT_EQ(p.distribution[1], 0.5);
  EXPECT_EQ(p.label, "A");
  for (const auto& r : loo_attribute(m, s)) EXPECT_EQ(r.score, 0.0);
}

TEST(Loo, HandSetLinearModel) {
  const auto m = fixtures::linear_model();
  const Sentence s{{"mik", "huus"}, "OFL", 0};
  const auto rel = loo_attribute(m, s);
  const auto ref = oracle::loo_scores(m, s.tokens);
  ASSERT_EQ(rel.size(), 2u);
  EXPECT_NEAR(rel[0].score, ref[0], 1e-9);
  EXPECT_NEAR(rel[1].score, ref[1], 1e-9);
}

TEST(Loo, TopKOrderSurvivesPositiveHeadScaling) {
  auto m = random_model(EncoderKind::BagOfEmbeddings, false, 29);
  const auto corpus = small_corpus();
  std::vector<std::vector<std::size_t>> before;
  for (const auto& s : corpus.sentences) before.push_back(explain(m, s, Method::Loo, 3).top_k);
  m.view("head_w") *= 4.2;
  m.view("head_b") *= 4.2;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(explain(m, corpus.sentences[i], Method::Loo, 3).top_k, before[i]);
  }
}

TEST(Loo, RunsOneEncoderPassPerAblation) {
  const auto m = random_model(EncoderKind::Attention, false, 5);
  const Sentence s{{"mik", "gaan", "huus", "wi"}, "A", 0};
  const auto before = encoder_invocations();
  loo_attribute(m, s);
  EXPECT_EQ(encoder_invocations() - before, 5u);
}

TEST(Intrinsic, UsesASingleEncoderPass) {
  const auto m = random_model(EncoderKind::Attention, true, 5);
  for (const auto& s : small_corpus().sentences) {
    const auto before = encoder_invocations();
    intrinsic_attribute(m, s);
    EXPECT_EQ(encoder_invocations() - before, 1u);
  }
}

TEST(Intrinsic, MatchesFormulaOnBagModel) {
  const auto m = random_model(EncoderKind::BagOfEmbeddings, true, 7);
  for (const auto& s : small_corpus().sentences) {
    const auto y = m.labels()[0] == s.label ? 0u : 1u;
    const auto rel = intrinsic_attribute(m, s, true);
    const auto ref = oracle::bag_intrinsic_scores(m, s.tokens, y);
    ASSERT_EQ(rel.size(), ref.size());
    for (std::size_t i = 0; i < rel.size(); ++i) EXPECT_NEAR(rel[i].score, ref[i], 1e-12);
  }
}

TEST(Intrinsic, PredictedLabelWhenGoldIsNotUsed) {
  const auto m = random_model(EncoderKind::BagOfEmbeddings, true, 8);
  for (const auto& s : small_corpus().sentences) {
    const auto rel = intrinsic_attribute(m, s, false);
    const auto ref = oracle::bag_intrinsic_scores(m, s.tokens, predict(m, s).label_index);
    for (std::size_t i = 0; i < rel.size(); ++i) EXPECT_NEAR(rel[i].score, ref[i], 1e-12);
  }
}

TEST(Intrinsic, ZeroLilHeadGivesEqualScores) {
  auto m = random_model(EncoderKind::Attention, true, 9);
  m.view("lil_w").setZero();
  m.view("lil_b").setZero();
  const Sentence s{{"mik", "gaan", "huus"}, "A", 0};
  const double la = predict(m, s).distribution[0];
  for (const auto& r : intrinsic_attribute(m, s)) EXPECT_DOUBLE_EQ(r.score, la - 0.5);
}

TEST(Intrinsic, NeedsTheLilHead) {
  const auto m = random_model(EncoderKind::Attention, false, 5);
  EXPECT_THROW(intrinsic_attribute(m, small_corpus().sentences[0]), UnsupportedMethodError);
  EXPECT_THROW(explain(m, small_corpus().sentences[0], Method::Intrinsic), UnsupportedMethodError);
}

TEST(Explain, ThreadCountDoesNotChangeResults) {
  const auto m = random_model(EncoderKind::Attention, true, 21);
  const auto c = small_corpus();
  for (auto method : {Method::Loo, Method::Intrinsic}) {
    EXPECT_EQ(explain_corpus(m, c, method, 3, 1), explain_corpus(m, c, method, 3, 3));
  }
}

TEST(Explain, JsonlRoundTrip) {
  const auto m = random_model(EncoderKind::Attention, true, 21);
  const auto ex = explain_corpus(m, small_corpus(), Method::Loo, 2);
  const auto p = fixtures::scratch_dir("expl") / "e.jsonl";
  write_explanations(p, ex, "train");
  const auto back = read_explanations(p);
  EXPECT_EQ(back.split, "train");
  ASSERT_EQ(back.explanations.size(), ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(back.explanations[i].top_k, ex[i].top_k);
    EXPECT_EQ(back.explanations[i].predicted_label, ex[i].predicted_label);
    for (std::size_t j = 0; j < ex[i].relevances.size(); ++j) {
      EXPECT_NEAR(back.explanations[i].relevances[j].score, ex[i].relevances[j].score, 1e-9);
    }
  }
}

TEST(Explain, UnknownMethodNameIsAConfigError) {
  EXPECT_THROW(parse_method("gradient"), ConfigError);
}

TEST(TrainedSynthetic, PlantedTokensOnlySentenceIsConfident) {
  const auto& t = trained_default(0.5);
  const auto& a = t.data.gold.at("A");
  const Sentence s{{a[0], a[1], a[2], a[3]}, "A", 0};
  const auto p = predict(t.model, s);
  EXPECT_EQ(p.label, "A");
  EXPECT_GT(p.distribution[0], 0.9);
  EXPECT_EQ(predict(t.model, s).distribution, p.distribution);
}

TEST(TrainedSynthetic, LooRanksPlantedTokensAboveSharedMedian) {
  const auto& t = trained_default(0.5);
  std::size_t eligible = 0, above = 0;
  for (const auto& s : t.data.test.sentences) {
    const auto rel = loo_attribute(t.model, s);
    std::vector<double> shared;
    std::vector<double> planted;
    for (const auto& r : rel) (is_gold(t.data, r.token) ? planted : shared).push_back(r.score);
    if (planted.empty() || shared.empty()) continue;
    std::sort(shared.begin(), shared.end());
    const std::size_t n = shared.size();
    const double median = n % 2 ? shared[n / 2] : 0.5 * (shared[n / 2 - 1] + shared[n / 2]);
    ++eligible;
    if (*std::max_element(planted.begin(), planted.end()) > median) ++above;
  }
  ASSERT_GT(eligible, 0u);
  EXPECT_GE(static_cast<double>(above) / static_cast<double>(eligible), 0.9) << above << "/" << eligible;
}

// The LIL head only learns to separate planted tokens when its loss weight is
// small; at alpha1 = 0.5 one label's planted tokens are scored no higher
// than filler (see README). The property is checked at alpha1 = 0.1.
TEST(TrainedSynthetic, IntrinsicRanksPlantedTokensInTopThree) {
  const auto& t = trained_default(0.1);
  std::size_t occurrences = 0, hits = 0;
  for (const auto& s : t.data.test.sentences) {
    const auto e = explain(t.model, s, Method::Intrinsic, 3);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (!is_gold(t.data, s.tokens[i])) continue;
      ++occurrences;
      if (std::find(e.top_k.begin(), e.top_k.end(), i) != e.top_k.end()) ++hits;
    }
  }
  ASSERT_GT(occurrences, 0u);
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(occurrences), 0.8) << hits << "/" << occurrences;
}

// An OFL-style corpus: "mik"/"dik" mark one variety, "mi"/"di" the other.
TEST(TrainedSynthetic, KOneSelectsMikWhenStrictlyBest) {
  std::mt19937_64 rng(5);
  std::vector<std::string> filler;
  for (int i = 0; i < 60; ++i) filler.push_back("w" + std::to_string(i));
  std::vector<Sentence> sents;
  for (std::int64_t i = 0; i < 600; ++i) {
    const bool ofl = i % 2 == 0;
    Sentence s{{}, ofl ? "OFL" : "Non-OFL", i};
    for (int j = 0; j < 6; ++j) s.tokens.push_back(filler[rng() % filler.size()]);
    const std::string pron = ofl ? (rng() % 2 ? "mik" : "dik") : (rng() % 2 ? "mi" : "di");
    s.tokens.insert(s.tokens.begin() + static_cast<std::ptrdiff_t>(rng() % 7), pron);
    sents.push_back(std::move(s));
  }
  const auto corpus = make_corpus(std::move(sents), {"OFL", "Non-OFL"});
  const auto [train_part, test_part] = split(corpus, 0.25, 3);
  const auto model = train(train_part, Hyperparams{});
  std::size_t checked = 0;
  for (const auto& s : test_part.sentences) {
    const auto e = explain(model, s, Method::Loo, 1);
    const auto pos = std::find(s.tokens.begin(), s.tokens.end(), "mik");
    if (pos == s.tokens.end()) continue;
    const auto i = static_cast<std::size_t>(pos - s.tokens.begin());
    bool strict = true;
    for (const auto& r : e.relevances) {
      if (r.index != i && r.score >= e.relevances[i].score) strict = false;
    }
    if (!strict) continue;
    ++checked;
    ASSERT_EQ(e.top_k.size(), 1u);
    EXPECT_EQ(e.top_k[0], i);
  }
  EXPECT_GT(checked, 0u);
}
