#include "fixtures.hpp"
#include "oracles.hpp"

#include "shibboleth/error.hpp"
#include "shibboleth/extraction.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace shibboleth;

namespace {

// Explanation whose top-k are the first `k` tokens.
Explanation hand(std::int64_t id, std::vector<std::string> tokens, const std::string& gold,
                 const std::string& pred, std::size_t k) {
  Explanation e;
  e.sentence_id = id;
  e.gold_label = gold;
  e.predicted_label = pred;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    e.relevances.push_back({tokens[i], i, 1.0 - 0.1 * static_cast<double>(i)});
  }
  for (std::size_t i = 0; i < std::min(k, tokens.size()); ++i) e.top_k.push_back(i);
  return e;
}

// Two passes over plain (sentence, token) pairs: first collect which labels
// use each token, then keep single-owner tokens of correct explanations.
std::set<std::pair<std::int64_t, std::string>> two_pass_oracle(const std::vector<Explanation>& all) {
  std::map<std::string, std::set<std::string>> users;
  for (const auto& e : all) {
    if (e.gold_label != e.predicted_label) continue;
    for (auto p : e.top_k) users[e.relevances[p].token].insert(e.gold_label);
  }
  std::set<std::pair<std::int64_t, std::string>> kept;
  for (const auto& e : all) {
    if (e.gold_label != e.predicted_label) continue;
    for (auto p : e.top_k) {
      if (users[e.relevances[p].token].size() == 1) kept.insert({e.sentence_id, e.relevances[p].token});
    }
  }
  return kept;
}

std::set<std::pair<std::int64_t, std::string>> flatten(const ExplanationSet& s) {
  std::set<std::pair<std::int64_t, std::string>> out;
  for (const auto& e : s.explanations) {
    for (const auto& t : e.top_k_tokens()) out.insert({e.sentence_id, t});
  }
  return out;
}

std::vector<std::string> tokens_of(const LabelFeatures& l) {
  std::vector<std::string> out;
  for (const auto& f : l.features) out.push_back(f.token);
  return out;
}

}  // namespace

TEST(Filter, AllWrongPredictionsLeaveNothing) {
  ExplanationSet set{{hand(0, {"a", "b"}, "A", "B", 2), hand(1, {"c"}, "B", "A", 1)}};
  const auto filtered = filter_explanations(set);
  EXPECT_TRUE(filtered.explanations.empty());
  const auto features = extract_global_features(filtered, {"A", "B"});
  EXPECT_TRUE(features.empty_input);
  EXPECT_TRUE(features.for_label("A").features.empty());
}

TEST(Filter, KeepsLabelExclusiveTokensOnly) {
  ExplanationSet set{{hand(0, {"för", "huus", "de"}, "DE", "DE", 3), hand(1, {"veur", "de"}, "NL", "NL", 2),
                      hand(2, {"för", "wi"}, "DE", "DE", 2)}};
  const auto kept = flatten(filter_explanations(set));
  EXPECT_TRUE(kept.count({0, "för"}));
  EXPECT_TRUE(kept.count({2, "för"}));
  EXPECT_FALSE(kept.count({0, "de"}));
  EXPECT_FALSE(kept.count({1, "de"}));
  const auto features = extract_global_features(filter_explanations(set), {"DE", "NL"});
  for (const auto& l : features.labels) {
    const auto toks = tokens_of(l);
    EXPECT_EQ(std::count(toks.begin(), toks.end(), "de"), 0);
  }
}

TEST(Filter, MatchesTwoPassOracleOnHandCorpus) {
  // Overlaps: "x" is top-k for both labels, "y" only for A, "z" is top-k for
  // B in a correct explanation and for A only in a wrong one.
  const std::vector<Explanation> all{
      hand(0, {"x", "y", "q"}, "A", "A", 2), hand(1, {"y", "z", "x"}, "A", "A", 3),
      hand(2, {"x", "w"}, "B", "B", 2), hand(3, {"z", "y"}, "A", "B", 2)};
  const auto got = flatten(filter_explanations(ExplanationSet{all}));
  EXPECT_EQ(got, two_pass_oracle(all));
  EXPECT_EQ(got, (std::set<std::pair<std::int64_t, std::string>>{{0, "y"}, {1, "y"}, {1, "z"}, {2, "w"}}));
}

TEST(Filter, RandomSetsMatchTwoPassOracle) {
  std::mt19937_64 rng(42);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f", "g"};
  for (int round = 0; round < 50; ++round) {
    std::vector<Explanation> all;
    for (std::int64_t i = 0; i < 12; ++i) {
      std::vector<std::string> toks;
      for (std::size_t j = 0; j < 1 + rng() % 5; ++j) toks.push_back(vocab[rng() % vocab.size()]);
      const std::string gold = rng() % 2 ? "A" : "B";
      const std::string pred = rng() % 4 ? gold : (gold == "A" ? "B" : "A");
      all.push_back(hand(i, toks, gold, pred, 1 + rng() % 3));
    }
    const auto filtered = filter_explanations(ExplanationSet{all});
    EXPECT_EQ(flatten(filtered), two_pass_oracle(all));
    for (const auto& e : filtered.explanations) EXPECT_TRUE(e.correct());
  }
}

TEST(Filter, DuplicateSentenceIdsAreRejected) {
  EXPECT_THROW(filter_explanations(ExplanationSet{{hand(0, {"a"}, "A", "A", 1), hand(0, {"b"}, "A", "A", 1)}}),
               DataError);
}

TEST(TfIdf, SingleDocumentScoresAreRawTermFrequency) {
  const auto s = compute_tfidf({{"a", "b", "a", "c"}});
  EXPECT_DOUBLE_EQ(s[0].at("a"), 0.5);
  EXPECT_DOUBLE_EQ(s[0].at("b"), 0.25);
}

TEST(TfIdf, ToyValue) {
  const auto s = compute_tfidf({{"a", "a", "b"}, {"a", "c"}});
  EXPECT_NEAR(s[0].at("b"), 0.4685, 1e-4);
  EXPECT_NEAR(s[0].at("b"), (1.0 / 3.0) * (std::log(1.5) + 1.0), 1e-12);
}

TEST(TfIdf, TermInEveryDocumentWithEqualTfScoresEqually) {
  const auto s = compute_tfidf({{"a", "b"}, {"a", "c"}, {"c", "a"}});
  EXPECT_EQ(s[0].at("a"), s[1].at("a"));
  EXPECT_EQ(s[1].at("a"), s[2].at("a"));
}

TEST(TfIdf, MatchesBruteForceOnRandomCorpora) {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::vector<std::string>> docs(1 + rng() % 5);
    for (auto& d : docs) {
      for (std::size_t j = 0; j < 1 + rng() % 20; ++j) d.push_back(std::string(1, static_cast<char>('a' + rng() % 8)));
    }
    const auto s = compute_tfidf(docs);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (const auto& [term, score] : s[d]) EXPECT_NEAR(score, oracle::tfidf(docs, term, d), 1e-12);
      std::set<std::string> distinct(docs[d].begin(), docs[d].end());
      EXPECT_EQ(s[d].size(), distinct.size());
    }
  }
}

TEST(TfIdf, RawCountMode) {
  const auto s = compute_tfidf({{"a", "a", "b"}, {"a", "c"}}, TfMode::RawCount);
  EXPECT_NEAR(s[0].at("a"), 2.0, 1e-12);
}

TEST(Extract, DisjointUniformTokensComeOutLexicographically) {
  ExplanationSet set{{hand(0, {"zed"}, "A", "A", 1), hand(1, {"alpha"}, "A", "A", 1), hand(2, {"mid"}, "A", "A", 1),
                      hand(3, {"yy"}, "B", "B", 1), hand(4, {"bb"}, "B", "B", 1)}};
  const auto f = extract_global_features(filter_explanations(set), {"A", "B"});
  EXPECT_EQ(tokens_of(f.for_label("A")), (std::vector<std::string>{"alpha", "mid", "zed"}));
  EXPECT_EQ(tokens_of(f.for_label("B")), (std::vector<std::string>{"bb", "yy"}));
}

TEST(Extract, TopNBoundsEachList) {
  std::vector<Explanation> all;
  for (std::int64_t i = 0; i < 40; ++i) all.push_back(hand(i, {"t" + std::to_string(i)}, "A", "A", 1));
  all.push_back(hand(99, {"b"}, "B", "B", 1));
  const auto f = extract_global_features(filter_explanations(ExplanationSet{all}), {"A", "B"}, 20);
  EXPECT_EQ(f.for_label("A").features.size(), 20u);
  for (std::size_t i = 1; i < f.for_label("A").features.size(); ++i) {
    const auto& prev = f.for_label("A").features[i - 1];
    const auto& cur = f.for_label("A").features[i];
    EXPECT_TRUE(prev.score > cur.score || (prev.score == cur.score && prev.token < cur.token));
  }
}

TEST(Baseline, SharedFunctionWordsDominateWhenOneLabelIsASubset) {
  // Label A's text only uses tokens that B also uses; "mik" is rare in B.
  const std::vector<std::string> filler{"de", "het", "en", "van"};
  std::vector<Sentence> sents;
  std::int64_t id = 0;
  for (int i = 0; i < 20; ++i) sents.push_back({{"de", "het", "mik", "en", "van", "de"}, "A", id++});
  for (int i = 0; i < 20; ++i) sents.push_back({{"de", "het", "mi", "en", "van", "het"}, "B", id++});
  sents.push_back({{"de", "mik"}, "B", id++});
  const auto corpus = make_corpus(sents, {"A", "B"});
  const auto base = baseline_features(corpus, 3);

  std::vector<Explanation> all;
  for (const auto& s : corpus.sentences) {
    std::vector<std::string> toks = s.tokens;
    const auto marker = std::find(toks.begin(), toks.end(), s.label == "A" ? "mik" : "mi");
    if (marker != toks.end()) std::rotate(toks.begin(), marker, marker + 1);
    all.push_back(hand(s.id, toks, s.label, s.label, 1));
  }
  const auto ours = extract_global_features(filter_explanations(ExplanationSet{all}), {"A", "B"}, 3);

  auto shared_fraction = [&](const LabelFeatures& l) {
    if (l.features.empty()) return 0.0;
    double n = 0.0;
    for (const auto& f : l.features) n += std::count(filler.begin(), filler.end(), f.token) ? 1.0 : 0.0;
    return n / static_cast<double>(l.features.size());
  };
  EXPECT_GT(shared_fraction(base.for_label("A")), shared_fraction(ours.for_label("A")));
  EXPECT_EQ(tokens_of(ours.for_label("A")), (std::vector<std::string>{"mik"}));
}

TEST(Baseline, IdenticalDocumentsGiveIdenticalScores) {
  const auto corpus = make_corpus({{{"a", "b", "b"}, "A", 0}, {{"b", "a", "b"}, "B", 1}}, {"A", "B"});
  const auto f = baseline_features(corpus);
  ASSERT_EQ(f.labels.size(), 2u);
  EXPECT_EQ(f.labels[0].features, f.labels[1].features);
  EXPECT_EQ(f.provenance, Provenance::Baseline);
}

TEST(Features, JsonRoundTripAndSheet) {
  ExplanationSet set{{hand(0, {"zed", "q"}, "A", "A", 2), hand(1, {"alpha"}, "A", "A", 1), hand(2, {"yy"}, "B", "B", 1)}};
  const auto f = extract_global_features(filter_explanations(set), {"A", "B"});
  const auto dir = fixtures::scratch_dir("features");
  write_features_json(f, dir / "f.json");
  EXPECT_EQ(read_features_json(dir / "f.json"), f);
  EXPECT_EQ(feature_set_from_json(to_json(f)), f);

  const auto items = annotation_items(f, 13);
  EXPECT_EQ(items, annotation_items(f, 13));
  std::set<std::string> unique(items.begin(), items.end());
  EXPECT_EQ(unique, (std::set<std::string>{"alpha", "q", "yy", "zed"}));
  EXPECT_EQ(unique.size(), items.size());
  write_annotation_sheet(f, 13, dir / "sheet.tsv");
  const auto sheet = fixtures::read_text(dir / "sheet.tsv");
  EXPECT_EQ(sheet.find("0."), std::string::npos);
}
