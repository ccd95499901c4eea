#include "shibboleth/attribution.hpp"

#include "shibboleth/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

namespace shibboleth {

using nlohmann::json;

Method parse_method(std::string_view name) {
  if (name == "loo") return Method::Loo;
  if (name == "intrinsic") return Method::Intrinsic;
  throw ConfigError(fmt::format("unknown attribution method '{}' (expected loo or intrinsic)", name));
}

std::string_view to_string(Method method) {
  return method == Method::Loo ? "loo" : "intrinsic";
}

std::vector<std::string> Explanation::top_k_tokens() const {
  std::vector<std::string> out;
  out.reserve(top_k.size());
  for (auto i : top_k) {
    out.push_back(relevances.at(i).token);
  }
  return out;
}

namespace {

struct Attributed {
  std::vector<TokenRelevance> relevances;
  std::size_t predicted = 0;
};

Attributed loo_scores(const TrainedModel& model, const Sentence& sentence) {
  const auto ids = model.encode_ids(sentence.tokens);
  const Distribution full = predict_ids(model, ids);
  const std::size_t predicted = full.argmax();

  Attributed result{{}, predicted};
  auto& out = result.relevances;
  out.reserve(sentence.tokens.size());
  std::vector<std::size_t> ablated;
  ablated.reserve(ids.size());
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    ablated.assign(ids.begin(), ids.end());
    ablated.erase(ablated.begin() + static_cast<std::ptrdiff_t>(i + 1));
    const Distribution without = predict_ids(model, ablated);
    out.push_back({sentence.tokens[i], i, full[predicted] - without[predicted]});
  }
  return result;
}

Attributed intrinsic_scores(const TrainedModel& model, const Sentence& sentence, bool use_gold) {
  if (!model.has_lil()) {
    throw UnsupportedMethodError(
        "intrinsic attribution needs a model trained with the LIL head (lil_enabled)");
  }
  const auto ids = model.encode_ids(sentence.tokens);
  const RowMatrix u = encode(model, ids);
  const Distribution full = classify(model, u.row(0).transpose());

  std::size_t target = full.argmax();
  const auto& labels = model.labels();
  if (use_gold) {
    const auto it = std::find(labels.begin(), labels.end(), sentence.label);
    if (it != labels.end()) {
      target = static_cast<std::size_t>(it - labels.begin());
    }
  }

  Attributed result{{}, full.argmax()};
  auto& out = result.relevances;
  out.reserve(sentence.tokens.size());
  for (std::size_t j = 0; j < sentence.tokens.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j + 1);
    const Distribution s = lil_distribution(model, u.row(0).transpose(), u.row(row).transpose());
    out.push_back({sentence.tokens[j], j, full[target] - s[target]});
  }
  return result;
}

} // namespace

std::vector<TokenRelevance> loo_attribute(const TrainedModel& model, const Sentence& sentence) {
  return loo_scores(model, sentence).relevances;
}

std::vector<TokenRelevance> intrinsic_attribute(const TrainedModel& model, const Sentence& sentence,
                                                bool use_gold) {
  return intrinsic_scores(model, sentence, use_gold).relevances;
}

std::vector<std::size_t> top_k(std::span<const TokenRelevance> relevances, std::size_t k) {
  std::vector<std::size_t> order(relevances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return relevances[a].score > relevances[b].score;
  });
  order.resize(std::min(k, order.size()));
  std::vector<std::size_t> positions;
  positions.reserve(order.size());
  for (auto i : order) {
    positions.push_back(relevances[i].index);
  }
  return positions;
}

Explanation explain(const TrainedModel& model, const Sentence& sentence, Method method, std::size_t k) {
  if (k < 1) {
    throw ConfigError("k must be at least 1");
  }
  Explanation e;
  e.sentence_id = sentence.id;
  e.gold_label = sentence.label;
  e.method = method;
  auto scored = method == Method::Loo ? loo_scores(model, sentence)
                                      : intrinsic_scores(model, sentence, true);
  e.predicted_label = model.labels()[scored.predicted];
  e.relevances = std::move(scored.relevances);
  e.top_k = top_k(e.relevances, k);
  return e;
}

std::vector<Explanation> explain_corpus(const TrainedModel& model, const LabeledCorpus& corpus,
                                        Method method, std::size_t k, std::size_t threads) {
  if (method == Method::Intrinsic && !model.has_lil()) {
    throw UnsupportedMethodError(
        "intrinsic attribution needs a model trained with the LIL head (lil_enabled)");
  }
  std::vector<Explanation> out(corpus.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, corpus.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      out[i] = explain(model, corpus.sentences[i], method, k);
    }
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < corpus.size(); i += threads) {
            out[i] = explain(model, corpus.sentences[i], method, k);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// --- JSONL -------------------------------------------------------------------

void write_explanations(const std::filesystem::path& path, std::span<const Explanation> explanations,
                        std::string_view split_tag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write explanations to '{}'", path.string()));
  }
  // Built by hand so scores keep a fixed 9-digit rendering.
  for (const auto& e : explanations) {
    out << "{\"sentence_id\":" << e.sentence_id << ",\"gold\":" << json(e.gold_label).dump()
        << ",\"pred\":" << json(e.predicted_label).dump() << ",\"method\":\"" << to_string(e.method)
        << "\",\"split\":" << json(std::string(split_tag)).dump() << ",\"tokens\":[";
    for (std::size_t i = 0; i < e.relevances.size(); ++i) {
      const auto& r = e.relevances[i];
      out << (i ? "," : "") << "{\"t\":" << json(r.token).dump() << ",\"i\":" << r.index
          << ",\"score\":" << fmt::format("{:.9f}", r.score) << "}";
    }
    out << "],\"top_k\":[";
    for (std::size_t i = 0; i < e.top_k.size(); ++i) {
      const auto pos = e.top_k[i];
      out << (i ? "," : "") << "{\"t\":" << json(e.relevances.at(pos).token).dump()
          << ",\"i\":" << pos << "}";
    }
    out << "]}\n";
  }
}

ExplanationFile read_explanations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open explanation file '{}'", path.string()));
  }
  ExplanationFile file;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const json j = json::parse(line);
      Explanation e;
      e.sentence_id = j.at("sentence_id").get<std::int64_t>();
      e.gold_label = j.at("gold").get<std::string>();
      e.predicted_label = j.at("pred").get<std::string>();
      e.method = parse_method(j.at("method").get<std::string>());
      const auto split = j.value("split", std::string("test"));
      if (first) {
        file.split = split;
        first = false;
      }
      for (const auto& t : j.at("tokens")) {
        e.relevances.push_back(
            {t.at("t").get<std::string>(), t.at("i").get<std::size_t>(), t.at("score").get<double>()});
      }
      for (std::size_t i = 0; i < e.relevances.size(); ++i) {
        if (e.relevances[i].index != i) {
          throw DataError("token indices must be 0..n-1 in order");
        }
      }
      for (const auto& t : j.at("top_k")) {
        const auto pos = t.at("i").get<std::size_t>();
        if (pos >= e.relevances.size() || e.relevances[pos].token != t.at("t").get<std::string>()) {
          throw DataError("top_k entry does not match the token list");
        }
        e.top_k.push_back(pos);
      }
      file.explanations.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(fmt::format("{}: line {}: malformed explanation: {}", path.string(), lineno, ex.what()));
    } catch (const DataError& ex) {
      throw DataError(fmt::format("{}: line {}: {}", path.string(), lineno, ex.what()));
    }
  }
  return file;
}

} // namespace shibboleth
