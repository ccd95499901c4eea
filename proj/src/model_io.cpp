#include "shibboleth/model.hpp"

#include "shibboleth/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>

namespace shibboleth {

using nlohmann::json;

std::string vocab_hash(const Vocabulary& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& token : vocab.tokens()) {
    for (unsigned char c : token) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

namespace {

json hyperparams_json(const Hyperparams& hp) {
  return {
      {"encoder", std::string(to_string(hp.encoder))},
      {"embed_dim", hp.embed_dim},
      {"hidden_dim", hp.hidden_dim},
      {"epochs", hp.epochs},
      {"batch_size", hp.batch_size},
      {"learning_rate", hp.learning_rate},
      {"alpha1", hp.alpha1},
      {"lil_enabled", hp.lil_enabled},
      {"positional", hp.positional},
      {"seed", hp.seed},
  };
}

Hyperparams hyperparams_from(const json& j) {
  Hyperparams hp;
  hp.encoder = parse_encoder(j.at("encoder").get<std::string>());
  hp.embed_dim = j.at("embed_dim").get<std::size_t>();
  hp.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.batch_size = j.at("batch_size").get<std::size_t>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.alpha1 = j.at("alpha1").get<double>();
  hp.lil_enabled = j.at("lil_enabled").get<bool>();
  hp.positional = j.at("positional").get<bool>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

} // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "shibboleth-model";
  doc["version"] = kModelFormatVersion;
  doc["hyperparams"] = hyperparams_json(model.hyperparams());
  doc["labels"] = model.labels();
  doc["vocab"] = model.vocab().tokens();
  doc["vocab_hash"] = vocab_hash(model.vocab());
  json params = json::array();
  const auto values = model.parameters();
  for (const auto& b : model.blocks()) {
    params.push_back({{"name", b.name},
                      {"shape", {b.rows, b.cols}},
                      {"values", std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                     values.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()))}});
  }
  doc["parameters"] = std::move(params);
  json log = json::array();
  for (const auto& e : model.training_log()) {
    log.push_back({{"epoch", e.epoch}, {"total_loss", e.total_loss}, {"mean_loss", e.mean_loss}});
  }
  doc["training_log"] = std::move(log);

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write model file '{}'", path.string()));
  }
  out << doc.dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open model file '{}'", path.string()));
  }
  try {
    const json doc = json::parse(in);
    if (doc.value("format", "") != "shibboleth-model") {
      throw DataError("not a model file");
    }
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError(fmt::format("unsupported model format version {}", version));
    }
    Vocabulary vocab(doc.at("vocab").get<std::vector<std::string>>());
    if (vocab_hash(vocab) != doc.at("vocab_hash").get<std::string>()) {
      throw DataError("vocabulary hash mismatch");
    }
    TrainedModel model(hyperparams_from(doc.at("hyperparams")),
                       doc.at("labels").get<std::vector<std::string>>(), std::move(vocab));
    const auto& params = doc.at("parameters");
    if (params.size() != model.blocks().size()) {
      throw DataError("parameter block count does not match hyperparameters");
    }
    auto dst = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& b = model.blocks()[i];
      const auto& p = params[i];
      const auto shape = p.at("shape").get<std::vector<std::size_t>>();
      if (p.at("name").get<std::string>() != b.name || shape.size() != 2 || shape[0] != b.rows ||
          shape[1] != b.cols) {
        throw DataError(fmt::format("parameter block '{}' has unexpected name or shape", b.name));
      }
      const auto values = p.at("values").get<std::vector<double>>();
      if (values.size() != b.size()) {
        throw DataError(fmt::format("parameter block '{}' has {} values, expected {}", b.name,
                                    values.size(), b.size()));
      }
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (!std::isfinite(values[k])) {
          throw DataError(fmt::format("parameter block '{}' contains a non-finite value", b.name));
        }
        dst[b.offset + k] = values[k];
      }
    }
    for (const auto& e : doc.value("training_log", json::array())) {
      model.training_log().push_back({e.at("epoch").get<std::size_t>(), e.at("total_loss").get<double>(),
                                      e.at("mean_loss").get<double>()});
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed model file: {}", path.string(), e.what()));
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

} // namespace shibboleth
