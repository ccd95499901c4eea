#include "shibboleth/pipeline.hpp"

#include "shibboleth/extraction.hpp"
#include "shibboleth/metrics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>

namespace shibboleth {

namespace fs = std::filesystem;
using nlohmann::json;

MissingArtifactError::MissingArtifactError(const fs::path& path, std::string_view producer)
    : DataError(fmt::format("missing '{}'; run `shibboleth {}` first", path.string(), producer)) {}

ExitCode exit_code_for(const Error& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return ExitCode::Config;
  if (dynamic_cast<const DivergenceError*>(&error)) return ExitCode::Divergence;
  return ExitCode::Data;
}

SynthKind parse_synth_kind(std::string_view name) {
  if (name == "planted") return SynthKind::Planted;
  if (name == "suffix") return SynthKind::Suffix;
  throw ConfigError(fmt::format("unknown synthetic corpus kind '{}' (expected planted or suffix)", name));
}

std::string_view to_string(SynthKind kind) {
  return kind == SynthKind::Planted ? "planted" : "suffix";
}

// --- RunConfig ---------------------------------------------------------------

std::vector<Method> RunConfig::methods() const {
  if (method == "loo") return {Method::Loo};
  if (method == "intrinsic") return {Method::Intrinsic};
  if (method == "both") return {Method::Loo, Method::Intrinsic};
  throw ConfigError(fmt::format("unknown method '{}' (expected loo, intrinsic or both)", method));
}

void RunConfig::validate() const {
  const auto ms = methods();
  hp.validate();
  if (!hp.lil_enabled && std::find(ms.begin(), ms.end(), Method::Intrinsic) != ms.end()) {
    throw ConfigError(fmt::format("method '{}' needs the LIL head; set lil=true or method=loo", method));
  }
  if (k == 0) throw ConfigError("k must be at least 1");
  if (top_n == 0) throw ConfigError("top_n must be at least 1");
  if (explain_split != "test" && explain_split != "train") {
    throw ConfigError(fmt::format("explain split must be test or train, got '{}'", explain_split));
  }
  if (threads == 0) throw ConfigError("threads must be at least 1");
  for (auto kk : sufficiency_ks) {
    if (kk == 0) throw ConfigError("sufficiency k values must be at least 1");
  }
  if (train_path && data_path) {
    throw ConfigError("give either --train (with optional --test) or --data, not both");
  }
  if (test_path && !train_path) {
    throw ConfigError("--test needs --train");
  }
  if (data_path && !(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test fraction must lie in (0, 1), got {}", test_fraction));
  }
  if (synthetic()) {
    if (synth_kind == SynthKind::Planted) {
      synth.validate();
    } else {
      suffix_synth.validate();
    }
  }
  if (out_dir.empty()) throw ConfigError("output directory is empty");
  if (fs::exists(out_dir) && !fs::is_directory(out_dir)) {
    throw ConfigError(fmt::format("output path '{}' exists and is not a directory", out_dir.string()));
  }
}

namespace {

std::string join(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += xs[i];
  }
  return out;
}

} // namespace

std::map<std::string, std::string> RunConfig::echo() const {
  std::map<std::string, std::string> m;
  m["tokenizer"] = to_string(tokenizer);
  m["encoder"] = to_string(hp.encoder);
  m["embed_dim"] = std::to_string(hp.embed_dim);
  m["hidden_dim"] = std::to_string(hp.hidden_dim);
  m["epochs"] = std::to_string(hp.epochs);
  m["batch_size"] = std::to_string(hp.batch_size);
  m["lr"] = fmt::format("{}", hp.learning_rate);
  m["alpha1"] = fmt::format("{}", hp.alpha1);
  m["lil"] = hp.lil_enabled ? "true" : "false";
  m["positional"] = hp.positional ? "true" : "false";
  m["method"] = method;
  m["k"] = std::to_string(k);
  m["top_n"] = std::to_string(top_n);
  m["explain_split"] = explain_split;
  m["sufficiency_k"] = join(sufficiency_ks);
  if (gold_path) m["gold"] = gold_path->generic_string();
  if (synthetic()) {
    m["synth_kind"] = to_string(synth_kind);
    if (synth_kind == SynthKind::Planted) {
      m["synth_shared"] = std::to_string(synth.shared_vocab_size);
      m["synth_exclusive"] = std::to_string(synth.exclusive_per_label);
      m["synth_prob"] = fmt::format("{}", synth.shibboleth_prob);
      m["synth_min_len"] = std::to_string(synth.min_len);
      m["synth_max_len"] = std::to_string(synth.max_len);
      m["synth_train"] = std::to_string(synth.n_train);
      m["synth_test"] = std::to_string(synth.n_test);
      m["synth_labels"] = join(synth.labels);
    } else {
      m["synth_shared"] = std::to_string(suffix_synth.shared_vocab_size);
      m["synth_stems"] = std::to_string(suffix_synth.stems);
      m["synth_min_len"] = std::to_string(suffix_synth.min_len);
      m["synth_max_len"] = std::to_string(suffix_synth.max_len);
      m["synth_train"] = std::to_string(suffix_synth.n_train);
      m["synth_test"] = std::to_string(suffix_synth.n_test);
      m["synth_labels"] = join(suffix_synth.labels);
    }
  } else {
    if (train_path) m["train"] = train_path->generic_string();
    if (test_path) m["test"] = test_path->generic_string();
    if (data_path) {
      m["data"] = data_path->generic_string();
      m["test_fraction"] = fmt::format("{}", test_fraction);
    }
    if (format) m["format"] = to_string(*format);
  }
  return m;
}

std::map<std::string, std::uint64_t> RunConfig::seeds() const {
  std::map<std::string, std::uint64_t> m{{"model", hp.seed},
                                         {"split", split_seed},
                                         {"sufficiency", sufficiency_seed},
                                         {"sheet", sheet_seed}};
  if (synthetic()) {
    m["synth"] = synth_kind == SynthKind::Planted ? synth.seed : suffix_synth.seed;
  }
  return m;
}

// --- Artifacts ---------------------------------------------------------------

fs::path Artifacts::explanations(Method m) const {
  return dir / fmt::format("explanations_{}.jsonl", to_string(m));
}
fs::path Artifacts::features_tsv(Method m) const {
  return dir / fmt::format("features_{}.tsv", to_string(m));
}
fs::path Artifacts::features_json(Method m) const {
  return dir / fmt::format("features_{}.json", to_string(m));
}
fs::path Artifacts::pickup_tsv(Method m) const {
  return dir / fmt::format("pr_{}.tsv", to_string(m));
}
fs::path Artifacts::pickup_json(Method m) const {
  return dir / fmt::format("pr_{}.json", to_string(m));
}
fs::path Artifacts::annotation_sheet(Method m) const {
  return dir / fmt::format("annotation_sheet_{}.tsv", to_string(m));
}

// --- Stages ------------------------------------------------------------------

namespace {

void ensure_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw ConfigError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  }
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) {
      throw ConfigError(fmt::format("output directory '{}' is not writable", dir.string()));
    }
  }
  fs::remove(probe, ec);
}

const fs::path& require(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError(path, producer);
  }
  return path;
}

std::string_view corpus_producer(const RunConfig& config) {
  return config.synthetic() ? "synth" : "train";
}

TrainedModel load_trained(const RunConfig& config) {
  return load_model(require(Artifacts{config.out_dir}.model(), "train"));
}

ExplanationSet load_explanation_set(const RunConfig& config, Method m) {
  auto file = read_explanations(require(Artifacts{config.out_dir}.explanations(m), "explain"));
  for (const auto& e : file.explanations) {
    if (e.method != m) {
      throw DataError(fmt::format("explanation file for {} holds {} explanations", to_string(m),
                                  to_string(e.method)));
    }
  }
  return {std::move(file.explanations), std::move(file.split)};
}

std::vector<GoldFeature> load_gold(const RunConfig& config) {
  if (config.gold_path) {
    return load_gold_features(*config.gold_path);
  }
  const Artifacts a{config.out_dir};
  if (!fs::exists(a.gold_tsv())) {
    throw MissingArtifactError(a.gold_tsv(), "synth` or pass `--gold <file>");
  }
  return load_gold_features(a.gold_tsv());
}

void write_gold_tsv(const std::vector<GoldFeature>& gold, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << "# label\tkind\tpattern\n";
  for (const auto& g : gold) {
    out << g.label << '\t' << (g.kind == PatternKind::Word ? "word" : "suffix") << '\t' << g.pattern
        << '\n';
  }
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write '{}'", path.string()));
  }
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open '{}'", path.string()));
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
}

CorpusFormat format_for(const RunConfig& config, const fs::path& path) {
  return config.format ? *config.format : guess_corpus_format(path);
}

} // namespace

LabeledCorpus load_split(const RunConfig& config, const std::vector<std::string>& labels) {
  const Artifacts a{config.out_dir};
  const fs::path path = config.explain_split == "train" ? a.train_corpus() : a.test_corpus();
  return read_corpus_jsonl(require(path, corpus_producer(config)), labels);
}

void stage_synth(const RunConfig& config) {
  if (!config.synthetic()) {
    throw ConfigError("`synth` generates a synthetic corpus; drop --train/--data to use it");
  }
  ensure_output_dir(config.out_dir);
  const Artifacts a{config.out_dir};
  if (config.synth_kind == SynthKind::Planted) {
    const auto corpus = generate_synthetic(config.synth);
    write_corpus_jsonl(corpus.train, a.train_corpus());
    write_corpus_jsonl(corpus.test, a.test_corpus());
    write_gold_json(corpus.gold, a.gold_json());
    write_gold_tsv(gold_features_from_sets(corpus.gold), a.gold_tsv());
  } else {
    const auto corpus = generate_suffix_synthetic(config.suffix_synth);
    write_corpus_jsonl(corpus.train, a.train_corpus());
    write_corpus_jsonl(corpus.test, a.test_corpus());
    const auto& labels = config.suffix_synth.labels;
    write_gold_tsv({{labels[0], PatternKind::Suffix, "-et"}, {labels[1], PatternKind::Suffix, "-en"}},
                   a.gold_tsv());
  }
}

void stage_train(const RunConfig& config) {
  ensure_output_dir(config.out_dir);
  const Artifacts a{config.out_dir};
  LabeledCorpus train_corpus;
  if (config.train_path) {
    train_corpus = build_corpus(load_corpus(*config.train_path, format_for(config, *config.train_path)),
                                config.tokenizer);
    LabeledCorpus test_corpus;
    if (config.test_path) {
      test_corpus = build_corpus(load_corpus(*config.test_path, format_for(config, *config.test_path)),
                                 config.tokenizer, train_corpus.labels,
                                 static_cast<std::int64_t>(train_corpus.size()));
    } else {
      std::tie(train_corpus, test_corpus) = split(train_corpus, config.test_fraction, config.split_seed);
    }
    write_corpus_jsonl(train_corpus, a.train_corpus());
    write_corpus_jsonl(test_corpus, a.test_corpus());
  } else if (config.data_path) {
    const auto all = build_corpus(load_corpus(*config.data_path, format_for(config, *config.data_path)),
                                  config.tokenizer);
    auto [train_part, test_part] = split(all, config.test_fraction, config.split_seed);
    write_corpus_jsonl(train_part, a.train_corpus());
    write_corpus_jsonl(test_part, a.test_corpus());
    train_corpus = std::move(train_part);
  } else {
    train_corpus = read_corpus_jsonl(require(a.train_corpus(), "synth"));
  }
  save_model(train(train_corpus, config.hp), a.model());
}

void stage_explain(const RunConfig& config) {
  const auto methods = config.methods();
  const TrainedModel model = load_trained(config);
  const Artifacts a{config.out_dir};
  const auto corpus = load_split(config, model.labels());
  for (const auto m : methods) {
    if (m == Method::Intrinsic && !model.has_lil()) {
      throw UnsupportedMethodError("intrinsic explanations need a model trained with the LIL head");
    }
  }
  for (const auto m : methods) {
    const auto explanations = explain_corpus(model, corpus, m, config.k, config.threads);
    write_explanations(a.explanations(m), explanations, config.explain_split);
  }
}

void stage_extract(const RunConfig& config) {
  const TrainedModel model = load_trained(config);
  const Artifacts a{config.out_dir};
  for (const auto m : config.methods()) {
    const auto filtered = filter_explanations(load_explanation_set(config, m));
    const auto features = extract_global_features(filtered, model.labels(), config.top_n);
    write_features_tsv(features, a.features_tsv(m));
    write_features_json(features, a.features_json(m));
    write_annotation_sheet(features, config.sheet_seed, a.annotation_sheet(m));
  }
}

void stage_baseline(const RunConfig& config) {
  const Artifacts a{config.out_dir};
  const auto corpus = load_split(config, {});
  const auto features = baseline_features(corpus, config.top_n);
  write_features_tsv(features, a.baseline_tsv());
  write_features_json(features, a.baseline_json());
}

void stage_pickup(const RunConfig& config) {
  const auto gold = load_gold(config);
  const Artifacts a{config.out_dir};
  for (const auto m : config.methods()) {
    const auto explanations = load_explanation_set(config, m);
    RunConfig split_config = config;
    split_config.explain_split = explanations.split;
    const auto corpus = load_split(split_config, {});
    const auto report = pickup_rate(explanations, corpus, gold);
    write_pickup_tsv(report, a.pickup_tsv(m));
    write_json(to_json(report), a.pickup_json(m));
  }
}

void stage_sufficiency(const RunConfig& config) {
  const TrainedModel model = load_trained(config);
  const Artifacts a{config.out_dir};
  const Trainer trainer = make_trainer(config.hp);
  json results = json::array();
  for (const auto m : config.methods()) {
    const auto explanations = load_explanation_set(config, m);
    for (const auto kk : config.sufficiency_ks) {
      results.push_back(to_json(sufficiency(trainer, explanations, kk, config.sufficiency_seed, model.labels())));
    }
  }
  write_json(results, a.sufficiency());
}

ReportBundle stage_report(const RunConfig& config) {
  const Artifacts a{config.out_dir};
  const TrainedModel model = load_trained(config);
  ReportInputs in;
  in.config = config.echo();
  in.seeds = config.seeds();
  in.accuracy = evaluate_accuracy(model, read_corpus_jsonl(require(a.test_corpus(), corpus_producer(config)),
                                                           model.labels()));
  for (const auto m : config.methods()) {
    const std::string name(to_string(m));
    if (fs::exists(a.features_json(m))) {
      in.features.emplace(name, read_features_json(a.features_json(m)));
    }
    if (fs::exists(a.pickup_json(m))) {
      in.pickup.emplace(name, pickup_from_json(read_json(a.pickup_json(m))));
    }
  }
  if (fs::exists(a.baseline_json())) {
    in.baseline = read_features_json(a.baseline_json());
  }
  if (fs::exists(a.sufficiency())) {
    const auto methods = config.methods();
    for (const auto& r : read_json(a.sufficiency())) {
      auto result = sufficiency_from_json(r);
      if (std::find(methods.begin(), methods.end(), result.method) != methods.end()) {
        in.sufficiency.push_back(result);
      }
    }
  }
  if (config.synthetic() && config.synth_kind == SynthKind::Planted && fs::exists(a.gold_json())) {
    const auto gold = read_gold_json(a.gold_json());
    auto recovery = [&](const FeatureSet& features) {
      std::map<std::string, double> per_label;
      for (const auto& [label, tokens] : gold) {
        per_label[label] = recovery_rate(features.for_label(label), tokens);
      }
      return per_label;
    };
    for (const auto& [name, features] : in.features) {
      in.gold_recovery[name] = recovery(features);
    }
    if (in.baseline) {
      in.gold_recovery["baseline"] = recovery(*in.baseline);
    }
  }
  auto bundle = assemble_report(in);
  bundle.write(a.report());
  return bundle;
}

// --- Orchestration -----------------------------------------------------------

namespace {

template <typename E>
[[noreturn]] void rethrow_in_stage(std::string_view stage, const E& e) {
  throw E(fmt::format("stage '{}': {}", stage, e.what()));
}

void write_failed_marker(const fs::path& dir, std::string_view stage, std::string_view what) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out(dir / "FAILED", std::ios::binary);
  out << "stage: " << stage << '\n' << "error: " << what << '\n';
}

void run_stage(const RunConfig& config, std::string_view stage, const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    write_failed_marker(config.out_dir, stage, e.what());
    if (dynamic_cast<const UnsupportedMethodError*>(&e)) {
      rethrow_in_stage(stage, static_cast<const UnsupportedMethodError&>(e));
    }
    if (dynamic_cast<const ConfigError*>(&e)) rethrow_in_stage(stage, static_cast<const ConfigError&>(e));
    if (dynamic_cast<const DivergenceError*>(&e)) {
      rethrow_in_stage(stage, static_cast<const DivergenceError&>(e));
    }
    rethrow_in_stage(stage, DataError(e.what()));
  } catch (const std::exception& e) {
    write_failed_marker(config.out_dir, stage, e.what());
    rethrow_in_stage(stage, DataError(e.what()));
  }
}

} // namespace

ReportBundle run_pipeline(const RunConfig& config) {
  config.validate();
  ensure_output_dir(config.out_dir);
  std::error_code ec;
  fs::remove(Artifacts{config.out_dir}.failed_marker(), ec);

  if (config.synthetic()) {
    run_stage(config, "synth", [&] { stage_synth(config); });
  }
  run_stage(config, "train", [&] { stage_train(config); });
  run_stage(config, "explain", [&] { stage_explain(config); });
  run_stage(config, "extract", [&] { stage_extract(config); });
  run_stage(config, "baseline", [&] { stage_baseline(config); });
  if (config.gold_path || config.synthetic()) {
    run_stage(config, "pr", [&] { stage_pickup(config); });
  }
  if (!config.sufficiency_ks.empty()) {
    run_stage(config, "sufficiency", [&] { stage_sufficiency(config); });
  }
  ReportBundle bundle;
  run_stage(config, "report", [&] { bundle = stage_report(config); });
  return bundle;
}

} // namespace shibboleth
