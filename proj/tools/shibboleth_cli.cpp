// Command-line front end. Every flag can also be set in a key=value config
// file (`--config`); command-line values win over the file, the file wins
// over SHIBBOLETH_OUT for the output directory, and all of them win over the
// built-in defaults.

#include "shibboleth/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <string>

namespace sb = shibboleth;

namespace {

struct Flags {
  std::string train, test, data, format, gold, out = "shibboleth_out";
  std::string tokenizer = "whitespace";
  std::string encoder = "attention";
  std::string synth_kind = "planted";
  std::string synth_labels;
};

sb::RunConfig finish(sb::RunConfig cfg, const Flags& f, const CLI::App& app) {
  if (!f.train.empty()) cfg.train_path = f.train;
  if (!f.test.empty()) cfg.test_path = f.test;
  if (!f.data.empty()) cfg.data_path = f.data;
  if (!f.format.empty()) cfg.format = sb::parse_corpus_format(f.format);
  if (!f.gold.empty()) cfg.gold_path = f.gold;
  cfg.out_dir = f.out;
  cfg.tokenizer = sb::parse_tokenizer(f.tokenizer);
  cfg.hp.encoder = sb::parse_encoder(f.encoder);
  cfg.synth_kind = sb::parse_synth_kind(f.synth_kind);

  std::vector<std::string> labels;
  if (!f.synth_labels.empty()) {
    std::string current;
    for (char c : f.synth_labels + ",") {
      if (c == ',') {
        labels.push_back(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
  }
  if (cfg.synth_kind == sb::SynthKind::Planted) {
    if (!labels.empty()) cfg.synth.labels = labels;
    return cfg;
  }
  // The suffix generator shares the size, length and seed flags; only those
  // given explicitly replace its own defaults.
  auto given = [&](const char* name) { return app.get_option(name)->count() > 0; };
  auto& sx = cfg.suffix_synth;
  if (!labels.empty()) sx.labels = labels;
  if (given("--synth-shared")) sx.shared_vocab_size = cfg.synth.shared_vocab_size;
  if (given("--synth-min-len")) sx.min_len = cfg.synth.min_len;
  if (given("--synth-max-len")) sx.max_len = cfg.synth.max_len;
  if (given("--synth-train")) sx.n_train = cfg.synth.n_train;
  if (given("--synth-test")) sx.n_test = cfg.synth.n_test;
  if (given("--synth-seed")) sx.seed = cfg.synth.seed;
  return cfg;
}

void add_options(CLI::App& app, sb::RunConfig& cfg, Flags& f) {
  const auto* data = "Data";
  app.add_option("--train", f.train, "Training corpus (JSONL or TSV)")->group(data);
  app.add_option("--test", f.test, "Test corpus; without it --train is split")->group(data);
  app.add_option("--data", f.data, "Single corpus split into train/test")->group(data);
  app.add_option("--format", f.format, "Corpus format; guessed from the extension when unset")
      ->check(CLI::IsMember({"jsonl", "tsv"}))
      ->group(data);
  app.add_option("--test-fraction", cfg.test_fraction, "Held-out fraction when splitting")
      ->capture_default_str()
      ->group(data);
  app.add_option("--tokenizer", f.tokenizer, "whitespace or char")
      ->check(CLI::IsMember({"whitespace", "char"}))
      ->capture_default_str()
      ->group(data);
  app.add_option("--gold", f.gold, "Gold features TSV: label, word|suffix, pattern")->group(data);

  const auto* synth = "Synthetic corpus";
  app.add_option("--synth-kind", f.synth_kind, "planted (exclusive tokens) or suffix (-et/-en verbs)")
      ->check(CLI::IsMember({"planted", "suffix"}))
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-shared", cfg.synth.shared_vocab_size, "Shared vocabulary size")
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-exclusive", cfg.synth.exclusive_per_label, "Planted tokens per label")
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-prob", cfg.synth.shibboleth_prob, "Probability a sentence carries a planted token")
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-min-len", cfg.synth.min_len, "Minimum sentence length")
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-max-len", cfg.synth.max_len, "Maximum sentence length")
      ->capture_default_str()
      ->group(synth);
  app.add_option("--synth-train", cfg.synth.n_train, "Training sentences")->capture_default_str()->group(synth);
  app.add_option("--synth-test", cfg.synth.n_test, "Test sentences")->capture_default_str()->group(synth);
  app.add_option("--synth-seed", cfg.synth.seed, "Generator seed")->capture_default_str()->group(synth);
  app.add_option("--synth-labels", f.synth_labels, "Two comma-separated label names (A,B or C0,C1 by default)")
      ->group(synth);
  app.add_option("--synth-stems", cfg.suffix_synth.stems, "Verb stems of the suffix corpus")
      ->capture_default_str()
      ->group(synth);

  const auto* model = "Model";
  app.add_option("--encoder", f.encoder, "attention or bag")
      ->check(CLI::IsMember({"attention", "bag"}))
      ->capture_default_str()
      ->group(model);
  app.add_option("--embed-dim", cfg.hp.embed_dim, "Embedding size")->capture_default_str()->group(model);
  app.add_option("--hidden-dim", cfg.hp.hidden_dim, "Encoder output size")->capture_default_str()->group(model);
  app.add_option("--epochs", cfg.hp.epochs, "Training epochs")->capture_default_str()->group(model);
  app.add_option("--batch-size", cfg.hp.batch_size, "Minibatch size")->capture_default_str()->group(model);
  app.add_option("--lr", cfg.hp.learning_rate, "SGD learning rate")->capture_default_str()->group(model);
  app.add_option("--alpha1", cfg.hp.alpha1, "Weight of the LIL loss")->capture_default_str()->group(model);
  app.add_option("--lil", cfg.hp.lil_enabled, "Train the local interpretability layer (true|false)")
      ->capture_default_str()
      ->group(model);
  app.add_option("--positional", cfg.hp.positional, "Add sinusoidal positions (true|false)")
      ->capture_default_str()
      ->group(model);
  app.add_option("--seed", cfg.hp.seed, "Model initialisation and shuffling seed")
      ->capture_default_str()
      ->group(model);

  const auto* expl = "Explanations";
  app.add_option("--method", cfg.method, "loo, intrinsic or both")
      ->check(CLI::IsMember({"loo", "intrinsic", "both"}))
      ->capture_default_str()
      ->group(expl);
  app.add_option("--k", cfg.k, "Tokens kept per explanation")->capture_default_str()->group(expl);
  app.add_option("--top-n", cfg.top_n, "Global features per label")->capture_default_str()->group(expl);
  app.add_option("--explain-split", cfg.explain_split, "Split to explain: test or train")
      ->check(CLI::IsMember({"test", "train"}))
      ->capture_default_str()
      ->group(expl);
  app.add_option("--sufficiency-k", cfg.sufficiency_ks, "k values for the sufficiency check")
      ->delimiter(',')
      ->capture_default_str()
      ->group(expl);
  app.add_option("--threads", cfg.threads, "Worker threads for explain")->capture_default_str()->group(expl);

  const auto* run = "Run";
  app.add_option("--out", f.out, "Output directory")
      ->envname("SHIBBOLETH_OUT")
      ->capture_default_str()
      ->group(run);
  app.add_option("--split-seed", cfg.split_seed, "Seed of the train/test split")->capture_default_str()->group(run);
  app.add_option("--sufficiency-seed", cfg.sufficiency_seed, "Seed of the sufficiency hold-out split")
      ->capture_default_str()
      ->group(run);
  app.add_option("--sheet-seed", cfg.sheet_seed, "Seed of the annotation sheet order")
      ->capture_default_str()
      ->group(run);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialect shibboleth extraction: train, explain, extract, evaluate."};
  app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  sb::RunConfig cfg;
  Flags flags;
  add_options(app, cfg, flags);

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"run", "All stages in order: synth (when no data is given), train, explain, extract, baseline, pr, "
              "sufficiency, report"},
      {"synth", "Generate a synthetic corpus with gold features"},
      {"train", "Prepare the corpus and train the classifier"},
      {"explain", "Write token-level explanations for the chosen split"},
      {"extract", "Filter explanations and rank global features by TF-IDF"},
      {"baseline", "Rank features by TF-IDF over the raw text of each label"},
      {"pr", "Pick-up rates of gold features"},
      {"sufficiency", "Retrain on explanation tokens only and measure agreement"},
      {"report", "Assemble report.json from the artifacts present"},
  };
  for (const auto& c : commands) {
    app.add_subcommand(c.name, std::string(c.help) + " (all global options apply)")->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(sb::ExitCode::Config);
  }

  try {
    const sb::RunConfig config = finish(cfg, flags, app);
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "run") {
      sb::run_pipeline(config);
      std::cout << fmt::format("report written to {}\n", sb::Artifacts{config.out_dir}.report().string());
      return 0;
    }
    config.validate();
    if (command == "synth") sb::stage_synth(config);
    else if (command == "train") sb::stage_train(config);
    else if (command == "explain") sb::stage_explain(config);
    else if (command == "extract") sb::stage_extract(config);
    else if (command == "baseline") sb::stage_baseline(config);
    else if (command == "pr") sb::stage_pickup(config);
    else if (command == "sufficiency") sb::stage_sufficiency(config);
    else if (command == "report") sb::stage_report(config);
    return 0;
  } catch (const sb::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(sb::exit_code_for(e));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(sb::ExitCode::Data);
  }
}
