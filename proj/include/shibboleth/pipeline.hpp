#pragma once

// End-to-end orchestration. Every stage reads its inputs from and writes its
// outputs to one output directory, so any stage can be re-run on its own.

#include "shibboleth/attribution.hpp"
#include "shibboleth/corpus.hpp"
#include "shibboleth/error.hpp"
#include "shibboleth/model.hpp"
#include "shibboleth/report.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shibboleth {

// A stage input is absent. The message names the subcommand producing it.
class MissingArtifactError : public DataError {
public:
  MissingArtifactError(const std::filesystem::path& path, std::string_view producer);
};

enum class ExitCode : int { Ok = 0, Config = 2, Data = 3, Divergence = 4 };
// Config for ConfigError, Divergence for DivergenceError, Data otherwise.
ExitCode exit_code_for(const Error& error);

enum class SynthKind { Planted, Suffix };
SynthKind parse_synth_kind(std::string_view name);
std::string_view to_string(SynthKind kind);

struct RunConfig {
  // Data: either `train_path` (+ optional `test_path`), or `data_path` split
  // with `test_fraction`. With none of them, a synthetic corpus is generated.
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> data_path;
  std::optional<CorpusFormat> format;  // guessed from the extension when unset
  double test_fraction = 0.2;
  Tokenizer tokenizer = Tokenizer::Whitespace;

  SynthKind synth_kind = SynthKind::Planted;
  SynthConfig synth;
  SuffixSynthConfig suffix_synth;

  Hyperparams hp;
  std::string method = "both";  // loo | intrinsic | both
  std::size_t k = kDefaultTopK;
  std::size_t top_n = 20;
  std::optional<std::filesystem::path> gold_path;
  std::string explain_split = "test";  // test | train
  std::vector<std::size_t> sufficiency_ks{1, 3, 5};
  std::size_t threads = 1;

  std::filesystem::path out_dir = "shibboleth_out";

  std::uint64_t split_seed = 7;
  std::uint64_t sufficiency_seed = 11;
  std::uint64_t sheet_seed = 13;

  bool synthetic() const { return !train_path && !data_path; }
  std::vector<Method> methods() const;

  // Throws ConfigError.
  void validate() const;
  // Flat key -> value echo used in the report. The output directory is
  // a location rather than a setting and is left out.
  std::map<std::string, std::string> echo() const;
  std::map<std::string, std::uint64_t> seeds() const;
};

// File names inside the output directory.
struct Artifacts {
  std::filesystem::path dir;

  std::filesystem::path train_corpus() const { return dir / "train.jsonl"; }
  std::filesystem::path test_corpus() const { return dir / "test.jsonl"; }
  std::filesystem::path gold_json() const { return dir / "gold.json"; }
  std::filesystem::path gold_tsv() const { return dir / "gold.tsv"; }
  std::filesystem::path model() const { return dir / "model.json"; }
  std::filesystem::path explanations(Method m) const;
  std::filesystem::path features_tsv(Method m) const;
  std::filesystem::path features_json(Method m) const;
  std::filesystem::path baseline_tsv() const { return dir / "baseline_features.tsv"; }
  std::filesystem::path baseline_json() const { return dir / "baseline_features.json"; }
  std::filesystem::path pickup_tsv(Method m) const;
  std::filesystem::path pickup_json(Method m) const;
  std::filesystem::path sufficiency() const { return dir / "sufficiency.json"; }
  std::filesystem::path annotation_sheet(Method m) const;
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path failed_marker() const { return dir / "FAILED"; }
};

// Stages. Each returns normally or throws a shibboleth::Error.
void stage_synth(const RunConfig& config);
void stage_train(const RunConfig& config);
void stage_explain(const RunConfig& config);
void stage_extract(const RunConfig& config);
void stage_baseline(const RunConfig& config);
void stage_pickup(const RunConfig& config);
void stage_sufficiency(const RunConfig& config);
ReportBundle stage_report(const RunConfig& config);

// Runs every stage in order. On failure, writes FAILED (stage name and
// diagnostic) next to whatever was produced and rethrows with the stage name
// prefixed; a successful run removes a stale marker.
ReportBundle run_pipeline(const RunConfig& config);

// Loads the corpus of the split the explanations are produced from.
LabeledCorpus load_split(const RunConfig& config, const std::vector<std::string>& labels);

} // namespace shibboleth
