#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

// Directory of the versioned fixture set.
std::filesystem::path dir();
std::filesystem::path path(const std::string& relative);
std::string read_text(const std::filesystem::path& p);

std::filesystem::path schema_path();
std::filesystem::path cli_path();

// Fresh empty directory under the system temp directory.
std::filesystem::path scratch_dir(const std::string& tag);

// Runs the CLI with `args`, stdout/stderr captured into `output`. Returns the
// exit status.
int run_cli(const std::vector<std::string>& args, std::string* output = nullptr,
            const std::string& env_prefix = "");

}  // namespace fixtures

#include "shibboleth/model.hpp"

namespace fixtures {

struct Verdict {
  bool passed = true;
  std::vector<std::string> diff;  // one line per mismatch
};

// Runs the operation a fixture covers on its inputs and compares with the
// stored expectations. Names: tfidf_toy, loo_linear, pr_tables/ofl,
// pr_tables/de_nl. Throws shibboleth::DataError for an unknown or missing
// fixture.
Verdict verify_fixture(const std::string& name);

// The pr_tables check on an arbitrary directory with the same layout.
Verdict verify_pr_table(const std::filesystem::path& dir);

// The hand-set bag-of-embeddings model of loo_linear.
shibboleth::TrainedModel linear_model();

}  // namespace fixtures
