#include "fixtures.hpp"

#include "shibboleth/attribution.hpp"
#include "shibboleth/error.hpp"
#include "shibboleth/extraction.hpp"
#include "shibboleth/metrics.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <cmath>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <sys/wait.h>
#include <unistd.h>

namespace fixtures {

namespace fs = std::filesystem;

fs::path dir() { return SHIBBOLETH_FIXTURE_DIR; }
fs::path path(const std::string& relative) { return dir() / relative; }
fs::path schema_path() { return SHIBBOLETH_SCHEMA_PATH; }
fs::path cli_path() { return SHIBBOLETH_CLI_PATH; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path d = fs::temp_directory_path() /
                     ("shibboleth-test-" + std::to_string(::getpid()) + "-" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::string* output, const std::string& env_prefix) {
  std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
  cmd += quote(cli_path().string());
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string text;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) text.append(buf, n);
  const int status = ::pclose(pipe);
  if (output) *output = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

namespace {

using nlohmann::json;
namespace sb = shibboleth;

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

void near(Verdict& v, const std::string& what, double got, double want, double tol) {
  if (!(std::abs(got - want) <= tol)) {
    v.passed = false;
    v.diff.push_back(fmt::format("{}: got {:.17g}, expected {:.17g} (tolerance {:g})", what, got, want, tol));
  }
}

template <class T>
void same(Verdict& v, const std::string& what, const T& got, const T& want) {
  if (!(got == want)) {
    v.passed = false;
    v.diff.push_back(fmt::format("{}: got {}, expected {}", what, got, want));
  }
}

Verdict tfidf_toy(const fs::path& d) {
  const auto docs = read_json(d / "input.json").at("documents").get<std::vector<std::vector<std::string>>>();
  const auto expected = read_json(d / "expected.json");
  const double tol = expected.at("tolerance").get<double>();
  const auto scores = sb::compute_tfidf(docs);
  Verdict v;
  std::size_t checked = 0;
  for (const auto& e : expected.at("scores")) {
    const auto doc = e.at("document").get<std::size_t>();
    const auto term = e.at("term").get<std::string>();
    const auto it = scores.at(doc).find(term);
    if (it == scores.at(doc).end()) {
      v.passed = false;
      v.diff.push_back(fmt::format("document {}: no score for '{}'", doc, term));
      continue;
    }
    near(v, fmt::format("tfidf('{}', d{})", term, doc), it->second, e.at("score").get<double>(), tol);
    ++checked;
  }
  std::size_t produced = 0;
  for (const auto& m : scores) produced += m.size();
  same(v, "number of scored terms", produced, checked);
  return v;
}

Verdict loo_linear(const fs::path& d) {
  const auto model = linear_model();
  const auto expected = read_json(d / "expected.json");
  const double tol = expected.at("tolerance").get<double>();
  Verdict v;
  std::int64_t id = 0;
  for (const auto& e : expected.at("sentences")) {
    const sb::Sentence s{e.at("tokens").get<std::vector<std::string>>(), model.labels()[0], id++};
    const auto pred = sb::predict(model, s);
    same(v, fmt::format("sentence {} prediction", s.id), pred.label, e.at("predicted").get<std::string>());
    for (std::size_t c = 0; c < 2; ++c) {
      near(v, fmt::format("sentence {} p[{}]", s.id, c), pred.distribution[c], e.at("probs").at(c).get<double>(),
           tol);
    }
    const auto rel = sb::loo_attribute(model, s);
    const auto want = e.at("scores").get<std::vector<double>>();
    same(v, fmt::format("sentence {} score count", s.id), rel.size(), want.size());
    for (std::size_t i = 0; i < std::min(rel.size(), want.size()); ++i) {
      near(v, fmt::format("sentence {} r[{}]", s.id, i), rel[i].score, want[i], tol);
    }
  }
  return v;
}

}  // namespace

Verdict verify_pr_table(const fs::path& d) {
  const auto file = sb::read_explanations(d / "explanations_loo.jsonl");
  const sb::ExplanationSet set{file.explanations, file.split};
  const auto corpus = sb::read_corpus_jsonl(d / "test.jsonl");
  const auto gold = sb::load_gold_features(d / "gold.tsv");
  const auto report = sb::pickup_rate(set, corpus, gold);
  const auto expected = read_json(d / "expected.json");
  Verdict v;
  const auto classes = expected.at("classes").get<std::vector<std::string>>();
  same(v, "classes", fmt::format("{}", fmt::join(report.classes, ",")), fmt::format("{}", fmt::join(classes, ",")));
  same(v, "rows", report.rows.size(), expected.at("rows").size());
  for (std::size_t r = 0; r < std::min(report.rows.size(), expected.at("rows").size()); ++r) {
    const auto& got = report.rows[r];
    const auto& want = expected.at("rows").at(r);
    const auto name = want.at("pattern").get<std::string>();
    same(v, name + " pattern", got.feature.pattern, name);
    same(v, name + " label", got.feature.label, want.at("label").get<std::string>());
    same(v, name + " text count", got.corpus_count, want.at("text").get<std::size_t>());
    for (std::size_t c = 0; c < classes.size() && c < got.rates.size(); ++c) {
      same(v, fmt::format("{} e_g[{}]", name, classes[c]), got.explanation_counts[c],
           want.at("exp").at(c).get<std::size_t>());
      const auto& pr = want.at("pr").at(c);
      same(v, fmt::format("{} PR[{}]", name, classes[c]), sb::format_percent(got.rates[c]),
           pr.is_null() ? std::string("n/a") : pr.get<std::string>());
    }
  }
  return v;
}

sb::TrainedModel linear_model() {
  const auto j = read_json(path("loo_linear/model.json"));
  sb::Hyperparams hp;
  hp.encoder = sb::EncoderKind::BagOfEmbeddings;
  hp.embed_dim = hp.hidden_dim = j.at("embed_dim").get<std::size_t>();
  hp.lil_enabled = false;
  sb::TrainedModel m(hp, j.at("labels").get<std::vector<std::string>>(),
                     sb::Vocabulary(j.at("vocab").get<std::vector<std::string>>()));
  auto fill = [&](const char* block, const json& rows) {
    auto view = m.view(block);
    for (Eigen::Index r = 0; r < view.rows(); ++r) {
      for (Eigen::Index c = 0; c < view.cols(); ++c) {
        view(r, c) = rows.at(r).is_array() ? rows.at(r).at(c).get<double>() : rows.at(r).get<double>();
      }
    }
  };
  fill("embedding", j.at("embedding"));
  fill("head_w", j.at("head_w"));
  fill("head_b", j.at("head_b"));
  return m;
}

Verdict verify_fixture(const std::string& name) {
  const fs::path d = path(name);
  if (!fs::is_directory(d)) {
    throw sb::DataError(fmt::format("no fixture named '{}' under {}", name, dir().string()));
  }
  if (name == "tfidf_toy") return tfidf_toy(d);
  if (name == "loo_linear") return loo_linear(d);
  if (name.rfind("pr_tables/", 0) == 0) return verify_pr_table(d);
  throw sb::DataError(fmt::format("fixture '{}' has no verifier", name));
}

}  // namespace fixtures
