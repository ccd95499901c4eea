#include "shibboleth/report.hpp"

#include "shibboleth/error.hpp"
#include "shibboleth/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace shibboleth {

using nlohmann::json;

std::string ReportBundle::dump() const {
  return document.dump(2) + "\n";
}

void ReportBundle::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write report '{}'", path.string()));
  }
  out << dump();
}

ReportBundle read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open report '{}'", path.string()));
  }
  try {
    return ReportBundle{json::parse(in)};
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: malformed report: {}", path.string(), e.what()));
  }
}

double recovery_rate(const LabelFeatures& features, const std::vector<std::string>& gold) {
  if (gold.empty()) {
    return 0.0;
  }
  std::size_t found = 0;
  for (const auto& g : gold) {
    if (std::any_of(features.features.begin(), features.features.end(),
                    [&](const ScoredToken& f) { return f.token == g; })) {
      ++found;
    }
  }
  return static_cast<double>(found) / static_cast<double>(gold.size());
}

ReportBundle assemble_report(const ReportInputs& in) {
  if (!in.accuracy && in.sufficiency.empty() && in.pickup.empty() && in.features.empty() &&
      !in.baseline) {
    throw ConfigError("a report needs at least one result");
  }
  json doc;
  doc["schema"] = "shibboleth-report";
  doc["schema_version"] = kReportSchemaVersion;
  doc["versions"] = {{"tool", std::string(kToolVersion)},
                     {"model_format", kModelFormatVersion}};
  doc["config"] = in.config;
  doc["seeds"] = in.seeds;
  doc["accuracy"] = in.accuracy ? json(*in.accuracy) : json(nullptr);
  doc["accuracy_pct"] = in.accuracy ? json(std::round(*in.accuracy * 1000.0) / 10.0) : json(nullptr);

  json suff = json::array();
  for (const auto& r : in.sufficiency) {
    suff.push_back(to_json(r));
  }
  doc["sufficiency"] = std::move(suff);

  json pickup = json::object();
  for (const auto& [method, report] : in.pickup) {
    pickup[method] = to_json(report);
  }
  doc["pickup"] = std::move(pickup);

  json features = json::object();
  for (const auto& [method, fs] : in.features) {
    features[method] = to_json(fs);
  }
  doc["features"] = std::move(features);
  doc["baseline"] = in.baseline ? to_json(*in.baseline) : json(nullptr);
  doc["gold_recovery"] = in.gold_recovery;
  return ReportBundle{std::move(doc)};
}

} // namespace shibboleth
