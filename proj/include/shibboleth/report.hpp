#pragma once

#include "shibboleth/extraction.hpp"
#include "shibboleth/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shibboleth {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct ReportInputs {
  std::map<std::string, std::string> config;  // echoed verbatim
  std::map<std::string, std::uint64_t> seeds;
  std::optional<double> accuracy;
  std::vector<SufficiencyResult> sufficiency;
  std::map<std::string, PickupReport> pickup;  // keyed by method
  std::map<std::string, FeatureSet> features;  // keyed by method
  std::optional<FeatureSet> baseline;
  // Fraction of each label's planted tokens found in a feature list, keyed
  // by feature-list name then label. Only for synthetic runs.
  std::map<std::string, std::map<std::string, double>> gold_recovery;
};

struct ReportBundle {
  nlohmann::json document;

  // Canonical serialisation: sorted keys, two-space indent, trailing newline.
  std::string dump() const;
  void write(const std::filesystem::path& path) const;
};

// Throws ConfigError when no result is present.
ReportBundle assemble_report(const ReportInputs& inputs);
ReportBundle read_report(const std::filesystem::path& path);

// Fraction of `gold` tokens present in `features`.
double recovery_rate(const LabelFeatures& features, const std::vector<std::string>& gold);

} // namespace shibboleth
