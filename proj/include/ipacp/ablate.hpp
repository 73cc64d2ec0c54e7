#pragma once

// Ablation sweeps over one config axis, each variant trained and evaluated
// under the same seeds.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ipacp/config.hpp"
#include "ipacp/metrics.hpp"

namespace ipacp {

struct AblationVariant {
  std::string label;
  TrainConfig config;
};

/// Axes: tau, holes, pseudo_mode, loss_mode, component_flags.
std::vector<AblationVariant> ablation_variants(const TrainConfig& base, const std::string& axis);

struct AblationRow {
  std::string label;
  /// Test-set mean of each metric, one entry per seed.
  std::map<std::string, std::vector<double>> per_seed;
  /// Across-seed mean and population std of those means.
  std::map<std::string, MetricSummary> summary;
};

struct AblationTable {
  std::string axis;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
};

/// Trains and evaluates every variant for `base.seed` and `base.extra_seeds`,
/// writing each run under `<out_dir>/<axis>/<label>/seed_<s>/`.
AblationTable ablate(const TrainConfig& base, const std::string& axis);

nlohmann::json to_json(const AblationTable& table);
std::string to_csv(const AblationTable& table);
/// Writes `<stem>.json` and `<stem>.csv`.
void write_ablation(const AblationTable& table, const std::filesystem::path& stem);

}  // namespace ipacp
