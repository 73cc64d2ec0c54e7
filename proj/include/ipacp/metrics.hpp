#pragma once

// Overlap and surface-distance metrics on binary masks, and the per-case
// report with Mean(Std) aggregation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipacp/volume.hpp"

namespace ipacp {

/// Raised by distance metrics when one mask is empty.
class UndefinedMetric : public std::domain_error {
 public:
  enum class Side { First, Second };
  UndefinedMetric(Side side, const std::string& what) : std::domain_error(what), side_(side) {}
  Side side() const { return side_; }

 private:
  Side side_;
};

/// Fractions in [0,1]; two empty masks score 1.
double dice_score(const BinaryMask& a, const BinaryMask& b);
double jaccard(const BinaryMask& a, const BinaryMask& b);
/// Voxelwise binary RMSE in percent.
double rmse(const BinaryMask& a, const BinaryMask& b);

/// Flat indices of foreground voxels with a background 6-neighbour, in
/// ascending order. Outside the grid counts as background.
std::vector<Eigen::Index> surface_voxels(const BinaryMask& m);

/// Exact squared Euclidean distance (mm²) from every voxel to the nearest
/// voxel of `features`. Voxels are infinitely far from an empty set.
Eigen::ArrayXd squared_distance_transform(const Dims& dims,
                                          const std::vector<Eigen::Index>& features,
                                          const Spacing& spacing);

/// Distances from each surface voxel of `from` to the surface of `to`, in
/// the order of surface_voxels(from).
std::vector<double> directed_surface_distances(const BinaryMask& from, const BinaryMask& to,
                                               const Spacing& spacing);

/// Element at nearest rank ceil(q n) of the ascending order.
double nearest_rank_percentile(std::vector<double> values, double q);

/// Both throw UndefinedMetric when exactly one mask is empty; two empty
/// masks give 0.
double hd95(const BinaryMask& a, const BinaryMask& b, const Spacing& spacing = {});
double asd(const BinaryMask& a, const BinaryMask& b, const Spacing& spacing = {});

struct CaseMetrics {
  std::string id;
  /// Dice, JA and RMSE in percent; distances in mm, absent when undefined.
  double dice = 0.0;
  double jaccard = 0.0;
  double rmse = 0.0;
  std::optional<double> hd95;
  std::optional<double> asd;
  std::string note;
};

CaseMetrics evaluate_case(const std::string& id, const BinaryMask& prediction,
                          const BinaryMask& reference, const Spacing& spacing = {});

struct MetricSummary {
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
  /// Number of cases where the metric is defined.
  int count = 0;
};

/// Summary of the defined values only.
MetricSummary summarize(const std::vector<double>& values);

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  nlohmann::json metadata = nlohmann::json::object();

  MetricSummary summary(const std::string& metric) const;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"dice", "jaccard", "rmse", "hd95", "asd"};
  return names;
}

std::optional<double> metric_value(const CaseMetrics& c, const std::string& metric);

nlohmann::json to_json(const MetricsReport& report);
/// One row per case, then "mean" and "std" rows; undefined cells stay empty.
std::string to_csv(const MetricsReport& report);
/// "Mean(Std)" with two decimals.
std::string mean_std_string(const MetricSummary& s);

/// Writes `<stem>.json` and `<stem>.csv`.
void write_report(const MetricsReport& report, const std::filesystem::path& stem);

}  // namespace ipacp
