#pragma once

// Weak (spatial) and strong (intensity-only) augmentation families.
//
// Each entry point samples its operations from a seeded stream into an
// AugmentRecord and then replays that record, so replaying a stored record
// reproduces the output bit for bit.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipacp/volume.hpp"

namespace ipacp {

struct AugmentOp {
  std::string name;
  std::map<std::string, double> params;

  friend bool operator==(const AugmentOp&, const AugmentOp&) = default;
};

struct AugmentRecord {
  std::uint64_t seed = 0;
  std::vector<AugmentOp> applied_ops;

  friend bool operator==(const AugmentRecord&, const AugmentRecord&) = default;
};

nlohmann::json to_json(const AugmentRecord& record);
AugmentRecord augment_record_from_json(const nlohmann::json& j);

struct WeakAugmentConfig {
  double probability = 0.3;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  /// Off-diagonal and diagonal perturbation bound of the affine matrix.
  double affine_perturbation = 0.05;
  /// Translation bound in voxels.
  double affine_shift = 2.0;
};

/// Magnitudes for the strong family. Noise sigma is a fraction of the input
/// intensity range.
struct StrongAugmentConfig {
  double probability = 0.5;
  double noise_sigma_min = 0.01;
  double noise_sigma_max = 0.1;
  double bias_coefficient = 0.3;
  double gibbs_alpha_min = 0.2;
  double gibbs_alpha_max = 0.8;
  double gamma_min = 1.2;
  double gamma_max = 2.0;
  double smooth_sigma_min = 0.5;
  double smooth_sigma_max = 1.5;
};

struct WeakResult {
  Volume volume;
  std::optional<LabelMap> labels;
  AugmentRecord record;
};

struct StrongResult {
  Volume volume;
  AugmentRecord record;
};

WeakResult weak_augment(const Volume& v, const LabelMap* labels, std::uint64_t seed,
                        const WeakAugmentConfig& config = {});
WeakResult replay_weak(const Volume& v, const LabelMap* labels, const AugmentRecord& record);

StrongResult strong_augment(const Volume& v, std::uint64_t seed,
                            const StrongAugmentConfig& config = {});
Volume replay_strong(const Volume& v, const AugmentRecord& record);

// Individual transforms. Spatial ones take an optional label map that is
// moved identically: index permutations are exact, resampling transforms
// resample each class indicator with the same trilinear weights as the image
// and take the argmax.

struct SpatialResult {
  Volume volume;
  std::optional<LabelMap> labels;
};

SpatialResult flip_axis0(const Volume& v, const LabelMap* labels);
/// Quarter turns in the (z,y) "sagittal" plane (plane = 0) or (z,x)
/// "coronal" plane (plane = 1). Odd turns need a square plane.
SpatialResult rotate90(const Volume& v, const LabelMap* labels, int plane, int turns);
/// Scales about the volume centre; factor > 1 magnifies. Out-of-grid samples are 0.
SpatialResult zoom(const Volume& v, const LabelMap* labels, double factor);
/// output(p) = input(A (p - c) + c + t), c the volume centre.
SpatialResult affine(const Volume& v, const LabelMap* labels, const Eigen::Matrix3d& a,
                     const Eigen::Vector3d& t);

Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed);
/// Multiplies by exp(poly), poly a degree-3 polynomial in coordinates scaled
/// to [-1,1]; `coefficients` follow bias_field_monomials() order.
Volume apply_bias_field(const Volume& v, const std::vector<double>& coefficients);
int bias_field_terms();
/// Truncates the fraction `alpha` of the highest spatial frequencies along
/// every axis (ringing artefacts).
Volume gibbs_noise(const Volume& v, double alpha);
Volume adjust_contrast(const Volume& v, double gamma);
/// Separable Gaussian with radius ceil(3 sigma), edge-replicated borders.
Volume gaussian_smooth(const Volume& v, double sigma);
int smoothing_radius(double sigma);

}  // namespace ipacp
