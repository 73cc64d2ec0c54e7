#pragma once

// Dense 3D grids shared by every module. All grids are row-major with depth
// as the slowest axis; voxel indices are always (z, y, x).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace ipacp {

struct Dims {
  int depth = 0;
  int height = 0;
  int width = 0;

  constexpr Eigen::Index voxels() const {
    return Eigen::Index(depth) * height * width;
  }
  constexpr Eigen::Index index(int z, int y, int x) const {
    return (Eigen::Index(z) * height + y) * width + x;
  }
  constexpr bool valid() const { return depth > 0 && height > 0 && width > 0; }
  int operator[](int axis) const { return axis == 0 ? depth : axis == 1 ? height : width; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.depth) + "," + std::to_string(d.height) + "," +
         std::to_string(d.width) + ")";
}

/// Physical voxel size in mm, (z, y, x).
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

inline void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch " + to_string(a) +
                                " vs " + to_string(b));
  }
}

struct VolumeKind;
struct LabelKind;
struct MaskKind;

/// A dims-tagged flat array. `Kind` keeps images, label maps and masks
/// from being mixed up at call sites even when they share a value type.
template <typename T, typename Kind>
class Grid {
 public:
  using value_type = T;
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Grid() = default;
  explicit Grid(const Dims& dims, T fill = T{}) : dims_(dims) {
    if (!dims.valid()) throw std::invalid_argument("invalid dims " + to_string(dims));
    data_ = Storage::Constant(dims.voxels(), fill);
  }
  Grid(const Dims& dims, Storage data) : dims_(dims), data_(std::move(data)) {
    if (!dims.valid()) throw std::invalid_argument("invalid dims " + to_string(dims));
    if (data_.size() != dims.voxels()) {
      throw std::invalid_argument("grid payload length does not match dims " + to_string(dims));
    }
  }

  const Dims& dims() const { return dims_; }
  Eigen::Index size() const { return data_.size(); }
  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  T& operator()(int z, int y, int x) { return data_[dims_.index(z, y, x)]; }
  const T& operator()(int z, int y, int x) const { return data_[dims_.index(z, y, x)]; }
  T& operator[](Eigen::Index i) { return data_[i]; }
  const T& operator[](Eigen::Index i) const { return data_[i]; }

  std::optional<Spacing> spacing;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dims_ == b.dims_ && (a.data_ == b.data_).all();
  }

 private:
  Dims dims_;
  Storage data_;
};

template <typename Scalar>
using BasicVolume = Grid<Scalar, VolumeKind>;
using Volume = BasicVolume<double>;
using LabelMap = Grid<std::uint8_t, LabelKind>;
/// 1 = kept, 0 = cut.
using BinaryMask = Grid<std::uint8_t, MaskKind>;

/// Per-voxel class probabilities, stored voxels x classes (column-major, so
/// each class plane is contiguous).
template <typename Scalar>
class BasicProbMap {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicProbMap() = default;
  BasicProbMap(const Dims& dims, int classes) : dims_(dims) {
    if (!dims.valid()) throw std::invalid_argument("invalid dims " + to_string(dims));
    if (classes < 2) throw std::invalid_argument("a probability map needs at least 2 classes");
    probs_ = Matrix::Constant(dims.voxels(), classes, Scalar(1) / Scalar(classes));
  }
  BasicProbMap(const Dims& dims, Matrix probs) : dims_(dims), probs_(std::move(probs)) {
    if (!dims.valid()) throw std::invalid_argument("invalid dims " + to_string(dims));
    if (probs_.rows() != dims.voxels() || probs_.cols() < 2) {
      throw std::invalid_argument("probability matrix shape does not match dims");
    }
  }

  const Dims& dims() const { return dims_; }
  int classes() const { return int(probs_.cols()); }
  Eigen::Index voxels() const { return probs_.rows(); }
  Matrix& probs() { return probs_; }
  const Matrix& probs() const { return probs_; }

 private:
  Dims dims_;
  Matrix probs_;
};

using ProbMap = BasicProbMap<double>;

template <typename Scalar>
void require_same_shape(const BasicProbMap<Scalar>& a, const BasicProbMap<Scalar>& b,
                        const char* what) {
  require_same_dims(a.dims(), b.dims(), what);
  if (a.classes() != b.classes()) {
    throw std::invalid_argument(std::string(what) + ": class count mismatch");
  }
}

/// True when every value is in [0,1] and every voxel sums to 1 within `tol`.
template <typename Scalar>
bool is_valid_probmap(const BasicProbMap<Scalar>& p, double tol = 1e-5) {
  const auto& m = p.probs();
  if (!m.allFinite()) return false;
  if ((m.array() < Scalar(0)).any() || (m.array() > Scalar(1)).any()) return false;
  return ((m.rowwise().sum().array() - Scalar(1)).abs() <= Scalar(tol)).all();
}

inline bool is_binary(const BinaryMask& m) { return (m.data() <= std::uint8_t(1)).all(); }

inline bool labels_within(const LabelMap& l, int classes) {
  return (l.data().template cast<int>() < classes).all();
}

// ---------------------------------------------------------------------------
// Intensity preprocessing

template <typename Scalar>
BasicVolume<Scalar> clip_intensity(const BasicVolume<Scalar>& v, Scalar lo, Scalar hi) {
  if (!(lo < hi)) throw std::invalid_argument("clip_intensity: invalid range, need lo < hi");
  BasicVolume<Scalar> out(v.dims(), v.data().max(lo).min(hi).eval());
  out.spacing = v.spacing;
  return out;
}

/// (v - min) / (max - min); a constant volume maps to all zeros.
template <typename Scalar>
BasicVolume<Scalar> minmax_normalize(const BasicVolume<Scalar>& v) {
  if (v.size() == 0) throw std::invalid_argument("minmax_normalize: empty volume");
  const Scalar lo = v.data().minCoeff();
  const Scalar hi = v.data().maxCoeff();
  BasicVolume<Scalar> out(v.dims(), Scalar(0));
  out.spacing = v.spacing;
  if (hi > lo) out.data() = (v.data() - lo) / (hi - lo);
  return out;
}

/// Per-voxel argmax; ties go to the lowest class index.
template <typename Scalar>
LabelMap argmax_labels(const BasicProbMap<Scalar>& p) {
  LabelMap out(p.dims(), 0);
  const auto& m = p.probs();
  const int classes = p.classes();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    int best = 0;
    Scalar best_value = m(i, 0);
    for (int c = 1; c < classes; ++c) {
      if (m(i, c) > best_value) {
        best_value = m(i, c);
        best = c;
      }
    }
    out[i] = std::uint8_t(best);
  }
  return out;
}

/// One-hot probability map of a label map.
template <typename Scalar = double>
BasicProbMap<Scalar> one_hot(const LabelMap& labels, int classes) {
  typename BasicProbMap<Scalar>::Matrix m =
      BasicProbMap<Scalar>::Matrix::Zero(labels.size(), classes);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw std::invalid_argument("one_hot: label out of range");
    m(i, labels[i]) = Scalar(1);
  }
  return BasicProbMap<Scalar>(labels.dims(), std::move(m));
}

inline BinaryMask foreground(const LabelMap& labels) {
  BinaryMask m(labels.dims(), 0);
  m.data() = (labels.data() > 0).template cast<std::uint8_t>();
  m.spacing = labels.spacing;
  return m;
}

}  // namespace ipacp
