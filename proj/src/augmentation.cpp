#include "ipacp/augmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ipacp/rng.hpp"

namespace ipacp {

using nlohmann::json;

json to_json(const AugmentRecord& record) {
  json ops = json::array();
  for (const auto& op : record.applied_ops) ops.push_back({{"name", op.name}, {"params", op.params}});
  return {{"seed", record.seed}, {"applied_ops", ops}};
}

AugmentRecord augment_record_from_json(const json& j) {
  AugmentRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& op : j.at("applied_ops")) {
    r.applied_ops.push_back(
        {op.at("name").get<std::string>(), op.at("params").get<std::map<std::string, double>>()});
  }
  return r;
}

namespace {

std::optional<LabelMap> copy_labels(const LabelMap* labels) {
  if (!labels) return std::nullopt;
  return *labels;
}

void check_labels(const Volume& v, const LabelMap* labels) {
  if (labels) require_same_dims(v.dims(), labels->dims(), "weak augmentation");
}

/// Applies an index remap src(z,y,x) to the image and the labels.
template <typename SourceFn>
SpatialResult remap(const Volume& v, const LabelMap* labels, SourceFn source) {
  const Dims d = v.dims();
  SpatialResult out{Volume(d), copy_labels(labels)};
  out.volume.spacing = v.spacing;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const auto [sz, sy, sx] = source(z, y, x);
        out.volume(z, y, x) = v(sz, sy, sx);
        if (labels) (*out.labels)(z, y, x) = (*labels)(sz, sy, sx);
      }
    }
  }
  return out;
}

/// Trilinear resampling where `coord` maps an output voxel to a source
/// position. Corners outside the grid contribute nothing (zero padding).
template <typename CoordFn>
SpatialResult resample(const Volume& v, const LabelMap* labels, CoordFn coord) {
  const Dims d = v.dims();
  SpatialResult out{Volume(d, 0.0), copy_labels(labels)};
  out.volume.spacing = v.spacing;
  int classes = 0;
  if (labels) classes = std::max(2, int(labels->data().maxCoeff()) + 1);
  std::vector<double> class_weight(std::size_t(std::max(classes, 1)));

  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        const Eigen::Vector3d s = coord(z, y, x);
        const int z0 = int(std::floor(s[0]));
        const int y0 = int(std::floor(s[1]));
        const int x0 = int(std::floor(s[2]));
        const double fz = s[0] - z0, fy = s[1] - y0, fx = s[2] - x0;
        double value = 0.0;
        std::fill(class_weight.begin(), class_weight.end(), 0.0);
        for (int corner = 0; corner < 8; ++corner) {
          const int cz = z0 + ((corner >> 2) & 1);
          const int cy = y0 + ((corner >> 1) & 1);
          const int cx = x0 + (corner & 1);
          if (cz < 0 || cy < 0 || cx < 0 || cz >= d.depth || cy >= d.height || cx >= d.width) {
            continue;
          }
          const double w = (((corner >> 2) & 1) ? fz : 1.0 - fz) *
                           (((corner >> 1) & 1) ? fy : 1.0 - fy) * ((corner & 1) ? fx : 1.0 - fx);
          value += w * v(cz, cy, cx);
          if (labels) class_weight[(*labels)(cz, cy, cx)] += w * 1.0;
        }
        out.volume(z, y, x) = value;
        if (labels) {
          int best = 0;
          for (int c = 1; c < classes; ++c) {
            if (class_weight[std::size_t(c)] > class_weight[std::size_t(best)]) best = c;
          }
          (*out.labels)(z, y, x) = std::uint8_t(best);
        }
      }
    }
  }
  return out;
}

Eigen::Vector3d centre(const Dims& d) {
  return {(d.depth - 1) / 2.0, (d.height - 1) / 2.0, (d.width - 1) / 2.0};
}

/// Applies a per-axis linear operator (N x N matrices) along z, y and x.
Volume apply_separable(const Volume& v, const Eigen::MatrixXd& lz, const Eigen::MatrixXd& ly,
                       const Eigen::MatrixXd& lx) {
  const Dims d = v.dims();
  Eigen::ArrayXd data = v.data();
  using Eigen::Map;
  using Eigen::MatrixXd;
  // x-lines are the columns of a (W x D*H) column-major view.
  {
    Map<MatrixXd> m(data.data(), d.width, Eigen::Index(d.depth) * d.height);
    m = (lx * m).eval();
  }
  // Per z slice, columns are y and rows are x: apply along y from the right.
  for (int z = 0; z < d.depth; ++z) {
    Map<MatrixXd> m(data.data() + Eigen::Index(z) * d.height * d.width, d.width, d.height);
    m = (m * ly.transpose()).eval();
  }
  {
    Map<MatrixXd> m(data.data(), Eigen::Index(d.height) * d.width, d.depth);
    m = (m * lz.transpose()).eval();
  }
  Volume out(d, std::move(data));
  out.spacing = v.spacing;
  return out;
}

/// Ideal low-pass keeping |k| <= keep along one axis of length n.
Eigen::MatrixXd lowpass_matrix(int n, int keep) {
  Eigen::MatrixXd l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 1.0;
      for (int k = 1; k <= keep; ++k) s += 2.0 * std::cos(2.0 * std::numbers::pi * k * (i - j) / n);
      l(i, j) = s / n;
    }
  }
  return l;
}

Eigen::MatrixXd smoothing_matrix(int n, double sigma) {
  const int radius = smoothing_radius(sigma);
  std::vector<double> kernel(std::size_t(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[std::size_t(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[std::size_t(k + radius)];
  }
  for (auto& w : kernel) w /= total;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = -radius; k <= radius; ++k) {
      const int j = std::clamp(i + k, 0, n - 1);
      s(i, j) += kernel[std::size_t(k + radius)];
    }
  }
  return s;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool fires(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ull;

}  // namespace

SpatialResult flip_axis0(const Volume& v, const LabelMap* labels) {
  check_labels(v, labels);
  const int depth = v.dims().depth;
  return remap(v, labels, [&](int z, int y, int x) { return std::array{depth - 1 - z, y, x}; });
}

SpatialResult rotate90(const Volume& v, const LabelMap* labels, int plane, int turns) {
  check_labels(v, labels);
  if (plane != 0 && plane != 1) throw std::invalid_argument("rotate90: plane must be 0 or 1");
  turns = ((turns % 4) + 4) % 4;
  const Dims d = v.dims();
  const int other = plane == 0 ? d.height : d.width;
  if (turns % 2 == 1 && d.depth != other) {
    throw std::invalid_argument("rotate90: odd quarter turns need a square plane");
  }
  const int n = d.depth;
  return remap(v, labels, [&](int z, int y, int x) {
    int a = z;
    int b = plane == 0 ? y : x;
    int sa = a, sb = b;
    if (turns == 1) {
      sa = b;
      sb = n - 1 - a;
    } else if (turns == 2) {
      sa = d.depth - 1 - a;
      sb = other - 1 - b;
    } else if (turns == 3) {
      sa = n - 1 - b;
      sb = a;
    }
    return plane == 0 ? std::array{sa, sb, x} : std::array{sa, y, sb};
  });
}

SpatialResult zoom(const Volume& v, const LabelMap* labels, double factor) {
  check_labels(v, labels);
  if (!(factor > 0.0)) throw std::invalid_argument("zoom: factor must be positive");
  const Eigen::Vector3d c = centre(v.dims());
  return resample(v, labels, [&](int z, int y, int x) -> Eigen::Vector3d {
    return c + (Eigen::Vector3d(z, y, x) - c) / factor;
  });
}

SpatialResult affine(const Volume& v, const LabelMap* labels, const Eigen::Matrix3d& a,
                     const Eigen::Vector3d& t) {
  check_labels(v, labels);
  const Eigen::Vector3d c = centre(v.dims());
  return resample(v, labels, [&](int z, int y, int x) -> Eigen::Vector3d {
    return a * (Eigen::Vector3d(z, y, x) - c) + c + t;
  });
}

Volume add_gaussian_noise(const Volume& v, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Volume out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += sigma * normal(rng);
  return out;
}

int bias_field_terms() { return 20; }

Volume apply_bias_field(const Volume& v, const std::vector<double>& coefficients) {
  if (int(coefficients.size()) != bias_field_terms()) {
    throw std::invalid_argument("bias field needs 20 coefficients");
  }
  const Dims d = v.dims();
  auto scaled = [](int i, int n) { return n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0; };
  auto powers = [&](int n) {
    Eigen::ArrayX4d p(n, 4);
    for (int i = 0; i < n; ++i) {
      const double c = scaled(i, n);
      p.row(i) << 1.0, c, c * c, c * c * c;
    }
    return p;
  };
  const Eigen::ArrayX4d pz = powers(d.depth), py = powers(d.height), px = powers(d.width);
  Volume out = v;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      // Collapse z^a y^b into per-row coefficients of x^e. Monomials are
      // z^a y^b x^e with a + b + e <= 3, in lexicographic (a, b) order.
      double cx[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t term = 0;
      for (int a = 0; a <= 3; ++a) {
        for (int b = 0; a + b <= 3; ++b) {
          for (int e = 0; a + b + e <= 3; ++e) cx[e] += coefficients[term++] * pz(z, a) * py(y, b);
        }
      }
      for (int x = 0; x < d.width; ++x) {
        const double poly = cx[0] + cx[1] * px(x, 1) + cx[2] * px(x, 2) + cx[3] * px(x, 3);
        out(z, y, x) *= std::exp(poly);
      }
    }
  }
  return out;
}

Volume gibbs_noise(const Volume& v, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("gibbs_noise: alpha in [0,1)");
  const Dims d = v.dims();
  auto keep = [&](int n) { return int(std::floor((1.0 - alpha) * (n - 1) / 2.0)); };
  return apply_separable(v, lowpass_matrix(d.depth, keep(d.depth)),
                         lowpass_matrix(d.height, keep(d.height)),
                         lowpass_matrix(d.width, keep(d.width)));
}

Volume adjust_contrast(const Volume& v, double gamma) {
  const double lo = v.data().minCoeff();
  const double range = v.data().maxCoeff() - lo;
  Volume out = v;
  if (range > 0.0) out.data() = ((v.data() - lo) / range).pow(gamma) * range + lo;
  return out;
}

int smoothing_radius(double sigma) { return std::max(1, int(std::ceil(3.0 * sigma))); }

Volume gaussian_smooth(const Volume& v, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_smooth: sigma must be positive");
  const Dims d = v.dims();
  return apply_separable(v, smoothing_matrix(d.depth, sigma), smoothing_matrix(d.height, sigma),
                         smoothing_matrix(d.width, sigma));
}

// ---------------------------------------------------------------------------

WeakResult weak_augment(const Volume& v, const LabelMap* labels, std::uint64_t seed,
                        const WeakAugmentConfig& config) {
  check_labels(v, labels);
  Rng rng(seed);
  AugmentRecord record{seed, {}};
  const Dims d = v.dims();
  if (fires(rng, config.probability)) record.applied_ops.push_back({"flip", {{"axis", 0.0}}});
  if (fires(rng, config.probability)) {
    const int plane = std::uniform_int_distribution<int>(0, 1)(rng);
    const bool square = d.depth == (plane == 0 ? d.height : d.width);
    const int turns = square ? std::uniform_int_distribution<int>(1, 3)(rng) : 2;
    record.applied_ops.push_back({"rotate90", {{"plane", plane}, {"turns", turns}}});
  }
  if (fires(rng, config.probability)) {
    record.applied_ops.push_back(
        {"zoom", {{"factor", uniform(rng, config.zoom_min, config.zoom_max)}}});
  }
  if (fires(rng, config.probability)) {
    AugmentOp op{"affine", {}};
    const double p = config.affine_perturbation;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        op.params["a" + std::to_string(i) + std::to_string(j)] =
            (i == j ? 1.0 : 0.0) + uniform(rng, -p, p);
      }
    }
    for (int i = 0; i < 3; ++i) {
      op.params["t" + std::to_string(i)] = uniform(rng, -config.affine_shift, config.affine_shift);
    }
    record.applied_ops.push_back(std::move(op));
  }
  return replay_weak(v, labels, record);
}

WeakResult replay_weak(const Volume& v, const LabelMap* labels, const AugmentRecord& record) {
  check_labels(v, labels);
  SpatialResult cur{v, copy_labels(labels)};
  for (const auto& op : record.applied_ops) {
    const LabelMap* l = cur.labels ? &*cur.labels : nullptr;
    if (op.name == "flip") {
      cur = flip_axis0(cur.volume, l);
    } else if (op.name == "rotate90") {
      cur = rotate90(cur.volume, l, int(op.params.at("plane")), int(op.params.at("turns")));
    } else if (op.name == "zoom") {
      cur = zoom(cur.volume, l, op.params.at("factor"));
    } else if (op.name == "affine") {
      Eigen::Matrix3d a;
      Eigen::Vector3d t;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) a(i, j) = op.params.at("a" + std::to_string(i) + std::to_string(j));
        t[i] = op.params.at("t" + std::to_string(i));
      }
      cur = affine(cur.volume, l, a, t);
    } else {
      throw std::invalid_argument("unknown weak augmentation '" + op.name + "'");
    }
  }
  return {std::move(cur.volume), std::move(cur.labels), record};
}

StrongResult strong_augment(const Volume& v, std::uint64_t seed, const StrongAugmentConfig& config) {
  Rng rng(seed);
  AugmentRecord record{seed, {}};
  if (fires(rng, config.probability)) {
    record.applied_ops.push_back(
        {"gaussian_noise", {{"sigma", uniform(rng, config.noise_sigma_min, config.noise_sigma_max)}}});
  }
  if (fires(rng, config.probability)) {
    AugmentOp op{"bias_field", {}};
    for (int k = 0; k < bias_field_terms(); ++k) {
      op.params["c" + std::to_string(k)] =
          uniform(rng, -config.bias_coefficient, config.bias_coefficient);
    }
    record.applied_ops.push_back(std::move(op));
  }
  if (fires(rng, config.probability)) {
    record.applied_ops.push_back(
        {"gibbs_noise", {{"alpha", uniform(rng, config.gibbs_alpha_min, config.gibbs_alpha_max)}}});
  }
  if (fires(rng, config.probability)) {
    record.applied_ops.push_back(
        {"contrast", {{"gamma", uniform(rng, config.gamma_min, config.gamma_max)}}});
  }
  if (fires(rng, config.probability)) {
    record.applied_ops.push_back(
        {"gaussian_smooth",
         {{"sigma", uniform(rng, config.smooth_sigma_min, config.smooth_sigma_max)}}});
  }
  return {replay_strong(v, record), record};
}

Volume replay_strong(const Volume& v, const AugmentRecord& record) {
  if (record.applied_ops.empty()) return v;
  Volume cur = v;
  for (const auto& op : record.applied_ops) {
    if (op.name == "gaussian_noise") {
      const double range = cur.data().maxCoeff() - cur.data().minCoeff();
      const double scale = range > 0.0 ? range : 1.0;
      cur = add_gaussian_noise(cur, op.params.at("sigma") * scale,
                               derive_seed(record.seed, {kNoiseStream}));
    } else if (op.name == "bias_field") {
      std::vector<double> c(static_cast<std::size_t>(bias_field_terms()));
      for (int k = 0; k < bias_field_terms(); ++k) {
        c[std::size_t(k)] = op.params.at("c" + std::to_string(k));
      }
      cur = apply_bias_field(cur, c);
    } else if (op.name == "gibbs_noise") {
      cur = gibbs_noise(cur, op.params.at("alpha"));
    } else if (op.name == "contrast") {
      cur = adjust_contrast(cur, op.params.at("gamma"));
    } else if (op.name == "gaussian_smooth") {
      cur = gaussian_smooth(cur, op.params.at("sigma"));
    } else {
      throw std::invalid_argument("unknown strong augmentation '" + op.name + "'");
    }
  }
  cur.data() = cur.data().max(0.0).min(1.0);
  return cur;
}

}  // namespace ipacp
