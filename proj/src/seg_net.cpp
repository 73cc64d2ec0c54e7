#include "ipacp/seg_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ipacp/rng.hpp"

namespace ipacp {

namespace {

using Features = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Dims coarse_dims(const Dims& d, int f) { return {d.depth / f, d.height / f, d.width / f}; }

using RowMajorMap = Eigen::Map<const Features>;

// Rows [ci][kz][ky][kx] of the 3x3x3 zero-padded neighbourhood of every voxel,
// so a convolution is one GEMM against weights laid out [out][in][kz][ky][kx].
Features im2col(const Features& in, const Dims& d) {
  const int cin = int(in.rows());
  const int H = d.height, W = d.width;
  Features cols = Features::Zero(Eigen::Index(cin) * 27, d.voxels());
  for (int ci = 0; ci < cin; ++ci) {
    const double* src = in.row(ci).data();
    for (int k = 0; k < 27; ++k) {
      const int dz = k / 9 - 1, dy = (k / 3) % 3 - 1, dx = k % 3 - 1;
      double* dst = cols.row(Eigen::Index(ci) * 27 + k).data();
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      for (int z = std::max(0, -dz); z < std::min(d.depth, d.depth - dz); ++z) {
        for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
          const double* r = src + d.index(z + dz, y + dy, 0) + dx;
          double* o = dst + d.index(z, y, 0);
          std::copy(r + x0, r + x1, o + x0);
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters neighbourhood rows back onto their voxels.
Features col2im(const Features& cols, const Dims& d, int cin) {
  const int H = d.height, W = d.width;
  Features out = Features::Zero(cin, d.voxels());
  for (int ci = 0; ci < cin; ++ci) {
    double* dst = out.row(ci).data();
    for (int k = 0; k < 27; ++k) {
      const int dz = k / 9 - 1, dy = (k / 3) % 3 - 1, dx = k % 3 - 1;
      const double* src = cols.row(Eigen::Index(ci) * 27 + k).data();
      const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
      for (int z = std::max(0, -dz); z < std::min(d.depth, d.depth - dz); ++z) {
        for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
          double* o = dst + d.index(z + dz, y + dy, 0) + dx;
          const double* r = src + d.index(z, y, 0);
          for (int x = x0; x < x1; ++x) o[x] += r[x];
        }
      }
    }
  }
  return out;
}

// 3x3x3 convolution, zero padding, stride 1.
void conv3_forward(const Features& in, const Dims& d, const double* w, const double* b, int cout,
                   Features& cols, Features& out) {
  const Eigen::Index k = in.rows() * 27;
  cols = im2col(in, d);
  out.noalias() = RowMajorMap(w, cout, k) * cols;
  out.colwise() += Eigen::Map<const Eigen::VectorXd>(b, cout);
}

/// Accumulates weight/bias gradients and, when `din` is non-null, the input
/// gradient of conv3_forward. `cols` is the im2col matrix of the input.
void conv3_backward(const Features& cols, const Dims& d, const double* w, const Features& dout,
                    double* dw, double* db, Features* din) {
  const int cout = int(dout.rows());
  const Eigen::Index k = cols.rows();
  const int cin = int(k / 27);
  Eigen::Map<Features>(dw, cout, k).noalias() += dout * cols.transpose();
  Eigen::Map<Eigen::VectorXd>(db, cout) += dout.rowwise().sum();
  if (din) {
    const Features dcols = RowMajorMap(w, cout, k).transpose() * dout;
    *din = col2im(dcols, d, cin);
  }
}

Features avg_pool(const Features& in, const Dims& d, int f) {
  const Dims c = coarse_dims(d, f);
  Features out = Features::Zero(in.rows(), c.voxels());
  const double scale = 1.0 / (double(f) * f * f);
  for (Eigen::Index ch = 0; ch < in.rows(); ++ch) {
    const double* src = in.row(ch).data();
    double* dst = out.row(ch).data();
    for (int z = 0; z < d.depth; ++z) {
      for (int y = 0; y < d.height; ++y) {
        const double* r = src + d.index(z, y, 0);
        double* o = dst + c.index(z / f, y / f, 0);
        for (int x = 0; x < d.width; ++x) o[x / f] += r[x];
      }
    }
    out.row(ch) *= scale;
  }
  return out;
}

/// Nearest-neighbour upsampling, the adjoint of block summation.
Features upsample(const Features& in, const Dims& d, int f) {
  const Dims c = coarse_dims(d, f);
  Features out(in.rows(), d.voxels());
  for (Eigen::Index ch = 0; ch < in.rows(); ++ch) {
    const double* src = in.row(ch).data();
    double* dst = out.row(ch).data();
    for (int z = 0; z < d.depth; ++z) {
      for (int y = 0; y < d.height; ++y) {
        const double* r = src + c.index(z / f, y / f, 0);
        double* o = dst + d.index(z, y, 0);
        for (int x = 0; x < d.width; ++x) o[x] = r[x / f];
      }
    }
  }
  return out;
}

Features block_sum(const Features& in, const Dims& d, int f) {
  const Dims c = coarse_dims(d, f);
  Features out = Features::Zero(in.rows(), c.voxels());
  for (Eigen::Index ch = 0; ch < in.rows(); ++ch) {
    const double* src = in.row(ch).data();
    double* dst = out.row(ch).data();
    for (int z = 0; z < d.depth; ++z) {
      for (int y = 0; y < d.height; ++y) {
        const double* r = src + d.index(z, y, 0);
        double* o = dst + c.index(z / f, y / f, 0);
        for (int x = 0; x < d.width; ++x) o[x / f] += r[x];
      }
    }
  }
  return out;
}

Features silu(const Features& a) {
  return (a.array() / (1.0 + (-a.array()).exp())).matrix();
}

Features silu_grad(const Features& a) {
  const auto s = 1.0 / (1.0 + (-a.array()).exp());
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

Features softmax_columns(const Features& logits) {
  Features e = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  const Eigen::RowVectorXd sums = e.colwise().sum();
  e.array().rowwise() /= sums.array();
  return e;
}

/// dLoss/dlogits for one sample; probs and the result are C x N.
Features loss_logit_grad(const Features& probs, const LabelMap& y, LossMode mode, double* loss) {
  const Eigen::Index n = probs.cols();
  const int classes = int(probs.rows());
  Features grad = Features::Zero(classes, n);
  double total = 0.0;
  if (mode == LossMode::Ce || mode == LossMode::CeDice) {
    double ce = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      const int t = y[v];
      const double pt = probs(t, v);
      ce -= std::log(std::max(pt, kCeEps));
      if (pt > kCeEps) {
        for (int c = 0; c < classes; ++c) grad(c, v) += probs(c, v) / double(n);
        grad(t, v) -= 1.0 / double(n);
      }
    }
    total += ce / double(n);
  }
  if (mode == LossMode::Dice || mode == LossMode::CeDice) {
    const int fg = classes - 1;
    Features gp = Features::Zero(classes, n);
    double dice = 0.0;
    for (int c = 1; c < classes; ++c) {
      double inter = 0.0, psum = 0.0, ysum = 0.0;
      for (Eigen::Index v = 0; v < n; ++v) {
        const double yc = y[v] == c ? 1.0 : 0.0;
        inter += probs(c, v) * yc;
        psum += probs(c, v);
        ysum += yc;
      }
      const double den = psum + ysum + kDiceSmooth;
      const double num = 2.0 * inter + kDiceSmooth;
      dice += 1.0 - num / den;
      for (Eigen::Index v = 0; v < n; ++v) {
        const double yc = y[v] == c ? 1.0 : 0.0;
        gp(c, v) = -(2.0 * yc * den - num) / (den * den) / fg;
      }
    }
    total += dice / fg;
    // Back through the softmax: dz_k = p_k (g_k - sum_j p_j g_j).
    const Eigen::RowVectorXd dot = (probs.array() * gp.array()).colwise().sum();
    grad.array() += probs.array() * (gp.rowwise() - dot).array();
  }
  *loss = total;
  return grad;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string arch_string(const NetConfig& c) {
  std::ostringstream s;
  s << "unet2-w" << c.width1 << "-" << c.width2 << "-c" << c.classes << "-f" << c.down;
  return s.str();
}

NetConfig parse_arch_string(const std::string& arch) {
  NetConfig c;
  if (std::sscanf(arch.c_str(), "unet2-w%d-%d-c%d-f%d", &c.width1, &c.width2, &c.classes,
                  &c.down) != 4) {
    throw std::invalid_argument("unrecognised architecture '" + arch + "'");
  }
  return c;
}

const LayerSlice& ParamLayout::at(const std::string& name) const {
  for (const auto& s : slices) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter slice named " + name);
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "CE") return LossMode::Ce;
  if (s == "Dice") return LossMode::Dice;
  if (s == "CE+Dice") return LossMode::CeDice;
  throw std::invalid_argument("unknown loss mode '" + s + "'");
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Ce: return "CE";
    case LossMode::Dice: return "Dice";
    case LossMode::CeDice: return "CE+Dice";
  }
  return "?";
}

struct SegNet::Cache {
  Dims dims;
  Features cols1, a1, h1, cols2, a2, h2, probs;
};

SegNet::SegNet(NetConfig config) : config_(config) {
  if (config.width1 < 1 || config.width2 < 1 || config.classes < 2 || config.down < 1) {
    throw std::invalid_argument("invalid network configuration");
  }
  const Eigen::Index w1 = config.width1, w2 = config.width2, c = config.classes;
  auto add = [&](std::string name, Eigen::Index size) {
    layout_.slices.push_back({std::move(name), layout_.total, size});
    layout_.total += size;
  };
  add("conv1.w", w1 * 27);
  add("conv1.b", w1);
  add("conv2.w", w2 * w1 * 27);
  add("conv2.b", w2);
  add("head.w1", c * w1);
  add("head.w2", c * w2);
  add("head.b", c);
}

ParamVector SegNet::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  ParamVector p = ParamVector::Zero(layout_.total);
  auto fill = [&](const std::string& name, double fan_in, double fan_out) {
    const auto& s = layout_.at(name);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < s.size; ++i) p[s.offset + i] = u(rng);
  };
  const double w1 = config_.width1, w2 = config_.width2, c = config_.classes;
  fill("conv1.w", 27.0, 27.0 * w1);
  fill("conv2.w", 27.0 * w1, 27.0 * w2);
  fill("head.w1", w1 + w2, c);
  fill("head.w2", w1 + w2, c);
  return p;
}

void SegNet::check(const ParamVector& params, const Volume& v) const {
  if (params.size() != layout_.total) {
    throw std::invalid_argument("parameter vector length does not match the network layout");
  }
  const Dims d = v.dims();
  const int f = config_.down;
  if (d.depth % f || d.height % f || d.width % f) {
    throw std::invalid_argument("volume dims " + to_string(d) +
                                " are not divisible by the downsampling factor " +
                                std::to_string(f));
  }
}

SegNet::Cache SegNet::run_forward(const ParamVector& params, const Volume& v) const {
  check(params, v);
  const int f = config_.down;
  const int w1 = config_.width1, w2 = config_.width2, c = config_.classes;
  Cache k;
  k.dims = v.dims();
  const Dims cd = coarse_dims(k.dims, f);
  const Features x = Eigen::Map<const Features>(v.data().data(), 1, v.size());
  const double* p = params.data();
  conv3_forward(x, k.dims, p + layout_.at("conv1.w").offset, p + layout_.at("conv1.b").offset,
                w1, k.cols1, k.a1);
  k.h1 = silu(k.a1);
  conv3_forward(avg_pool(k.h1, k.dims, f), cd, p + layout_.at("conv2.w").offset,
                p + layout_.at("conv2.b").offset, w2, k.cols2, k.a2);
  k.h2 = silu(k.a2);
  const Eigen::Map<const Features> hw1(p + layout_.at("head.w1").offset, c, w1);
  const Eigen::Map<const Features> hw2(p + layout_.at("head.w2").offset, c, w2);
  const Eigen::Map<const Eigen::VectorXd> hb(p + layout_.at("head.b").offset, c);
  const Features coarse = hw2 * k.h2;
  Features logits = hw1 * k.h1 + upsample(coarse, k.dims, f);
  logits.colwise() += hb;
  k.probs = std::move(logits);
  return k;
}

Eigen::MatrixXd SegNet::forward_logits(const ParamVector& params, const Volume& v) const {
  return run_forward(params, v).probs;
}

ProbMap SegNet::forward(const ParamVector& params, const Volume& v) const {
  const Features probs = softmax_columns(run_forward(params, v).probs);
  // C x N row-major and N x C column-major share a memory layout.
  return ProbMap(v.dims(), Eigen::MatrixXd(probs.transpose()));
}

LossGrad SegNet::loss_and_grad(const ParamVector& params, std::span<const TrainingSample> batch,
                               LossMode mode) const {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const int f = config_.down;
  const int w1 = config_.width1, w2 = config_.width2, c = config_.classes;
  LossGrad out{0.0, ParamVector::Zero(layout_.total)};
  const double* p = params.data();
  double* g = out.grad.data();
  const Eigen::Map<const Features> hw1(p + layout_.at("head.w1").offset, c, w1);
  const Eigen::Map<const Features> hw2(p + layout_.at("head.w2").offset, c, w2);

  for (const auto& sample : batch) {
    require_same_dims(sample.image.dims(), sample.labels.dims(), "loss_and_grad");
    if (!labels_within(sample.labels, c)) throw std::invalid_argument("label exceeds class count");
    Cache k = run_forward(params, sample.image);
    const Dims cd = coarse_dims(k.dims, f);
    k.probs = softmax_columns(k.probs);
    double sample_loss = 0.0;
    const Features dlogits = loss_logit_grad(k.probs, sample.labels, mode, &sample_loss);
    out.loss += sample_loss;

    // Head.
    Eigen::Map<Features>(g + layout_.at("head.w1").offset, c, w1) += dlogits * k.h1.transpose();
    const Features dcoarse = block_sum(dlogits, k.dims, f);
    Eigen::Map<Features>(g + layout_.at("head.w2").offset, c, w2) += dcoarse * k.h2.transpose();
    Eigen::Map<Eigen::VectorXd>(g + layout_.at("head.b").offset, c) += dlogits.rowwise().sum();

    // Coarse branch.
    const Features da2 = ((hw2.transpose() * dcoarse).array() * silu_grad(k.a2).array()).matrix();
    Features dpooled;
    conv3_backward(k.cols2, cd, p + layout_.at("conv2.w").offset, da2,
                   g + layout_.at("conv2.w").offset, g + layout_.at("conv2.b").offset, &dpooled);

    // Fine branch: head path plus the adjoint of average pooling.
    Features dh1 = hw1.transpose() * dlogits;
    dh1 += upsample(dpooled, k.dims, f) / (double(f) * f * f);
    const Features da1 = (dh1.array() * silu_grad(k.a1).array()).matrix();
    conv3_backward(k.cols1, k.dims, p + layout_.at("conv1.w").offset, da1,
                   g + layout_.at("conv1.w").offset, g + layout_.at("conv1.b").offset, nullptr);
  }
  const double n = double(batch.size());
  out.loss /= n;
  out.grad /= n;
  return out;
}

double SegNet::loss(const ParamVector& params, std::span<const TrainingSample> batch,
                    LossMode mode) const {
  double total = 0.0;
  for (const auto& s : batch) total += combined_loss(forward(params, s.image), s.labels, mode);
  return total / double(batch.size());
}

// ---------------------------------------------------------------------------

double dice_loss(const ProbMap& p, const LabelMap& y) {
  require_same_dims(p.dims(), y.dims(), "dice_loss");
  const int classes = p.classes();
  double total = 0.0;
  for (int c = 1; c < classes; ++c) {
    const Eigen::ArrayXd yc = (y.data() == std::uint8_t(c)).cast<double>();
    const double inter = (p.probs().col(c).array() * yc).sum();
    const double den = p.probs().col(c).sum() + yc.sum() + kDiceSmooth;
    total += 1.0 - (2.0 * inter + kDiceSmooth) / den;
  }
  return total / (classes - 1);
}

double ce_loss(const ProbMap& p, const LabelMap& y) {
  require_same_dims(p.dims(), y.dims(), "ce_loss");
  double total = 0.0;
  for (Eigen::Index v = 0; v < p.voxels(); ++v) {
    if (y[v] >= p.classes()) throw std::invalid_argument("ce_loss: label exceeds class count");
    total -= std::log(std::max(p.probs()(v, y[v]), kCeEps));
  }
  return total / double(p.voxels());
}

double combined_loss(const ProbMap& p, const LabelMap& y, LossMode mode) {
  switch (mode) {
    case LossMode::Ce: return ce_loss(p, y);
    case LossMode::Dice: return dice_loss(p, y);
    case LossMode::CeDice: return dice_loss(p, y) + ce_loss(p, y);
  }
  return 0.0;
}

void adam_step(ParamVector& params, const ParamVector& grads, OptimState& state, double lr,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: length mismatch");
  }
  state.step += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.step));
  params.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

double poly_lr(double base, long iter, long total, double power) {
  if (total <= 0) return 0.0;
  if (iter < 0 || iter > total) throw std::invalid_argument("poly_lr: iter outside [0, total]");
  return base * std::pow(1.0 - double(iter) / double(total), power);
}

void ema_update(ParamVector& teacher, const ParamVector& student, double alpha) {
  if (teacher.size() != student.size()) throw std::invalid_argument("ema_update: length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha in [0,1]");
  if (alpha == 0.0) {
    teacher = student;
    return;
  }
  // Difference form: a teacher equal to the student stays bit-identical.
  teacher += (1.0 - alpha) * (student - teacher);
}

}  // namespace ipacp
