#pragma once

// A tiny two-level volumetric encoder-decoder with exact analytic gradients,
// plus the Dice + CE objective, Adam, the polynomial LR policy and the EMA
// teacher update.
//
// Architecture (C = classes, f = downsampling factor):
//   h1 = silu(conv3x3x3(x))                 width1 channels, full resolution
//   h2 = silu(conv3x3x3(avgpool_f(h1)))     width2 channels, 1/f resolution
//   logits = W1 h1 + upsample_f(W2 h2) + b  1x1x1 projection of [h1, up(h2)]
//   p = softmax(logits)

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipacp/volume.hpp"

namespace ipacp {

using ParamVector = Eigen::VectorXd;

struct NetConfig {
  int width1 = 8;
  int width2 = 16;
  int classes = 2;
  int down = 4;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

std::string arch_string(const NetConfig& config);
NetConfig parse_arch_string(const std::string& arch);

struct LayerSlice {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

struct ParamLayout {
  std::vector<LayerSlice> slices;
  Eigen::Index total = 0;

  const LayerSlice& at(const std::string& name) const;
};

enum class LossMode { Ce, Dice, CeDice };
LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode mode);

struct TrainingSample {
  Volume image;
  LabelMap labels;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

class SegNet {
 public:
  explicit SegNet(NetConfig config = {});

  const NetConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index num_params() const { return layout_.total; }

  /// Glorot-uniform weights from a seeded stream, zero biases.
  ParamVector init_params(std::uint64_t seed) const;

  /// C x voxels.
  Eigen::MatrixXd forward_logits(const ParamVector& params, const Volume& v) const;
  ProbMap forward(const ParamVector& params, const Volume& v) const;

  /// Mean per-sample loss over the batch and its exact gradient.
  LossGrad loss_and_grad(const ParamVector& params, std::span<const TrainingSample> batch,
                         LossMode mode = LossMode::CeDice) const;
  double loss(const ParamVector& params, std::span<const TrainingSample> batch,
              LossMode mode = LossMode::CeDice) const;

 private:
  struct Cache;
  Cache run_forward(const ParamVector& params, const Volume& v) const;
  void check(const ParamVector& params, const Volume& v) const;

  NetConfig config_;
  ParamLayout layout_;
};

inline constexpr double kDiceSmooth = 1e-5;
inline constexpr double kCeEps = 1e-12;

/// 1 - (2 sum p y + s) / (sum p + sum y + s), averaged over foreground classes.
double dice_loss(const ProbMap& p, const LabelMap& y);
/// Mean over voxels of -log max(p_true, 1e-12).
double ce_loss(const ProbMap& p, const LabelMap& y);
double combined_loss(const ProbMap& p, const LabelMap& y, LossMode mode = LossMode::CeDice);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static OptimState zeros(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  }
};

/// Bias-corrected Adam, in place.
void adam_step(ParamVector& params, const ParamVector& grads, OptimState& state, double lr,
               const AdamConfig& config = {});

/// base * (1 - iter/total)^power.
double poly_lr(double base, long iter, long total, double power = 0.9);

/// theta_t <- alpha theta_t + (1 - alpha) theta_s.
void ema_update(ParamVector& teacher, const ParamVector& student, double alpha = 0.99);

}  // namespace ipacp
