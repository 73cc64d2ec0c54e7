#pragma once

// Flat `key = value` training configuration. Keys mirror the field names;
// `#` starts a comment. Parsing and validation failures raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ipacp/masking.hpp"
#include "ipacp/pseudo_label.hpp"
#include "ipacp/seg_net.hpp"

namespace ipacp {

struct TrainConfig {
  std::string data_root;
  /// Phantom profile; selects the default hole ranges.
  std::string profile = "small";
  double labeled_ratio = 0.1;
  int batch_size = 2;
  /// Training crop size; 0 means the whole volume.
  int patch_depth = 0;
  int patch_height = 0;
  int patch_width = 0;
  long total_iters = 1000;
  /// Stop (and checkpoint) after this many iterations of the schedule; -1 runs to the end.
  long stop_after = -1;
  double base_lr = 2.5e-4;
  double lr_power = 0.9;
  double alpha = 0.99;
  double tau = 0.9;
  double kl_eps = 1e-8;
  /// Hole count and edge ranges; -1 takes the profile default.
  int hole_count_min = -1;
  int hole_count_max = -1;
  int hole_edge_min = -1;
  int hole_edge_max = -1;
  /// Reuse the adaptive-augmentation mask for copy-paste instead of drawing a second one.
  bool share_mask = false;
  PseudoMode pseudo_mode = PseudoMode::VotIpt;
  double pseudo_ema_decay = 0.9;
  LossMode loss_mode = LossMode::CeDice;
  // Component switches.
  bool wsa = true;
  bool tue = true;
  bool pdi = true;
  bool ipt = true;
  bool bcp = true;
  /// Labeled batches only, no teacher or pseudo labels.
  bool supervised = false;
  /// Supervised iterations before the semi-supervised loop; off by default.
  /// The teacher is reset to the student when the warm-up ends.
  long warmup_iters = 0;
  int width1 = 8;
  int width2 = 16;
  int down = 4;
  int classes = 2;
  std::uint64_t seed = 0;
  /// Extra seeds used by `ablate` (the run seed is always included first).
  std::vector<std::uint64_t> extra_seeds;
  std::string out_dir = "run";
  /// Checkpoint to resume from; empty starts fresh.
  std::string resume_from;
  std::string eval_model = "teacher";
  std::string eval_split = "test";
  /// 0 means whole-volume inference.
  int window_size = 0;
  int window_stride = 0;

  NetConfig net() const { return {width1, width2, classes, down}; }
  bool all_components_off() const { return !wsa && !tue && !pdi && !ipt && !bcp; }
  /// Supervised flag set or every component disabled.
  bool supervised_only() const { return supervised || all_components_off(); }

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical text: every key in declaration order, one per line.
std::string serialize_config(const TrainConfig& config);
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// The config with run-location keys (out_dir, resume_from, stop_after)
/// reset, so runs that differ only in where they write compare equal.
TrainConfig without_run_location(TrainConfig config);

/// FNV-1a 64 of the canonical text without run-location keys, as 16 hex digits.
std::string config_hash(const TrainConfig& config);

struct HoleRanges {
  IntRange holes;
  IntRange edge;
};
HoleRanges resolve_holes(const TrainConfig& config, const Dims& dims);

}  // namespace ipacp
