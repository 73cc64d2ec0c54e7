#pragma once

// Training state persisted in the volume container convention: one f64
// payload holding every section back to back, with the section table and
// run metadata in the JSON sidecar.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ipacp/pseudo_label.hpp"
#include "ipacp/seg_net.hpp"

namespace ipacp {

struct Checkpoint {
  NetConfig net;
  ParamVector student;
  ParamVector teacher;
  OptimState optim;
  /// Optimizer steps completed so far.
  long iteration = 0;
  double alpha = 0.99;
  std::uint64_t seed = 0;
  /// Running soft targets of the EMA pseudo-label strategy (empty otherwise).
  EmaTargetBank ema_targets;
  /// Canonical text of the configuration that produced the state.
  std::string config_text;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

void save_checkpoint(const std::filesystem::path& vol_path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& vol_path);

}  // namespace ipacp
