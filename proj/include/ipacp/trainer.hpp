#pragma once

// The mean-teacher training loop with adaptive augmentation, pseudo-label
// transition and bidirectional copy-paste.

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ipacp/checkpoint.hpp"
#include "ipacp/config.hpp"
#include "ipacp/phantom.hpp"
#include "ipacp/uncertainty.hpp"

namespace ipacp {

struct LogRow {
  long iter = 0;
  long epoch = 0;
  double lr = 0.0;
  double loss_l_to_u = 0.0;
  double loss_u_to_l = 0.0;
  double mu_mean = 0.0;
  double disagreement = 0.0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

std::string log_header();
std::string format_log_row(const LogRow& row);

/// Replacements for individual stages of the unlabeled branch. An empty
/// hook keeps the built-in stage (subject to the component flags).
struct TrainHooks {
  std::function<double(const ProbMap& p_s, const ProbMap& p_t, double tau)> uncertainty_score;
  std::function<BinaryMask(const ProbMap& p_s, const ProbMap& p_t)> disagreement;
  std::function<LabelMap(const ProbMap& p_t, const ProbMap& p_s, const PseudoContext& ctx,
                         EmaTargetBank& bank)>
      pseudo_label;
  /// Receives the two drawn copy-paste masks of a pair, returns the ones to use.
  std::function<std::pair<BinaryMask, BinaryMask>(const BinaryMask& m_i, const BinaryMask& m_j)>
      copy_paste_masks;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

/// In-memory training on preloaded cases; writes nothing.
class Trainer {
 public:
  Trainer(TrainConfig config, DatasetSplit split, std::map<std::string, TrainingSample> cases,
          TrainHooks hooks = {});

  /// Fresh state: Glorot student, teacher copied from it, zero Adam moments.
  Checkpoint initial_state() const;
  /// Runs iterations [state.iteration, end) of the schedule, calling
  /// `on_row` after each optimizer step. Throws NumericError on a
  /// non-finite loss, leaving `state` at the last good step.
  void run(Checkpoint& state, long end, const std::function<void(const LogRow&)>& on_row) const;

  const TrainConfig& config() const { return config_; }
  long total_epochs() const { return sampler_.total_epochs(config_.total_iters); }

  struct StepOutcome;

 private:
  StepOutcome step(const Checkpoint& state, long iteration) const;
  TrainingSample crop(const TrainingSample& s, std::uint64_t seed) const;

  TrainConfig config_;
  DatasetSplit split_;
  std::map<std::string, TrainingSample> cases_;
  std::map<std::string, int> unlabeled_index_;
  TrainHooks hooks_;
  SegNet net_;
  BatchSampler sampler_;
};

/// Loads the dataset named by the config, trains (or resumes), and writes
/// `<out_dir>/train_log.csv`, `<out_dir>/checkpoint.vol` and
/// `<out_dir>/config.txt`. Throws ConfigError, DataError or NumericError.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});

std::map<std::string, TrainingSample> load_cases(const Dataset& ds,
                                                 const std::vector<std::string>& ids);

}  // namespace ipacp
