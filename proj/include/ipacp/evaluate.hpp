#pragma once

// Inference and metric reports for checkpoints or arbitrary predictors.

#include <functional>
#include <string>
#include <vector>

#include "ipacp/checkpoint.hpp"
#include "ipacp/metrics.hpp"
#include "ipacp/phantom.hpp"

namespace ipacp {

struct InferenceOptions {
  /// 0 = whole-volume inference.
  int window = 0;
  int stride = 0;
};

/// Averages the softmax outputs of overlapping cubic windows; every voxel is
/// covered because the last window along each axis is flush with the border.
ProbMap sliding_window_predict(const SegNet& net, const ParamVector& params, const Volume& image,
                               const InferenceOptions& options);
ProbMap predict(const SegNet& net, const ParamVector& params, const Volume& image,
                const InferenceOptions& options = {});

/// Foreground prediction for one case.
using Predictor = std::function<BinaryMask(const std::string& id, const Volume& image)>;

MetricsReport evaluate(const Dataset& ds, const std::vector<std::string>& ids,
                       const Predictor& predictor, nlohmann::json metadata = nlohmann::json::object());

/// `which` is "teacher" or "student".
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds,
                                  const std::string& split, const std::string& which,
                                  const InferenceOptions& options = {});

/// Build revision string baked in at configure time.
std::string revision();

}  // namespace ipacp
