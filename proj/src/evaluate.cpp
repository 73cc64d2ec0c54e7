#include "ipacp/evaluate.hpp"

#include <algorithm>

#include "ipacp/config.hpp"
#include "ipacp/errors.hpp"

#ifndef IPACP_REVISION
#define IPACP_REVISION "unknown"
#endif

namespace ipacp {

std::string revision() { return IPACP_REVISION; }

namespace {

std::vector<int> window_starts(int extent, int window, int stride) {
  std::vector<int> starts;
  if (window >= extent) return {0};
  for (int s = 0; s + window < extent; s += stride) starts.push_back(s);
  starts.push_back(extent - window);
  return starts;
}

}  // namespace

ProbMap sliding_window_predict(const SegNet& net, const ParamVector& params, const Volume& image,
                               const InferenceOptions& options) {
  const Dims d = image.dims();
  const int w = options.window;
  if (w <= 0 || options.stride <= 0 || options.stride > w) {
    throw std::invalid_argument("sliding window needs 0 < stride <= window");
  }
  if (w > std::min({d.depth, d.height, d.width})) return net.forward(params, image);
  const int classes = net.config().classes;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d.voxels(), classes);
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(d.voxels());
  const Dims wd{w, w, w};
  for (int z0 : window_starts(d.depth, w, options.stride)) {
    for (int y0 : window_starts(d.height, w, options.stride)) {
      for (int x0 : window_starts(d.width, w, options.stride)) {
        Volume patch(wd, 0.0);
        for (int z = 0; z < w; ++z)
          for (int y = 0; y < w; ++y)
            for (int x = 0; x < w; ++x) patch(z, y, x) = image(z0 + z, y0 + y, x0 + x);
        const ProbMap p = net.forward(params, patch);
        for (int z = 0; z < w; ++z)
          for (int y = 0; y < w; ++y)
            for (int x = 0; x < w; ++x) {
              const Eigen::Index dst = d.index(z0 + z, y0 + y, x0 + x);
              sum.row(dst) += p.probs().row(wd.index(z, y, x));
              hits[dst] += 1.0;
            }
      }
    }
  }
  for (Eigen::Index i = 0; i < sum.rows(); ++i) sum.row(i) /= hits[i];
  return ProbMap(d, std::move(sum));
}

ProbMap predict(const SegNet& net, const ParamVector& params, const Volume& image,
                const InferenceOptions& options) {
  return options.window > 0 ? sliding_window_predict(net, params, image, options)
                            : net.forward(params, image);
}

MetricsReport evaluate(const Dataset& ds, const std::vector<std::string>& ids,
                       const Predictor& predictor, nlohmann::json metadata) {
  MetricsReport report;
  report.metadata = std::move(metadata);
  report.metadata["revision"] = revision();
  report.metadata["rmse_definition"] = "binary voxelwise RMSE x 100";
  for (const auto& id : ids) {
    const Volume image = ds.image(id);
    const LabelMap labels = ds.labels(id);
    const BinaryMask prediction = predictor(id, image);
    const Spacing spacing = labels.spacing.value_or(image.spacing.value_or(Spacing{}));
    report.cases.push_back(evaluate_case(id, prediction, foreground(labels), spacing));
  }
  return report;
}

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds,
                                  const std::string& split, const std::string& which,
                                  const InferenceOptions& options) {
  if (which != "teacher" && which != "student") {
    throw ConfigError("evaluation model must be teacher or student, got '" + which + "'");
  }
  const SegNet net(ckpt.net);
  const ParamVector& params = which == "teacher" ? ckpt.teacher : ckpt.student;
  nlohmann::json meta{{"seed", ckpt.seed},
                      {"arch", arch_string(ckpt.net)},
                      {"iteration", ckpt.iteration},
                      {"model", which},
                      {"split", split},
                      {"window", options.window},
                      {"stride", options.stride}};
  if (!ckpt.config_text.empty()) {
    meta["config_hash"] = config_hash(parse_config(ckpt.config_text));
  }
  return evaluate(
      ds, ds.ids(split),
      [&](const std::string&, const Volume& image) {
        return foreground(argmax_labels(predict(net, params, image, options)));
      },
      std::move(meta));
}

}  // namespace ipacp
