#pragma once

// Teacher/student disagreement and the two-way KL uncertainty score.

#include <stdexcept>

#include "ipacp/volume.hpp"

namespace ipacp {

template <typename Scalar>
struct BasicUncertaintyPair {
  BasicVolume<Scalar> d_s_to_t;
  BasicVolume<Scalar> d_t_to_s;
};
using UncertaintyPair = BasicUncertaintyPair<double>;

/// 1 where the argmax labels of the two predictions differ.
template <typename Scalar>
BinaryMask prediction_disagreement(const BasicProbMap<Scalar>& p_s,
                                   const BasicProbMap<Scalar>& p_t) {
  require_same_shape(p_s, p_t, "prediction_disagreement");
  const LabelMap ls = argmax_labels(p_s);
  const LabelMap lt = argmax_labels(p_t);
  BinaryMask out(p_s.dims(), 0);
  out.data() = (ls.data() != lt.data()).template cast<std::uint8_t>();
  return out;
}

/// Per-voxel sum_c a_c log((a_c + eps) / (b_c + eps)), floored at zero to
/// absorb the O(eps^2) negative excursions the smoothing can introduce.
template <typename Scalar>
BasicVolume<Scalar> directed_kl(const BasicProbMap<Scalar>& a, const BasicProbMap<Scalar>& b,
                                Scalar eps) {
  const auto pa = a.probs().array();
  const auto pb = b.probs().array();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> d =
      (pa * ((pa + eps) / (pb + eps)).log()).matrix().rowwise().sum().array().max(Scalar(0));
  return BasicVolume<Scalar>(a.dims(), std::move(d));
}

template <typename Scalar>
BasicUncertaintyPair<Scalar> kl_two_way(const BasicProbMap<Scalar>& p_s,
                                        const BasicProbMap<Scalar>& p_t,
                                        Scalar eps = Scalar(1e-8)) {
  require_same_shape(p_s, p_t, "kl_two_way");
  if (!(eps > Scalar(0))) throw std::invalid_argument("kl_two_way: eps must be positive");
  return {directed_kl(p_s, p_t, eps), directed_kl(p_t, p_s, eps)};
}

/// Mean over voxels of the KL terms of whichever model is not confident
/// (max prob < tau), clamped to [0,1] for use as a blend weight.
template <typename Scalar>
Scalar high_uncertainty_score(const BasicProbMap<Scalar>& p_s, const BasicProbMap<Scalar>& p_t,
                              const BasicUncertaintyPair<Scalar>& u, Scalar tau = Scalar(0.9)) {
  require_same_shape(p_s, p_t, "high_uncertainty_score");
  require_same_dims(p_s.dims(), u.d_s_to_t.dims(), "high_uncertainty_score");
  require_same_dims(p_s.dims(), u.d_t_to_s.dims(), "high_uncertainty_score");
  if (!(tau > Scalar(0) && tau < Scalar(1))) {
    throw std::invalid_argument("high_uncertainty_score: tau must lie in (0,1)");
  }
  const auto teacher_open = (p_t.probs().rowwise().maxCoeff().array() < tau).template cast<Scalar>();
  const auto student_open = (p_s.probs().rowwise().maxCoeff().array() < tau).template cast<Scalar>();
  const Scalar mu = (teacher_open * u.d_t_to_s.data() + student_open * u.d_s_to_t.data()).mean();
  return std::clamp(mu, Scalar(0), Scalar(1));
}

}  // namespace ipacp
