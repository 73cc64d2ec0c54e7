#pragma once

// Uncertainty-adaptive blending of the weak and masked-strong views.

#include <stdexcept>

#include "ipacp/volume.hpp"

namespace ipacp {

/// m * strong: the student input, strong view with the mask holes zeroed.
template <typename Scalar>
BasicVolume<Scalar> masked_strong_view(const BasicVolume<Scalar>& weak_v,
                                       const BasicVolume<Scalar>& strong_v, const BinaryMask& m) {
  require_same_dims(weak_v.dims(), strong_v.dims(), "masked_strong_view");
  require_same_dims(strong_v.dims(), m.dims(), "masked_strong_view");
  BasicVolume<Scalar> out(strong_v.dims(),
                          (m.data().template cast<Scalar>() * strong_v.data()).eval());
  out.spacing = strong_v.spacing;
  return out;
}

/// (1 - mu) * weak + mu * masked_strong. The result is clamped to the
/// interval spanned by the two sources so rounding never leaves it.
template <typename Scalar>
BasicVolume<Scalar> adaptive_blend(const BasicVolume<Scalar>& weak_v,
                                   const BasicVolume<Scalar>& masked_strong_v, Scalar mu) {
  require_same_dims(weak_v.dims(), masked_strong_v.dims(), "adaptive_blend");
  if (!(mu >= Scalar(0) && mu <= Scalar(1))) {
    throw std::invalid_argument("adaptive_blend: mu must lie in [0,1]");
  }
  const auto& a = weak_v.data();
  const auto& b = masked_strong_v.data();
  BasicVolume<Scalar> out(weak_v.dims(),
                          ((Scalar(1) - mu) * a + mu * b).max(a.min(b)).min(a.max(b)).eval());
  out.spacing = weak_v.spacing;
  return out;
}

/// Disagreeing voxels take the masked strong view, the rest keep u_hat.
template <typename Scalar>
BasicVolume<Scalar> disagreement_blend(const BasicVolume<Scalar>& u_hat,
                                       const BasicVolume<Scalar>& masked_strong_v,
                                       const BinaryMask& p_dif) {
  require_same_dims(u_hat.dims(), masked_strong_v.dims(), "disagreement_blend");
  require_same_dims(u_hat.dims(), p_dif.dims(), "disagreement_blend");
  const auto d = p_dif.data().template cast<Scalar>();
  BasicVolume<Scalar> out(u_hat.dims(),
                          ((Scalar(1) - d) * u_hat.data() + d * masked_strong_v.data()).eval());
  out.spacing = u_hat.spacing;
  return out;
}

}  // namespace ipacp
