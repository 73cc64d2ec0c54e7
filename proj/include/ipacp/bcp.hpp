#pragma once

// Bidirectional copy-paste between paired labeled and unlabeled samples.
// Mask value 1 selects the first-listed source of each composition.

#include <stdexcept>
#include <utility>
#include <vector>

#include "ipacp/volume.hpp"

namespace ipacp {

/// (i, i + n/2) for i in [0, n/2).
inline std::vector<std::pair<int, int>> pair_indices(int batch_size) {
  if (batch_size <= 0 || batch_size % 2 != 0) {
    throw std::invalid_argument("pair_indices: batch size must be even and positive");
  }
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < batch_size / 2; ++i) pairs.emplace_back(i, i + batch_size / 2);
  return pairs;
}

/// m * first + (1 - m) * second, exact voxel selection.
template <typename GridT>
GridT select_by_mask(const GridT& first, const GridT& second, const BinaryMask& m) {
  require_same_dims(first.dims(), second.dims(), "copy-paste");
  require_same_dims(first.dims(), m.dims(), "copy-paste");
  GridT out(first.dims(), (m.data() != 0).select(first.data(), second.data()).eval());
  out.spacing = first.spacing;
  return out;
}

/// X_{l->u} = m_i x_i + (1 - m_i) u_i,  X_{u->l} = m_j u_j + (1 - m_j) x_j.
template <typename Scalar>
std::pair<BasicVolume<Scalar>, BasicVolume<Scalar>> bcp_images(
    const BasicVolume<Scalar>& x_i, const BasicVolume<Scalar>& u_i, const BasicVolume<Scalar>& x_j,
    const BasicVolume<Scalar>& u_j, const BinaryMask& m_i, const BinaryMask& m_j) {
  return {select_by_mask(x_i, u_i, m_i), select_by_mask(u_j, x_j, m_j)};
}

/// Y_{l->u} = m_i y_i + (1 - m_i) P_i,  Y_{u->l} = m_j P_j + (1 - m_j) y_j.
inline std::pair<LabelMap, LabelMap> bcp_labels(const LabelMap& y_i, const LabelMap& pmix_i,
                                                const LabelMap& y_j, const LabelMap& pmix_j,
                                                const BinaryMask& m_i, const BinaryMask& m_j) {
  return {select_by_mask(y_i, pmix_i, m_i), select_by_mask(pmix_j, y_j, m_j)};
}

}  // namespace ipacp
