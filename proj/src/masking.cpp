#include "ipacp/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipacp {

BinaryMask gen_multihole_mask(const Dims& dims, IntRange holes, IntRange edge, Rng& rng) {
  if (!dims.valid()) throw std::invalid_argument("gen_multihole_mask: invalid dims");
  if (holes.lo < 0 || holes.hi < holes.lo) {
    throw std::invalid_argument("gen_multihole_mask: invalid hole-count range");
  }
  if (edge.lo < 1 || edge.hi < edge.lo) {
    throw std::invalid_argument("gen_multihole_mask: invalid hole-size range");
  }
  const int smallest = std::min({dims.depth, dims.height, dims.width});
  if (edge.hi > smallest) {
    throw std::invalid_argument("gen_multihole_mask: hole size " + std::to_string(edge.hi) +
                                " exceeds grid dims " + to_string(dims));
  }

  BinaryMask mask(dims, 1);
  const int n = std::uniform_int_distribution<int>(holes.lo, holes.hi)(rng);
  std::uniform_int_distribution<int> edge_dist(edge.lo, edge.hi);
  for (int h = 0; h < n; ++h) {
    int start[3];
    int len[3];
    for (int axis = 0; axis < 3; ++axis) {
      len[axis] = edge_dist(rng);
      start[axis] = std::uniform_int_distribution<int>(0, dims[axis] - len[axis])(rng);
    }
    for (int z = start[0]; z < start[0] + len[0]; ++z) {
      for (int y = start[1]; y < start[1] + len[1]; ++y) {
        for (int x = start[2]; x < start[2] + len[2]; ++x) mask(z, y, x) = 0;
      }
    }
  }
  return mask;
}

namespace {
IntRange scaled_edge(const Dims& dims, IntRange base) {
  const int smallest = std::min({dims.depth, dims.height, dims.width});
  const double scale = smallest / 160.0;
  IntRange out{std::max(1, int(std::lround(base.lo * scale))),
               std::max(1, int(std::lround(base.hi * scale)))};
  out.hi = std::min(out.hi, smallest);
  out.lo = std::min(out.lo, out.hi);
  return out;
}
}  // namespace

HoleProfile large_tumor_holes(const Dims& dims) { return {{5, 40}, scaled_edge(dims, {10, 40})}; }

HoleProfile small_tumor_holes(const Dims& dims) { return {{10, 30}, scaled_edge(dims, {10, 20})}; }

}  // namespace ipacp
