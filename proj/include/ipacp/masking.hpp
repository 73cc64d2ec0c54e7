#pragma once

#include "ipacp/rng.hpp"
#include "ipacp/volume.hpp"

namespace ipacp {

/// Inclusive integer range.
struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// Multi-hole cuboid mask: starts all ones, then n ~ U{holes} axis-aligned
/// cuboids with per-axis edges ~ U{edge} are zeroed. Holes may overlap and
/// always lie fully inside the grid.
BinaryMask gen_multihole_mask(const Dims& dims, IntRange holes, IntRange edge, Rng& rng);

struct HoleProfile {
  IntRange holes;
  IntRange edge;
};

/// Hole ranges for the large-tumor (5-40 holes, edge 10-40) and small-tumor
/// (10-30 holes, edge 10-20) profiles, with edges scaled by min(dims)/160.
HoleProfile large_tumor_holes(const Dims& dims);
HoleProfile small_tumor_holes(const Dims& dims);

}  // namespace ipacp
