#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ipacp {

/// Keeps large feature buffers on the heap instead of a fresh mmap per
/// allocation; training reallocates the same sizes every iteration.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace ipacp
