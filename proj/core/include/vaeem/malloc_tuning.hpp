#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace vaeem {

/// Training allocates and frees the same few hundred-kilobyte matrices every
/// minibatch. glibc serves blocks that size with mmap and unmaps them on free,
/// so half the run time goes to page faults. Keeping them on the heap avoids
/// that. Call once at program start; a no-op on other C libraries.
inline void tune_malloc_for_training() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace vaeem
