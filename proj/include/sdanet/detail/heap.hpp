// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Training allocates and frees the same multi-megabyte buffers every batch.
// With glibc defaults those round-trip through mmap/munmap and are faulted in
// afresh each time; keeping them on the heap removes most of that system time.

#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sdanet::detail {

inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

}  // namespace sdanet::detail
