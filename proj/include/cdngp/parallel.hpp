// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <omp.h>

namespace cdngp {

// Batch kernels take an Exec tag. Serial runs the plain loop and is the
// reference the OpenMP path is tested and benchmarked against.
enum class Exec { Serial, Parallel };

inline int max_threads(Exec exec) { return exec == Exec::Parallel ? omp_get_max_threads() : 1; }

inline int thread_index() { return omp_get_thread_num(); }

/// Pins the OpenMP worker count for the process.
inline void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace cdngp
