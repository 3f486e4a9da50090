// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace moelab {

/// Worker count: hardware concurrency, capped by MOE_LAB_THREADS when set.
unsigned worker_count();

/// Runs fn(0..n_tasks-1) on up to worker_count() threads. Tasks must write
/// only to their own slot; callers reduce afterwards in index order.
void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn);

}  // namespace moelab
