// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_PARALLEL_HPP
#define SPLATSEG_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace splatseg {

/// Sets the worker count used by parallel_for. 1 disables threading.
void set_thread_count(int threads);
int thread_count();

/// Runs fn over [0, n) split into at most thread_count() contiguous
/// chunks. The partition depends only on n and the thread count, and each
/// index is owned by exactly one chunk, so any value that is computed
/// entirely within its own index is bitwise independent of scheduling.
/// Never use this for reductions that share an accumulator.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

} // namespace splatseg

#endif // SPLATSEG_PARALLEL_HPP
