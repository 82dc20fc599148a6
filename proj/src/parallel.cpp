// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/parallel.hpp"

#include "splatseg/error.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace splatseg {

namespace {
std::atomic<int> gThreads{1};
}

void set_thread_count(int threads)
{
    if (threads < 1) raise(ErrorKind::UsageError, "thread count must be >= 1");
    gThreads.store(threads);
}

int thread_count() { return gThreads.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn)
{
    if (n <= 0) return;
    int threads = gThreads.load();
    if (threads > n) threads = int(n);
    if (threads <= 1) {
        fn(0, n);
        return;
    }
    // Contiguous, near-equal chunks; the first (n % threads) chunks get one
    // extra element. The split is a pure function of (n, threads).
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    int64_t base = n / threads;
    int64_t extra = n % threads;
    int64_t begin = 0;
    for (int t = 0; t < threads; ++t) {
        int64_t len = base + (t < extra ? 1 : 0);
        int64_t end = begin + len;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
        begin = end;
    }
    for (auto& th : pool) th.join();
}

} // namespace splatseg
