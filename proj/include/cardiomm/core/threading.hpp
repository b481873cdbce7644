#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace cardiomm {

// Intra-op worker count for the heavy kernels (convolution tiles). Workers
// always own disjoint output ranges with a fixed partition, so results are
// bitwise identical for any thread count.
inline int& math_threads() {
    static int n = 1;
    return n;
}

template <typename F>
void parallel_for(int64_t n, F&& body) {
    const int nt = math_threads();
    if (nt <= 1 || n < 2) {
        body(int64_t(0), n);
        return;
    }
    const int workers = int(std::min<int64_t>(nt, n));
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    const int64_t chunk = (n + workers - 1) / workers;
    for (int t = 0; t < workers; ++t) {
        const int64_t lo = t * chunk;
        const int64_t hi = std::min<int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace cardiomm
