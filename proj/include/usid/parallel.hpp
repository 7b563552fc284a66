#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace usid {

// Worker count: USID_WORKERS env var wins, else hardware concurrency.
inline unsigned default_workers() {
    if (const char* env = std::getenv("USID_WORKERS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Chunked parallel loop over [0, n). Each index is processed exactly once and
// must write only to its own output slots, so results are identical for any
// worker count.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn, unsigned workers = 0) {
    if (workers == 0) workers = default_workers();
    if (n == 0) return;
    workers = static_cast<unsigned>(std::min<size_t>(workers, n));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const size_t lo = static_cast<size_t>(w) * chunk;
        const size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace usid
