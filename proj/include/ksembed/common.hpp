#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ksembed {

using index_t = std::int64_t;

// Thrown when an operation hits a non-finite intermediate or a failed solve.
// The message carries a stage tag identifying where the failure surfaced.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown by oracle-scale operations when their explicit size guard is exceeded.
struct resource_limit_error : std::runtime_error {
    explicit resource_limit_error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when the input data carries no mass to sample from (e.g. all-zero X).
struct degenerate_input_error : std::runtime_error {
    explicit degenerate_input_error(const std::string& what) : std::runtime_error(what) {}
};

inline index_t next_pow2(index_t v) {
    index_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

// Worker budget: KSEMBED_THREADS caps it, hardware concurrency otherwise.
inline int thread_budget() {
    if (const char* env = std::getenv("KSEMBED_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Block-partitioned parallel map. fn(begin, end) runs on disjoint ranges, so
// results are identical for any worker count as long as fn writes only its
// own slots.
template <typename Fn>
void parallel_for(index_t n, Fn&& fn, int max_threads = -1) {
    if (n <= 0) return;
    int workers = max_threads > 0 ? max_threads : thread_budget();
    if (workers > n) workers = static_cast<int>(n);
    if (workers <= 1) {
        fn(index_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    index_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        index_t lo = w * chunk;
        index_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace ksembed
