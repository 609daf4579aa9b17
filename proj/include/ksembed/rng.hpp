#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ksembed/common.hpp"

namespace ksembed {

// All randomness in the library derives from a single 64-bit root seed
// through splittable counter-based streams. A stream is keyed by the chain
// of derive() calls that produced it (one logical random object per stream),
// so identical seed + identical inputs give bit-identical outputs, and
// independent objects can be generated in parallel without shared state.
using RandomSeed = std::uint64_t;

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

class RngStream {
public:
    RngStream() : key_(0) {}
    explicit RngStream(RandomSeed seed) : key_(detail::mix64(seed ^ 0x9E2B8F3A41C556D1ULL)) {}

    RngStream derive(std::uint64_t tag) const {
        RngStream s;
        s.key_ = detail::mix64(key_ ^ detail::mix64(tag));
        return s;
    }
    RngStream derive(std::string_view tag) const { return derive(detail::fnv1a(tag)); }
    RngStream derive(std::string_view tag, std::uint64_t idx) const {
        return derive(tag).derive(idx);
    }

    std::uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return detail::mix64(key_ ^ counter_);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform index in [0, n). Multiply-shift; bias is O(n / 2^64).
    index_t uniform_index(index_t n) {
        return static_cast<index_t>((static_cast<unsigned __int128>(next_u64()) *
                                     static_cast<unsigned __int128>(n)) >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Marsaglia polar method; rejection consumes the stream
        // deterministically, so draws stay a pure function of the stream.
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Fisher-Yates permutation of [0, n).
    std::vector<std::int32_t> permutation(index_t n) {
        std::vector<std::int32_t> p(static_cast<size_t>(n));
        for (index_t i = 0; i < n; ++i) p[static_cast<size_t>(i)] = static_cast<std::int32_t>(i);
        for (index_t i = n - 1; i > 0; --i) {
            index_t j = uniform_index(i + 1);
            std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
        }
        return p;
    }

    // k distinct values in [0, n), Floyd's algorithm. Order is the sampling
    // order, not sorted.
    std::vector<index_t> distinct(index_t n, index_t k) {
        std::vector<index_t> out;
        out.reserve(static_cast<size_t>(k));
        for (index_t i = n - k; i < n; ++i) {
            index_t t = uniform_index(i + 1);
            bool seen = false;
            for (index_t v : out) {
                if (v == t) { seen = true; break; }
            }
            out.push_back(seen ? i : t);
        }
        return out;
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ksembed
