#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nonhyp {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// FNV-1a over a label; stable across platforms and runs.
constexpr std::uint64_t label_hash(std::string_view label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed of the stream identified by (global seed, stage label, index).
/// Adding a new label never perturbs existing streams.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ label_hash(label)) + splitmix64(index + 0x632BE59BD9B4E019ULL));
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return Rng(stream_seed(seed, label, index));
}

/// Uniform double in [lo, hi] built from raw 64-bit draws, so sequences do not
/// depend on the standard library's distribution implementation.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Standard normal via Box-Muller on raw draws (portable across libstdc++/libc++).
double standard_normal(Rng& rng);

/// Worker count: NONHYP_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Override used by tests and the CLI (0 restores the environment default).
void set_worker_count(int workers);

/// Runs body(i) for i in [0, count) on up to worker_count() threads. Each index
/// is processed exactly once; callers write results into pre-sized slots so
/// that reductions are performed in index order afterwards.
template <class Body>
void parallel_for(std::size_t count, Body&& body);

}  // namespace nonhyp

#include "nonhyp/parallel_impl.hpp"
