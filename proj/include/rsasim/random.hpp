#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace rsasim {

/// Random stream used throughout the library. std::mt19937_64 is fully specified by
/// the standard and the Boost distributions below are portable, so draws are
/// identical across platforms and standard libraries.
using Stream = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Keyed substream for one stochastic decision. The key is hashed through a chain of
/// splitmix64 rounds, so every (seed, key, replication, label) tuple gets its own
/// reproducible generator regardless of which worker evaluates it.
inline Stream derive_stream(std::uint64_t base_seed, std::uint64_t key, std::uint64_t replication,
                            std::string_view label) {
    std::uint64_t h = detail::splitmix64(base_seed);
    h = detail::splitmix64(h ^ key);
    h = detail::splitmix64(h ^ replication);
    h = detail::splitmix64(h ^ detail::fnv1a(label));
    return Stream{h};
}

inline double standard_normal(Stream& rng) {
    boost::random::normal_distribution<double> dist;
    return dist(rng);
}

inline double uniform(Stream& rng, double lo, double hi) {
    if (lo == hi) return lo;
    boost::random::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

/// rows x cols matrix of i.i.d. N(0,1), drawn in row-major order.
inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Stream& rng) {
    Eigen::MatrixXd z(rows, cols);
    boost::random::normal_distribution<double> dist;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = dist(rng);
    return z;
}

/// Fisher-Yates permutation of 0..n-1 driven by the stream (portable, unlike std::shuffle).
inline std::vector<Eigen::Index> permutation(Eigen::Index n, Stream& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = n - 1; i > 0; --i) {
        // rejection keeps the modulo unbiased
        const std::uint64_t bound = static_cast<std::uint64_t>(i) + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v = rng();
        while (v >= limit) v = rng();
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(v % bound)]);
    }
    return idx;
}

}  // namespace rsasim
