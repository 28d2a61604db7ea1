#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace rsasim {

enum class Metric { correlation, euclidean };

inline const char* to_string(Metric m) { return m == Metric::correlation ? "correlation" : "euclidean"; }

/// Condensed dissimilarity matrix: the strict lower triangle in the order
/// (1,0), (2,0), (2,1), (3,0), ... (zero-based item indices).
struct Rdm {
    Eigen::Index n_items = 0;
    std::vector<double> values;
    Metric metric = Metric::correlation;

    static constexpr std::size_t index(Eigen::Index i, Eigen::Index j) noexcept {
        if (i < j) std::swap(i, j);
        return static_cast<std::size_t>(i * (i - 1) / 2 + j);
    }
    static constexpr std::size_t condensed_size(Eigen::Index n) noexcept {
        return n < 2 ? 0 : static_cast<std::size_t>(n * (n - 1) / 2);
    }

    /// Entry of the implied full symmetric matrix (zero on the diagonal).
    [[nodiscard]] double at(Eigen::Index i, Eigen::Index j) const {
        return i == j ? 0.0 : values[index(i, j)];
    }
};

/// 1 - Pearson correlation between every pair of rows.
inline Rdm correlation_rdm(const Eigen::MatrixXd& x) {
    if (x.cols() < 2) throw ConfigError("correlation distance needs at least 2 features per item");
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = centered.row(i).norm();
        const double scale = x.row(i).cwiseAbs().maxCoeff();
        if (!(norm > 1e-12 * scale * std::sqrt(static_cast<double>(x.cols()))))
            throw DegenerateError("row " + std::to_string(i) +
                                  " is constant across features; correlation distance is undefined");
        centered.row(i) /= norm;
    }
    const Eigen::MatrixXd r = centered * centered.transpose();
    Rdm out{n, std::vector<double>(Rdm::condensed_size(n)), Metric::correlation};
    std::size_t k = 0;
    for (Eigen::Index i = 1; i < n; ++i)
        for (Eigen::Index j = 0; j < i; ++j) out.values[k++] = std::clamp(1.0 - r(i, j), 0.0, 2.0);
    return out;
}

/// Euclidean distance between rows; q = 1 reduces to absolute differences.
inline Rdm euclidean_rdm(const Eigen::MatrixXd& y) {
    const Eigen::Index n = y.rows();
    Rdm out{n, std::vector<double>(Rdm::condensed_size(n)), Metric::euclidean};
    std::size_t k = 0;
    if (y.cols() == 1) {
        for (Eigen::Index i = 1; i < n; ++i)
            for (Eigen::Index j = 0; j < i; ++j) out.values[k++] = std::abs(y(i, 0) - y(j, 0));
        return out;
    }
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = y;
    for (Eigen::Index i = 1; i < n; ++i)
        for (Eigen::Index j = 0; j < i; ++j) out.values[k++] = (rows.row(i) - rows.row(j)).norm();
    return out;
}

inline Rdm make_rdm(const Eigen::MatrixXd& x, Metric metric) {
    return metric == Metric::correlation ? correlation_rdm(x) : euclidean_rdm(x);
}

namespace detail {

/// Maps a double to an unsigned key with the same ordering (IEEE-754 bit trick).
inline std::uint64_t order_key(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

/// Permutation that sorts `v` ascending, ties in index order. Each value's high varying
/// key bits are packed above its index into one word and radix sorted on 12-bit digits;
/// runs that agree on those bits are then finished on the full key.
inline std::vector<std::uint32_t> sort_order(std::span<const double> v) {
    const std::size_t m = v.size();
    std::vector<std::uint64_t> keys(m);
    std::uint64_t varying = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (std::isnan(v[i])) throw NumericalError("cannot rank NaN values");
        keys[i] = order_key(v[i]);
        varying |= keys[i] ^ keys[0];
    }
    std::vector<std::uint32_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::uint32_t{0});
    if (m < 2048) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
        return idx;
    }
    if (varying == 0) return idx;

    const int index_bits = std::bit_width(m - 1);
    const int key_bits = std::bit_width(varying);
    const int kept = std::min(key_bits, 64 - index_bits);
    const int drop = key_bits - kept;
    const std::uint64_t key_mask = kept == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << kept) - 1;
    std::vector<std::uint64_t> packed(m), tmp(m);
    for (std::size_t i = 0; i < m; ++i) packed[i] = (((keys[i] >> drop) & key_mask) << index_bits) | i;

    constexpr int kBits = 12;
    constexpr std::size_t kBuckets = std::size_t{1} << kBits;
    std::vector<std::size_t> count(kBuckets);
    for (int shift = index_bits; shift < index_bits + kept; shift += kBits) {
        std::fill(count.begin(), count.end(), 0);
        for (std::uint64_t w : packed) ++count[(w >> shift) & (kBuckets - 1)];
        std::size_t total = 0;
        for (std::size_t& c : count) total += std::exchange(c, total);
        for (std::uint64_t w : packed) tmp[count[(w >> shift) & (kBuckets - 1)]++] = w;
        packed.swap(tmp);
    }

    const std::uint64_t index_mask = (std::uint64_t{1} << index_bits) - 1;
    for (std::size_t i = 0; i < m; ++i) idx[i] = static_cast<std::uint32_t>(packed[i] & index_mask);
    if (drop > 0) {
        std::size_t start = 0;
        while (start < m) {
            std::size_t stop = start + 1;
            while (stop < m && (packed[stop] >> index_bits) == (packed[start] >> index_bits)) ++stop;
            if (stop - start > 1)
                std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                 idx.begin() + static_cast<std::ptrdiff_t>(stop),
                                 [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
            start = stop;
        }
    }
    return idx;
}

}  // namespace detail

/// Ranks 1..m; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t m = v.size();
    const std::vector<std::uint32_t> order = detail::sort_order(v);
    std::vector<double> ranks(m);
    std::size_t start = 0;
    while (start < m) {
        std::size_t stop = start + 1;
        while (stop < m && v[order[stop]] == v[order[start]]) ++stop;
        // positions start..stop-1 hold ranks start+1..stop
        const double mid = 0.5 * static_cast<double>(start + 1 + stop);
        for (std::size_t k = start; k < stop; ++k) ranks[order[k]] = mid;
        start = stop;
    }
    return ranks;
}

/// Mid-ranks of a vector, centred and normalised so that the Spearman correlation of
/// two ranked vectors is a dot product. Lets callers rank a shared RDM once.
class RankedVector {
public:
    explicit RankedVector(std::span<const double> v) : centered_(average_ranks(v)) {
        if (centered_.size() < 3) throw ConfigError("Spearman correlation needs at least 3 values");
        const double mean = 0.5 * (static_cast<double>(centered_.size()) + 1.0);
        double ss = 0.0;
        for (double& r : centered_) {
            r -= mean;
            ss += r * r;
        }
        // Mid-ranks are half-integers, so a constant vector centres to exact zeros.
        if (ss == 0.0) throw DegenerateError("degenerate RDM: all dissimilarities are tied");
        norm_ = std::sqrt(ss);
    }

    [[nodiscard]] std::size_t size() const noexcept { return centered_.size(); }

    [[nodiscard]] double correlation(const RankedVector& other) const {
        if (other.size() != size()) throw ConfigError("rank vectors differ in length");
        double dot = 0.0;
        for (std::size_t i = 0; i < centered_.size(); ++i) dot += centered_[i] * other.centered_[i];
        return std::clamp(dot / (norm_ * other.norm_), -1.0, 1.0);
    }

private:
    std::vector<double> centered_;
    double norm_ = 0.0;
};

/// Spearman rank correlation with mid-rank tie handling (Pearson on average ranks).
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("Spearman inputs differ in length");
    return RankedVector(a).correlation(RankedVector(b));
}

/// Spearman correlation between the condensed triangles of two RDMs.
inline double rsa_score(const Rdm& x, const Rdm& y) {
    if (x.n_items != y.n_items)
        throw ConfigError("RDMs describe different item counts: " + std::to_string(x.n_items) + " vs " +
                          std::to_string(y.n_items));
    return spearman(x.values, y.values);
}

}  // namespace rsasim
