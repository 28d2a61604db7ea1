#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"

namespace rsasim {

struct Moments {
    double mean = 0.0;
    double sd = 0.0;  // n - 1 denominator
};

inline Moments moments(std::span<const double> v) {
    if (v.size() < 2) throw ConfigError("summary statistics need at least 2 values");
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// [mean - SD, mean + SD].
inline Interval interval(std::span<const double> v) {
    const Moments m = moments(v);
    return {m.mean - m.sd, m.mean + m.sd};
}

/// (mean_large - mean_small) / sqrt((SD_large² + SD_small²) / 2).
inline double cohens_d(std::span<const double> large, std::span<const double> small) {
    const Moments a = moments(large);
    const Moments b = moments(small);
    const double pooled = std::sqrt(0.5 * (a.sd * a.sd + b.sd * b.sd));
    if (!(pooled > 0.0)) throw DegenerateError("Cohen's d undefined: pooled SD is zero");
    return (a.mean - b.mean) / pooled;
}

/// Fraction of pairs whose larger-effect estimate strictly exceeds the smaller-effect
/// one. Ties count as incorrect.
inline double selection_accuracy(std::span<const std::pair<double, double>> paired) {
    if (paired.empty()) throw ConfigError("selection accuracy needs at least one pair");
    std::size_t correct = 0;
    for (const auto& [large, small] : paired)
        if (large > small) ++correct;
    return static_cast<double>(correct) / static_cast<double>(paired.size());
}

/// Aggregated comparison of one method over replications. Undefined statistics are NaN.
struct ComparisonSummary {
    double mean_large = std::numeric_limits<double>::quiet_NaN();
    double sd_large = std::numeric_limits<double>::quiet_NaN();
    double mean_small = std::numeric_limits<double>::quiet_NaN();
    double sd_small = std::numeric_limits<double>::quiet_NaN();
    Interval interval_large{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    Interval interval_small{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double cohens_d = std::numeric_limits<double>::quiet_NaN();
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_effective = 0;
};

/// Summarise pairs where both estimates are available. Pairs with a missing estimate
/// (NaN, i.e. a degenerate score) are dropped before any statistic is computed.
inline ComparisonSummary summarize(std::span<const std::pair<double, double>> paired) {
    std::vector<std::pair<double, double>> used;
    std::vector<double> large, small;
    for (const auto& pr : paired) {
        if (std::isnan(pr.first) || std::isnan(pr.second)) continue;
        used.push_back(pr);
        large.push_back(pr.first);
        small.push_back(pr.second);
    }
    ComparisonSummary s;
    s.n_effective = used.size();
    if (!used.empty()) s.accuracy = selection_accuracy(used);
    if (used.size() < 2) return s;
    const Moments ml = moments(large);
    const Moments ms = moments(small);
    s.mean_large = ml.mean;
    s.sd_large = ml.sd;
    s.mean_small = ms.mean;
    s.sd_small = ms.sd;
    s.interval_large = {ml.mean - ml.sd, ml.mean + ml.sd};
    s.interval_small = {ms.mean - ms.sd, ms.mean + ms.sd};
    try {
        s.cohens_d = cohens_d(large, small);
    } catch (const DegenerateError&) {
    }
    return s;
}

}  // namespace rsasim
