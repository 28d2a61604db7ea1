#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "error.hpp"
#include "methods.hpp"
#include "metrics.hpp"

namespace rsasim {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One row of results.csv: a single method's estimate for one model in one replication.
struct ResultRecord {
    std::string experiment;
    int condition_id = 0;
    long n = 0;
    double noise_var = kNaN;
    std::optional<int> p;
    double rho_rel = kNaN;
    double rho_irrel = kNaN;
    int replication = 0;
    Method method = Method::rsa;
    int model_rank = 0;  // 0 = large (or first composite)
    std::string model;
    double estimate = kNaN;
    Status status = Status::ok;
};

/// One row of summary.csv.
struct SummaryRow {
    std::string experiment;
    int condition_id = 0;
    long n = 0;
    double noise_var = kNaN;
    std::optional<int> p;
    double rho_rel = kNaN;
    double rho_irrel = kNaN;
    Method method = Method::rsa;
    ComparisonSummary stats;
};

inline constexpr const char* kResultsHeader =
    "experiment,condition_id,n,noise_var,p,rho_rel,rho_irrel,replication,method,model,estimate,status";
inline constexpr const char* kSummaryHeader =
    "experiment,condition_id,n,noise_var,p,rho_rel,rho_irrel,method,mean_large,sd_large,mean_small,sd_small,"
    "interval_lo_large,interval_hi_large,interval_lo_small,interval_hi_small,cohens_d,accuracy,n_effective";

/// 10 significant digits, '.' separator, independent of the global locale. NaN prints
/// as an empty field.
inline std::string format_number(double v) {
    if (std::isnan(v)) return {};
    if (v == 0.0) v = 0.0;  // drop the sign of negative zero
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
    return std::string(buf, res.ptr);
}

inline void sort_records(std::vector<ResultRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const ResultRecord& a, const ResultRecord& b) {
        return std::tuple(a.condition_id, a.replication, static_cast<int>(a.method), a.model_rank) <
               std::tuple(b.condition_id, b.replication, static_cast<int>(b.method), b.model_rank);
    });
}

namespace detail {

template <class Row>
void write_condition_fields(std::ostream& os, const Row& r) {
    os << r.experiment << ',' << r.condition_id << ',' << r.n << ',' << format_number(r.noise_var) << ','
       << (r.p ? std::to_string(*r.p) : std::string{}) << ',' << format_number(r.rho_rel) << ','
       << format_number(r.rho_irrel);
}

}  // namespace detail

inline void write_results_csv(std::ostream& os, const std::vector<ResultRecord>& records) {
    os << kResultsHeader << '\n';
    for (const ResultRecord& r : records) {
        detail::write_condition_fields(os, r);
        os << ',' << r.replication << ',' << to_string(r.method) << ',' << r.model << ','
           << format_number(r.status == Status::ok ? r.estimate : kNaN) << ',' << to_string(r.status) << '\n';
    }
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << kSummaryHeader << '\n';
    for (const SummaryRow& r : rows) {
        const ComparisonSummary& s = r.stats;
        detail::write_condition_fields(os, r);
        os << ',' << to_string(r.method) << ',' << format_number(s.mean_large) << ',' << format_number(s.sd_large)
           << ',' << format_number(s.mean_small) << ',' << format_number(s.sd_small) << ','
           << format_number(s.interval_large.lo) << ',' << format_number(s.interval_large.hi) << ','
           << format_number(s.interval_small.lo) << ',' << format_number(s.interval_small.hi) << ','
           << format_number(s.cohens_d) << ',' << format_number(s.accuracy) << ',' << s.n_effective << '\n';
    }
}

/// Pairs the rank-0 and rank-1 models per (condition, method, replication) and
/// aggregates each (condition, method) group. Expects sorted records.
inline std::vector<SummaryRow> summarize_records(const std::vector<ResultRecord>& records) {
    struct Group {
        const ResultRecord* first = nullptr;
        std::map<int, std::pair<double, double>> by_replication;
        bool same_p = true;
    };
    std::map<std::pair<int, int>, Group> groups;
    for (const ResultRecord& r : records) {
        if (r.model_rank > 1) continue;
        Group& g = groups[{r.condition_id, static_cast<int>(r.method)}];
        if (!g.first) g.first = &r;
        if (g.first->p != r.p) g.same_p = false;
        auto [it, inserted] = g.by_replication.try_emplace(r.replication, kNaN, kNaN);
        const double value = r.status == Status::ok ? r.estimate : kNaN;
        (r.model_rank == 0 ? it->second.first : it->second.second) = value;
    }
    std::vector<SummaryRow> rows;
    rows.reserve(groups.size());
    for (const auto& [key, g] : groups) {
        std::vector<std::pair<double, double>> pairs;
        pairs.reserve(g.by_replication.size());
        for (const auto& [rep, pr] : g.by_replication) pairs.push_back(pr);
        const ResultRecord& f = *g.first;
        rows.push_back({f.experiment, f.condition_id, f.n, f.noise_var, g.same_p ? f.p : std::nullopt, f.rho_rel,
                        f.rho_irrel, f.method, summarize(pairs)});
    }
    return rows;
}

struct OutputFiles {
    std::filesystem::path results;
    std::filesystem::path summary;
};

inline OutputFiles write_outputs(const std::vector<ResultRecord>& records, const std::vector<SummaryRow>& summary,
                                 const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    OutputFiles files{dir / "results.csv", dir / "summary.csv"};
    {
        std::ofstream out(files.results, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + files.results.string());
        write_results_csv(out, records);
        if (!out) throw std::runtime_error("write failed: " + files.results.string());
    }
    {
        std::ofstream out(files.summary, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + files.summary.string());
        write_summary_csv(out, summary);
        if (!out) throw std::runtime_error("write failed: " + files.summary.string());
    }
    return files;
}

}  // namespace rsasim
