#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "harness.hpp"
#include "methods.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "records.hpp"

namespace rsasim {

// ---- CSV input -------------------------------------------------------------

/// Splits one CSV record. Handles quoted fields, doubled quotes and a trailing CR.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c == '\r' && i + 1 == line.size()) {
            break;
        } else {
            fields.back() += c;
        }
    }
    if (quoted) throw std::runtime_error("unterminated quoted field in CSV line");
    return fields;
}

namespace detail {

/// Strict decimal parse; empty, "NA", "nan" and trailing garbage are all missing.
inline bool parse_decimal(const std::string& text, double& out) {
    std::size_t b = text.find_first_not_of(" \t");
    if (b == std::string::npos) return false;
    const std::size_t e = text.find_last_not_of(" \t");
    const std::string s = text.substr(b, e - b + 1);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return false;
    out = v;
    return true;
}

}  // namespace detail

struct CompositeSpec {
    std::string name;
    std::vector<std::string> columns;
};

struct NormDataset {
    std::vector<std::string> items;
    Eigen::VectorXd response;
    std::vector<std::string> composite_names;
    std::vector<Eigen::MatrixXd> composites;  // one n x p_k block per composite
    std::size_t dropped = 0;

    [[nodiscard]] Eigen::Index rows() const { return response.size(); }
};

/// Reads a header-row CSV and keeps the complete cases over the response and all
/// composite member columns. `item_column` may be empty (items are then row numbers).
inline NormDataset load_norms(std::istream& in, const std::string& response_column,
                              const std::vector<CompositeSpec>& composites, const std::string& item_column = {}) {
    if (composites.empty()) throw ConfigError("at least one composite is required");
    for (const CompositeSpec& c : composites)
        if (c.columns.size() < 2) throw ConfigError("composite '" + c.name + "' needs at least 2 predictor columns");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("norm file is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const std::vector<std::string> header = split_csv_line(line);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("column '" + name + "' not found in norm file");
        return it->second;
    };

    const std::size_t response_idx = column(response_column);
    const std::optional<std::size_t> item_idx =
        item_column.empty() ? std::nullopt : std::optional<std::size_t>(column(item_column));
    std::vector<std::vector<std::size_t>> member_idx;
    for (const CompositeSpec& c : composites) {
        member_idx.emplace_back();
        for (const std::string& col : c.columns) member_idx.back().push_back(column(col));
    }

    NormDataset data;
    std::vector<double> response;
    std::vector<std::vector<double>> values(composites.size());
    std::size_t row_number = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row_number;
        const std::vector<std::string> f = split_csv_line(line);
        auto field = [&](std::size_t i) -> const std::string& {
            static const std::string empty;
            return i < f.size() ? f[i] : empty;
        };
        double y = 0.0;
        bool complete = detail::parse_decimal(field(response_idx), y);
        std::vector<std::vector<double>> row(composites.size());
        for (std::size_t k = 0; complete && k < composites.size(); ++k)
            for (std::size_t col : member_idx[k]) {
                double v = 0.0;
                if (!detail::parse_decimal(field(col), v)) {
                    complete = false;
                    break;
                }
                row[k].push_back(v);
            }
        if (!complete) {
            ++data.dropped;
            continue;
        }
        response.push_back(y);
        data.items.push_back(item_idx ? field(*item_idx) : std::to_string(row_number));
        for (std::size_t k = 0; k < composites.size(); ++k)
            values[k].insert(values[k].end(), row[k].begin(), row[k].end());
    }
    if (response.empty()) throw std::runtime_error("no complete rows in norm file");

    const auto n = static_cast<Eigen::Index>(response.size());
    data.response = Eigen::Map<const Eigen::VectorXd>(response.data(), n);
    for (std::size_t k = 0; k < composites.size(); ++k) {
        const auto p = static_cast<Eigen::Index>(composites[k].columns.size());
        data.composite_names.push_back(composites[k].name);
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        data.composites.emplace_back(Eigen::Map<const RowMajor>(values[k].data(), n, p));
    }
    return data;
}

inline NormDataset load_norms(const std::filesystem::path& path, const std::string& response_column,
                              const std::vector<CompositeSpec>& composites, const std::string& item_column = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open norm file " + path.string());
    return load_norms(in, response_column, composites, item_column);
}

/// z-scores every composite column (sample SD) over the full dataset.
inline void standardize_predictors(NormDataset& data) {
    for (Eigen::MatrixXd& block : data.composites) {
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
            auto col = block.col(j);
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(col.size() - 1));
            if (!(sd > 0.0)) throw NumericalError("cannot standardize a constant predictor column");
            col = (col.array() - mean) / sd;
        }
    }
}

// ---- configuration -----------------------------------------------------------

struct EmpiricalConfig {
    std::string response_column;
    std::string item_column;
    std::vector<CompositeSpec> composites;  // first entry is the stronger ("large") composite
    std::vector<int> sizes{50, 100, 200, 300, 400, 500};
    int resamples = 100;
    std::vector<Method> methods{Method::rsa, Method::pca_rsa, Method::fr_rsa, Method::ols};
    std::uint64_t base_seed = 1;
    bool standardize = false;
    int workers = 1;
    double fr_split_fraction = 0.5;
    Metric feature_metric = Metric::correlation;

    void validate() const {
        if (response_column.empty()) throw ConfigError("response_column is required");
        if (composites.size() != 2) throw ConfigError("exactly two composites are required");
        for (const CompositeSpec& c : composites)
            if (c.columns.size() < 2) throw ConfigError("composite '" + c.name + "' needs at least 2 columns");
        if (composites[0].name == composites[1].name) throw ConfigError("composite names must differ");
        if (sizes.empty()) throw ConfigError("sizes must not be empty");
        for (int s : sizes)
            if (s < 3) throw ConfigError("subsample sizes must be at least 3");
        if (resamples < 1) throw ConfigError("resamples must be at least 1");
        if (workers < 1) throw ConfigError("workers must be at least 1");
        if (methods.empty()) throw ConfigError("method list is empty");
        if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
            throw ConfigError("method list contains duplicates");
        for (Method m : methods)
            if (m == Method::lmm) throw ConfigError("lmm needs voxel data; not available for norm datasets");
        if (!(fr_split_fraction > 0.0 && fr_split_fraction < 1.0))
            throw ConfigError("fr_split_fraction must lie in (0, 1)");
    }
};

inline EmpiricalConfig parse_empirical_config(const nlohmann::ordered_json& j) {
    static const std::set<std::string> known{"response_column", "item_column", "composites", "sizes",
                                             "resamples",       "methods",     "base_seed",  "standardize",
                                             "workers",         "fr_split_fraction", "feature_metric"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

    auto get = [&]<class T>(const char* key, T& out) {
        if (!j.contains(key)) return;
        try {
            out = j.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config field '") + key + "': " + e.what());
        }
    };
    EmpiricalConfig c;
    get("response_column", c.response_column);
    get("item_column", c.item_column);
    if (!j.contains("composites") || !j.at("composites").is_object())
        throw ConfigError("'composites' must be an object {name: [columns]}");
    for (const auto& [name, cols] : j.at("composites").items()) {
        CompositeSpec spec{name, {}};
        try {
            spec.columns = cols.get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("composite '" + name + "': " + e.what());
        }
        c.composites.push_back(std::move(spec));
    }
    get("sizes", c.sizes);
    get("resamples", c.resamples);
    if (j.contains("methods")) {
        std::vector<std::string> names;
        get("methods", names);
        c.methods.clear();
        for (const auto& n : names) c.methods.push_back(parse_method(n));
    }
    get("base_seed", c.base_seed);
    get("standardize", c.standardize);
    get("workers", c.workers);
    get("fr_split_fraction", c.fr_split_fraction);
    if (j.contains("feature_metric")) {
        std::string m;
        get("feature_metric", m);
        if (m == "correlation") c.feature_metric = Metric::correlation;
        else if (m == "euclidean") c.feature_metric = Metric::euclidean;
        else throw ConfigError("feature_metric must be 'correlation' or 'euclidean'");
    }
    c.validate();
    return c;
}

inline EmpiricalConfig load_empirical_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return parse_empirical_config(nlohmann::ordered_json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

// ---- subsampling -------------------------------------------------------------

/// Draws `resamples` subsets of each size without replacement and scores every method
/// on every composite. Size index is the condition id; resamples are numbered from 1.
inline std::vector<ResultRecord> subsample_compare(const NormDataset& data, const EmpiricalConfig& cfg) {
    cfg.validate();
    if (data.composites.size() != cfg.composites.size())
        throw ConfigError("dataset and config disagree on the number of composites");
    for (int s : cfg.sizes)
        if (s > data.rows())
            throw ConfigError("subsample size " + std::to_string(s) + " exceeds the " + std::to_string(data.rows()) +
                              " available rows");
    for (Method m : cfg.methods)
        if (m == Method::fr_rsa)
            for (int s : cfg.sizes)
                if (s < 20) throw ConfigError("fr_rsa needs subsample sizes of at least 20");

    const std::size_t reps = static_cast<std::size_t>(cfg.resamples);
    const std::size_t n_comp = data.composites.size();
    std::vector<std::vector<ResultRecord>> slots(cfg.sizes.size() * reps);
    parallel_for(slots.size(), cfg.workers, [&](std::size_t item) {
        const std::size_t c = item / reps;
        const auto resample = static_cast<std::uint64_t>(item % reps) + 1;
        const int size = cfg.sizes[c];
        const auto key = static_cast<std::uint64_t>(size);

        Stream draw = derive_stream(cfg.base_seed, key, resample, "subsample");
        std::vector<Eigen::Index> rows = permutation(data.rows(), draw);
        rows.resize(static_cast<std::size_t>(size));
        const Eigen::VectorXd y = data.response(rows);
        const Eigen::MatrixXd ym = y;

        auto& out = slots[item];
        for (Method m : cfg.methods) {
            for (std::size_t k = 0; k < n_comp; ++k) {
                const Eigen::MatrixXd x = data.composites[k](rows, Eigen::all);
                MethodScore s;
                switch (m) {
                    case Method::rsa: s = score_rsa(x, ym, cfg.feature_metric); break;
                    case Method::pca_rsa: s = score_pca_rsa(x, ym); break;
                    case Method::fr_rsa: {
                        Stream split = derive_stream(cfg.base_seed, key, resample, "fr_split");
                        Stream folds = derive_stream(cfg.base_seed, key, resample, "cv_folds");
                        s = score_fr_rsa(x, ym, {cfg.fr_split_fraction, 10}, split, folds);
                        break;
                    }
                    case Method::ols: s = score_regression(x, y); break;
                    case Method::lmm: throw ConfigError("lmm is not available for norm datasets");
                }
                ResultRecord r;
                r.experiment = "empirical";
                r.condition_id = static_cast<int>(c);
                r.n = size;
                r.p = static_cast<int>(x.cols());
                r.replication = static_cast<int>(resample);
                r.method = m;
                r.model_rank = static_cast<int>(k);
                r.model = data.composite_names[k];
                r.estimate = s.estimate;
                r.status = s.status;
                out.push_back(std::move(r));
            }
        }
    });

    std::vector<ResultRecord> records;
    records.reserve(slots.size() * cfg.methods.size() * n_comp);
    for (auto& slot : slots)
        for (auto& r : slot) records.push_back(std::move(r));
    sort_records(records);
    return records;
}

// ---- synthetic stand-in -------------------------------------------------------

struct SynthNormsSpec {
    int rows = 4000;
    int columns_per_composite = 4;
    double within_correlation = 0.6;  // between members of one composite
    double strong_weight = 1.0;       // response loading on composite A's latent
    double weak_weight = 0.25;        // response loading on composite B's latent
    double noise_sd = 0.9;
    bool reverse_last = true;  // last member of each composite is reverse-keyed
    std::uint64_t seed = 1;
};

/// Writes a stand-in norm table: word, rt, freq_1..freq_p, affect_1..affect_p. Each
/// composite's columns are noisy copies of one latent; the response loads strongly on
/// the first latent and weakly on the second. A reverse-keyed member gives item profiles
/// a shape that tracks the latent, which correlation-distance RDMs need. Missing cells are sprinkled in so the
/// complete-case filter is exercised.
inline void write_synthetic_norms(std::ostream& os, const SynthNormsSpec& spec) {
    if (spec.rows < 1 || spec.columns_per_composite < 2) throw ConfigError("invalid synthetic norm spec");
    if (!(spec.within_correlation > 0.0 && spec.within_correlation < 1.0))
        throw ConfigError("within_correlation must lie in (0, 1)");
    Stream rng = derive_stream(spec.seed, 0, 0, "synthetic_norms");
    const int p = spec.columns_per_composite;
    const double load = std::sqrt(spec.within_correlation);
    const double unique = std::sqrt(1.0 - spec.within_correlation);

    os << "word,rt";
    for (const char* prefix : {"freq_", "affect_"})
        for (int j = 1; j <= p; ++j) os << ',' << prefix << j;
    os << '\n';
    for (int i = 0; i < spec.rows; ++i) {
        const double a = standard_normal(rng);
        const double b = standard_normal(rng);
        const double rt = 650.0 + 60.0 * (-spec.strong_weight * a + spec.weak_weight * b +
                                          spec.noise_sd * standard_normal(rng));
        const bool missing = uniform(rng, 0.0, 1.0) < 0.01;
        const int missing_col = static_cast<int>(uniform(rng, 0.0, 2.0 * p - 1e-9));
        os << "w" << (i + 1) << ',' << format_number(rt);
        for (int j = 0; j < 2 * p; ++j) {
            const double latent = j < p ? a : b;
            const double sign = spec.reverse_last && j % p == p - 1 ? -1.0 : 1.0;
            const double v = sign * load * latent + unique * standard_normal(rng);
            os << ',';
            if (!(missing && j == missing_col)) os << format_number(3.0 + v);
        }
        os << '\n';
    }
}

/// Config matching the columns produced by write_synthetic_norms.
inline EmpiricalConfig synthetic_norms_config(const SynthNormsSpec& spec) {
    EmpiricalConfig c;
    c.response_column = "rt";
    c.item_column = "word";
    CompositeSpec freq{"frequency", {}}, affect{"affect", {}};
    for (int j = 1; j <= spec.columns_per_composite; ++j) {
        freq.columns.push_back("freq_" + std::to_string(j));
        affect.columns.push_back("affect_" + std::to_string(j));
    }
    c.composites = {freq, affect};
    return c;
}

}  // namespace rsasim
