#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "methods.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "records.hpp"
#include "simgen.hpp"

namespace rsasim {

enum class Experiment { sim_a, sim_b, sim_c, sim_d, fmri, custom };

inline const char* to_string(Experiment e) {
    switch (e) {
        case Experiment::sim_a: return "sim_a";
        case Experiment::sim_b: return "sim_b";
        case Experiment::sim_c: return "sim_c";
        case Experiment::sim_d: return "sim_d";
        case Experiment::fmri: return "fmri";
        case Experiment::custom: return "custom";
    }
    return "?";
}

inline Experiment parse_experiment(const std::string& name) {
    for (Experiment e : {Experiment::sim_a, Experiment::sim_b, Experiment::sim_c, Experiment::sim_d,
                         Experiment::fmri, Experiment::custom})
        if (name == to_string(e)) return e;
    throw ConfigError("unknown experiment '" + name + "'");
}

struct Collinearity {
    double relevant = 0.2;
    double irrelevant = 0.2;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::sim_a;
    int replications = 1000;
    std::uint64_t base_seed = 1;
    std::vector<Method> methods;  // empty: experiment default
    std::optional<std::vector<int>> n_levels;
    std::optional<std::vector<double>> noise_levels;
    std::optional<std::vector<int>> p_levels;
    std::optional<std::vector<Collinearity>> collinearity;
    double cross_lo = 0.0;
    double cross_hi = 0.1;
    double fr_split_fraction = 0.5;
    Metric feature_metric = Metric::correlation;
    std::string output_dir;
    int workers = 1;
    bool voxel = false;  // custom experiments only; fmri is always voxel-based
    RadialConfig radial;

    [[nodiscard]] bool voxel_data() const { return experiment == Experiment::fmri || voxel; }

    [[nodiscard]] std::vector<Method> effective_methods() const {
        if (!methods.empty()) return methods;
        if (voxel_data()) return {Method::rsa, Method::lmm};
        return {Method::rsa, Method::ols};
    }

    void validate() const {
        if (replications < 1) throw ConfigError("replications must be at least 1");
        if (workers < 1) throw ConfigError("workers must be at least 1");
        if (voxel && experiment != Experiment::custom)
            throw ConfigError("'voxel' is only meaningful for custom experiments");
        if (!(fr_split_fraction > 0.0 && fr_split_fraction < 1.0))
            throw ConfigError("fr_split_fraction must lie in (0, 1)");
        const std::vector<Method> ms = effective_methods();
        if (ms.empty()) throw ConfigError("method list is empty");
        if (std::set<Method>(ms.begin(), ms.end()).size() != ms.size())
            throw ConfigError("method list contains duplicates");
        for (Method m : ms) {
            if (m == Method::lmm && !voxel_data())
                throw ConfigError("lmm is only valid for fmri or voxel-based custom experiments");
            if (m == Method::ols && voxel_data())
                throw ConfigError("ols needs a scalar response; use lmm for voxel experiments");
        }
        if (n_levels)
            for (int n : *n_levels)
                if (n < 3) throw ConfigError("every n level must be at least 3");
        if (noise_levels)
            for (double v : *noise_levels)
                if (!(v >= 0.0)) throw ConfigError("noise levels must be non-negative");
        if (p_levels)
            for (int p : *p_levels)
                if (p < 2 || p % 2 != 0) throw ConfigError("p levels must be positive even integers");
        if (collinearity)
            for (const Collinearity& c : *collinearity)
                if (!(c.relevant >= 0.0 && c.relevant < 1.0 && c.irrelevant >= 0.0 && c.irrelevant < 1.0))
                    throw ConfigError("collinearity levels must lie in [0, 1)");
        if (!(cross_lo >= 0.0 && cross_lo <= cross_hi && cross_hi < 1.0))
            throw ConfigError("cross_range must satisfy 0 <= lo <= hi < 1");
        if (voxel_data()) radial.validate();
    }
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace detail

/// Parses the JSON experiment description. Unknown keys are rejected.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "experiment",   "replications",      "base_seed",      "methods",    "n_levels",
        "noise_levels", "p_levels",          "collinearity",   "cross_range", "fr_split_fraction",
        "feature_metric", "output_dir",      "workers",        "voxel",      "grid_size",
        "map_noise_sd"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

    using detail::json_get;
    ExperimentConfig c;
    if (!j.contains("experiment")) throw ConfigError("config needs an 'experiment' field");
    c.experiment = parse_experiment(json_get<std::string>(j, "experiment"));
    if (j.contains("replications")) c.replications = json_get<int>(j, "replications");
    if (j.contains("base_seed")) c.base_seed = json_get<std::uint64_t>(j, "base_seed");
    if (j.contains("methods"))
        for (const auto& name : json_get<std::vector<std::string>>(j, "methods")) c.methods.push_back(parse_method(name));
    if (j.contains("methods") && c.methods.empty()) throw ConfigError("method list is empty");
    if (j.contains("n_levels")) c.n_levels = json_get<std::vector<int>>(j, "n_levels");
    if (j.contains("noise_levels")) c.noise_levels = json_get<std::vector<double>>(j, "noise_levels");
    if (j.contains("p_levels")) c.p_levels = json_get<std::vector<int>>(j, "p_levels");
    if (j.contains("collinearity")) {
        std::vector<Collinearity> levels;
        for (const auto& pr : json_get<std::vector<std::vector<double>>>(j, "collinearity")) {
            if (pr.size() != 2) throw ConfigError("collinearity levels are [relevant, irrelevant] pairs");
            levels.push_back({pr[0], pr[1]});
        }
        c.collinearity = std::move(levels);
    }
    if (j.contains("cross_range")) {
        const auto range = json_get<std::vector<double>>(j, "cross_range");
        if (range.size() != 2) throw ConfigError("cross_range is a [lo, hi] pair");
        c.cross_lo = range[0];
        c.cross_hi = range[1];
    }
    if (j.contains("fr_split_fraction")) c.fr_split_fraction = json_get<double>(j, "fr_split_fraction");
    if (j.contains("feature_metric")) {
        const auto m = json_get<std::string>(j, "feature_metric");
        if (m == "correlation") c.feature_metric = Metric::correlation;
        else if (m == "euclidean") c.feature_metric = Metric::euclidean;
        else throw ConfigError("feature_metric must be 'correlation' or 'euclidean'");
    }
    if (j.contains("output_dir")) c.output_dir = json_get<std::string>(j, "output_dir");
    if (j.contains("workers")) c.workers = json_get<int>(j, "workers");
    if (j.contains("voxel")) c.voxel = json_get<bool>(j, "voxel");
    if (j.contains("grid_size")) c.radial.grid = json_get<int>(j, "grid_size");
    if (j.contains("map_noise_sd")) c.radial.noise_sd = json_get<double>(j, "map_noise_sd");
    c.validate();
    return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_json_file(path));
}

/// One cell of an experiment grid.
struct ConditionSpec {
    int id = 0;
    int n = 100;
    double noise_variance = 5.0;
    CovarianceSpec covariance;
};

/// Cartesian product of the experiment's factor levels, manipulated factor outermost
/// and sample size innermost. Overrides in the config replace the table defaults.
inline std::vector<ConditionSpec> expand_grid(const ExperimentConfig& cfg) {
    std::vector<int> ns{100, 200, 300, 400, 500};
    std::vector<double> noises{5.0};
    std::vector<int> ps{20};
    std::vector<Collinearity> colls{{0.2, 0.2}};
    switch (cfg.experiment) {
        case Experiment::sim_a:
        case Experiment::custom: break;
        case Experiment::sim_b: noises = {5.0, 10.0, 15.0}; break;
        case Experiment::sim_c: ps = {20, 40, 60}; break;
        case Experiment::sim_d:
        case Experiment::fmri: colls = {{0.2, 0.0}, {0.2, 0.4}, {0.2, 0.8}}; break;
    }
    if (cfg.n_levels) ns = *cfg.n_levels;
    if (cfg.noise_levels) noises = *cfg.noise_levels;
    if (cfg.p_levels) ps = *cfg.p_levels;
    if (cfg.collinearity) colls = *cfg.collinearity;
    if (ns.empty() || noises.empty() || ps.empty() || colls.empty())
        throw ConfigError("experiment grid is empty");

    std::vector<ConditionSpec> out;
    for (const Collinearity& c : colls)
        for (int p : ps)
            for (double noise : noises)
                for (int n : ns) {
                    ConditionSpec cond;
                    cond.id = static_cast<int>(out.size());
                    cond.n = n;
                    cond.noise_variance = noise;
                    cond.covariance = {p, c.relevant, c.irrelevant, cfg.cross_lo, cfg.cross_hi};
                    cond.covariance.validate();
                    if (n < 3) throw ConfigError("sample sizes must be at least 3");
                    if (!(noise >= 0.0)) throw ConfigError("noise variances must be non-negative");
                    out.push_back(cond);
                }
    return out;
}

struct ExperimentResult {
    std::vector<ResultRecord> records;
    std::vector<SummaryRow> summary;
};

namespace detail {

inline ResultRecord make_record(const ExperimentConfig& cfg, const ConditionSpec& cond, int replication,
                                const MethodScore& s) {
    ResultRecord r;
    r.experiment = to_string(cfg.experiment);
    r.condition_id = cond.id;
    r.n = cond.n;
    r.noise_var = cond.noise_variance;
    r.p = cond.covariance.p;
    r.rho_rel = cond.covariance.rho_relevant;
    r.rho_irrel = cond.covariance.rho_irrelevant;
    r.replication = replication;
    r.method = s.method;
    r.model_rank = s.model == Model::large ? 0 : 1;
    r.model = to_string(s.model);
    r.estimate = s.estimate;
    r.status = s.status;
    return r;
}

/// Scores every requested method for both models of one replication. `responses` are
/// n x 1 (behavioral) or n x G² (voxel) matrices for the large and small model.
inline std::vector<MethodScore> score_replication(const ExperimentConfig& cfg, const SimCondition& cond,
                                                  std::uint64_t replication, const Eigen::MatrixXd& x,
                                                  const std::array<Eigen::MatrixXd, 2>& responses,
                                                  const std::array<const Eigen::VectorXd*, 2>& scalar) {
    constexpr std::array<Model, 2> models{Model::large, Model::small};
    // The response RDMs are shared by rsa and pca_rsa, so rank them at most once.
    std::array<std::optional<std::optional<RankedVector>>, 2> response_ranks;
    auto ranked = [&](int k) -> const std::optional<RankedVector>& {
        if (!response_ranks[k]) response_ranks[k] = FeatureRanks::rank_response(responses[k]);
        return *response_ranks[k];
    };
    std::vector<MethodScore> out;
    for (Method m : cfg.effective_methods()) {
        switch (m) {
            case Method::rsa: {
                const FeatureRanks ranks(x, cfg.feature_metric);
                for (int k = 0; k < 2; ++k) out.push_back(ranks.score(ranked(k), m, models[k]));
                break;
            }
            case Method::pca_rsa: {
                const FeatureRanks ranks(pca_scores(x).scores, Metric::correlation);
                for (int k = 0; k < 2; ++k) out.push_back(ranks.score(ranked(k), m, models[k]));
                break;
            }
            case Method::fr_rsa: {
                const FrRsaOptions opts{cfg.fr_split_fraction, 10};
                for (int k = 0; k < 2; ++k) {
                    Stream split = derive_stream(cfg.base_seed, cond.sample_key, replication, "fr_split");
                    Stream folds = derive_stream(cfg.base_seed, cond.sample_key, replication, "cv_folds");
                    out.push_back(score_fr_rsa(x, responses[k], opts, split, folds, models[k]));
                }
                break;
            }
            case Method::ols:
                for (int k = 0; k < 2; ++k) out.push_back(score_regression(x, *scalar[k], models[k]));
                break;
            case Method::lmm:
                for (int k = 0; k < 2; ++k) out.push_back(score_lmm(x, responses[k], models[k]));
                break;
        }
    }
    return out;
}

}  // namespace detail

/// Runs every (condition, replication) work item, then sorts the records and
/// aggregates them. The output does not depend on the worker count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<ConditionSpec> grid = expand_grid(cfg);
    std::vector<SimCondition> conditions;
    conditions.reserve(grid.size());
    for (const ConditionSpec& spec : grid)
        conditions.push_back(make_condition(static_cast<std::uint64_t>(spec.id), static_cast<std::uint64_t>(spec.n),
                                            spec.n, spec.noise_variance, spec.covariance, cfg.base_seed));

    const std::size_t reps = static_cast<std::size_t>(cfg.replications);
    std::vector<std::vector<ResultRecord>> slots(grid.size() * reps);
    parallel_for(slots.size(), cfg.workers, [&](std::size_t item) {
        const std::size_t c = item / reps;
        const int replication = static_cast<int>(item % reps) + 1;
        const SimCondition& cond = conditions[c];
        std::vector<MethodScore> scores;
        if (cfg.voxel_data()) {
            const VoxelDataset d =
                generate_voxel_replication(cond, static_cast<std::uint64_t>(replication), cfg.base_seed, cfg.radial);
            scores = detail::score_replication(cfg, cond, static_cast<std::uint64_t>(replication), d.x,
                                               {d.v_large, d.v_small}, {&d.y_large, &d.y_small});
        } else {
            const SimDataset d = generate_replication(cond, static_cast<std::uint64_t>(replication), cfg.base_seed);
            scores = detail::score_replication(cfg, cond, static_cast<std::uint64_t>(replication), d.x,
                                               {Eigen::MatrixXd(d.y_large), Eigen::MatrixXd(d.y_small)},
                                               {&d.y_large, &d.y_small});
        }
        auto& out = slots[item];
        out.reserve(scores.size());
        for (const MethodScore& s : scores) out.push_back(detail::make_record(cfg, grid[c], replication, s));
    });

    ExperimentResult result;
    for (auto& slot : slots)
        for (auto& r : slot) result.records.push_back(std::move(r));
    sort_records(result.records);
    result.summary = summarize_records(result.records);
    return result;
}

}  // namespace rsasim
