#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "linmod.hpp"
#include "random.hpp"
#include "rdm.hpp"

namespace rsasim {

enum class Method { rsa, pca_rsa, fr_rsa, ols, lmm };
enum class Model { large, small };
enum class Status { ok, degenerate };

inline constexpr std::array<Method, 5> kAllMethods{Method::rsa, Method::pca_rsa, Method::fr_rsa, Method::ols,
                                                   Method::lmm};

inline const char* to_string(Method m) {
    switch (m) {
        case Method::rsa: return "rsa";
        case Method::pca_rsa: return "pca_rsa";
        case Method::fr_rsa: return "fr_rsa";
        case Method::ols: return "ols";
        case Method::lmm: return "lmm";
    }
    return "?";
}

inline const char* to_string(Model m) { return m == Model::large ? "large" : "small"; }
inline const char* to_string(Status s) { return s == Status::ok ? "ok" : "degenerate"; }

inline Method parse_method(std::string_view name) {
    for (Method m : kAllMethods)
        if (name == to_string(m)) return m;
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

inline bool is_rsa_family(Method m) { return m == Method::rsa || m == Method::pca_rsa || m == Method::fr_rsa; }

struct MethodScore {
    Method method = Method::rsa;
    Model model = Model::large;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    Status status = Status::ok;

    [[nodiscard]] bool ok() const { return status == Status::ok; }
};

namespace detail {

inline MethodScore degenerate(Method method, Model model) {
    return {method, model, std::numeric_limits<double>::quiet_NaN(), Status::degenerate};
}

}  // namespace detail

/// Feature-side RDM ranked once, so several responses can be scored against it
/// without re-sorting. Holds no ranks when the feature RDM is degenerate.
class FeatureRanks {
public:
    FeatureRanks(const Eigen::MatrixXd& x, Metric metric) {
        try {
            const Rdm rdm = make_rdm(x, metric);
            ranks_.emplace(rdm.values);
        } catch (const DegenerateError&) {
            ranks_.reset();
        }
        n_items_ = x.rows();
    }

    [[nodiscard]] bool degenerate() const { return !ranks_.has_value(); }

    /// Spearman correlation against the Euclidean RDM of `response` (n x q).
    [[nodiscard]] MethodScore score(const Eigen::MatrixXd& response, Method method, Model model) const {
        if (response.rows() != n_items_) throw ConfigError("RSA: response rows do not match the feature rows");
        if (!ranks_) return detail::degenerate(method, model);
        return score(rank_response(response), method, model);
    }

    /// Same, with the response RDM already ranked (nullopt when it is degenerate).
    [[nodiscard]] MethodScore score(const std::optional<RankedVector>& response_ranks, Method method,
                                    Model model) const {
        if (!ranks_ || !response_ranks) return detail::degenerate(method, model);
        if (response_ranks->size() != ranks_->size())
            throw ConfigError("RSA: response rows do not match the feature rows");
        return {method, model, ranks_->correlation(*response_ranks), Status::ok};
    }

    static std::optional<RankedVector> rank_response(const Eigen::MatrixXd& response) {
        try {
            return RankedVector(euclidean_rdm(response).values);
        } catch (const DegenerateError&) {
            return std::nullopt;
        }
    }

private:
    std::optional<RankedVector> ranks_;
    Eigen::Index n_items_ = 0;
};

/// Plain RSA: Spearman between the feature RDM (correlation or Euclidean distance) and
/// the Euclidean response RDM. `response` is n x 1 for behavioral data, n x G² for voxels.
inline MethodScore score_rsa(const Eigen::MatrixXd& x, const Eigen::MatrixXd& response,
                             Metric feature_metric = Metric::correlation, Model model = Model::large) {
    if (x.rows() < 3) throw ConfigError("RSA needs at least 3 items");
    return FeatureRanks(x, feature_metric).score(response, Method::rsa, model);
}

/// RSA on all principal-component scores of the standardised features.
inline MethodScore score_pca_rsa(const Eigen::MatrixXd& x, const Eigen::MatrixXd& response,
                                 Model model = Model::large) {
    if (x.rows() < 3) throw ConfigError("RSA needs at least 3 items");
    MethodScore s = score_rsa(pca_scores(x).scores, response, Metric::correlation, model);
    s.method = Method::pca_rsa;
    return s;
}

/// RSA after scaling feature column k by weights(k).
inline MethodScore score_reweighted_rsa(const Eigen::MatrixXd& x, const Eigen::MatrixXd& response,
                                        const Eigen::VectorXd& weights, Model model = Model::large) {
    if (weights.size() != x.cols()) throw ConfigError("reweighting: one weight per feature column required");
    if (weights.cwiseAbs().maxCoeff() == 0.0) return detail::degenerate(Method::fr_rsa, model);
    const Eigen::MatrixXd weighted = (x.array().rowwise() * weights.transpose().array()).matrix();
    MethodScore s = score_rsa(weighted, response, Metric::correlation, model);
    s.method = Method::fr_rsa;
    return s;
}

struct FrRsaOptions {
    double split_fraction = 0.5;
    int max_folds = 10;
};

/// Feature-reweighted RSA. Rows are shuffled and split into train and test parts; a
/// cross-validated ridge fit on the train part (target: the response row mean, i.e. the
/// response itself when q = 1) supplies one weight per feature; the test features are
/// reweighted and compared with the test responses by plain RSA.
inline MethodScore score_fr_rsa(const Eigen::MatrixXd& x, const Eigen::MatrixXd& response, const FrRsaOptions& opts,
                                Stream& split_rng, Stream& cv_rng, Model model = Model::large) {
    const Eigen::Index n = x.rows();
    if (response.rows() != n) throw ConfigError("FR-RSA: response rows do not match the feature rows");
    if (n < 20) throw ConfigError("FR-RSA needs at least 20 items");
    if (!(opts.split_fraction > 0.0 && opts.split_fraction < 1.0))
        throw ConfigError("FR-RSA: split fraction must lie in (0, 1)");
    const Eigen::Index n_train =
        std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::lround(opts.split_fraction * n)), 4, n - 3);
    const std::vector<Eigen::Index> order = permutation(n, split_rng);
    const std::vector<Eigen::Index> train(order.begin(), order.begin() + n_train);
    const std::vector<Eigen::Index> test(order.begin() + n_train, order.end());

    RidgeOptions ropts;
    ropts.folds = std::min<int>(opts.max_folds, static_cast<int>(n_train / 2));
    const Eigen::VectorXd target = response(train, Eigen::all).rowwise().mean();
    const RidgeFit fit = ridge_cv(x(train, Eigen::all), target, ropts, cv_rng);
    return score_reweighted_rsa(x(test, Eigen::all), response(test, Eigen::all), fit.coefficients, model);
}

/// Linear regression; the estimate is the adjusted R².
inline MethodScore score_regression(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Model model = Model::large) {
    try {
        return {Method::ols, model, ols_fit(x, y).r2_adj, Status::ok};
    } catch (const DegenerateError&) {
        return detail::degenerate(Method::ols, model);
    }
}

/// Random-intercept mixed model over voxels; the estimate is the conditional R².
inline MethodScore score_lmm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& voxels, Model model = Model::large) {
    if (voxels.cols() < 2) throw ConfigError("mixed model needs at least 2 voxels");
    try {
        return {Method::lmm, model, lmm_fit_wide(x, voxels).r2_conditional, Status::ok};
    } catch (const DegenerateError&) {
        return detail::degenerate(Method::lmm, model);
    }
}

}  // namespace rsasim
