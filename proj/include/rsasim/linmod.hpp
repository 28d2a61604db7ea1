#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "error.hpp"
#include "random.hpp"

namespace rsasim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline MatrixXd with_intercept(const MatrixXd& x) {
    MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return d;
}

inline double population_variance(const VectorXd& v) {
    const double m = v.mean();
    return (v.array() - m).square().mean();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ordinary least squares

struct OlsFit {
    VectorXd beta;  // intercept first
    double r2 = 0.0;
    double r2_adj = 0.0;
};

inline double adjusted_r2(double r2, Index n, Index p) {
    if (n - p - 1 <= 0)
        throw ConfigError("adjusted R^2 needs n > p + 1 (n=" + std::to_string(n) + ", p=" + std::to_string(p) +
                          ")");
    return 1.0 - (1.0 - r2) * static_cast<double>(n - 1) / static_cast<double>(n - p - 1);
}

/// Least squares with an intercept via column-pivoted Householder QR.
inline OlsFit ols_fit(const MatrixXd& x, const VectorXd& y) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (y.size() != n) throw ConfigError("OLS: response length does not match the feature rows");
    if (n <= p + 1)
        throw ConfigError("OLS needs more observations than predictors plus one (n=" + std::to_string(n) +
                          ", p=" + std::to_string(p) + ")");
    const MatrixXd design = detail::with_intercept(x);
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    if (qr.rank() < p + 1) throw NumericalError("OLS: design matrix is rank deficient");
    OlsFit fit;
    fit.beta = qr.solve(y);
    const VectorXd resid = y - design * fit.beta;
    const double sst = (y.array() - y.mean()).square().sum();
    if (!(sst > 0.0)) throw DegenerateError("OLS: response has zero variance");
    fit.r2 = 1.0 - resid.squaredNorm() / sst;
    fit.r2_adj = adjusted_r2(fit.r2, n, p);
    return fit;
}

// ---------------------------------------------------------------------------
// Principal components

struct PcaBasis {
    VectorXd column_means;
    VectorXd column_scales;  // sample SD (n - 1)
    MatrixXd loadings;       // p x k, orthonormal columns
    MatrixXd scores;         // n x k
    VectorXd singular_values;
};

/// PCA of the column-standardised matrix (prcomp with center and scale). Keeps all
/// k = min(n - 1, p) components. Each loading vector is signed so its largest
/// absolute entry is positive.
inline PcaBasis pca_scores(const MatrixXd& x) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (n < 2) throw ConfigError("PCA needs at least 2 observations");
    PcaBasis basis;
    basis.column_means = x.colwise().mean().transpose();
    MatrixXd z = x.rowwise() - basis.column_means.transpose();
    basis.column_scales.resize(p);
    for (Index k = 0; k < p; ++k) {
        const double sd = std::sqrt(z.col(k).squaredNorm() / static_cast<double>(n - 1));
        const double scale = x.col(k).cwiseAbs().maxCoeff();
        if (!(sd > 1e-12 * scale)) throw NumericalError("PCA: column " + std::to_string(k) + " has zero variance");
        basis.column_scales(k) = sd;
        z.col(k) /= sd;
    }
    Eigen::JacobiSVD<MatrixXd> svd(z, Eigen::ComputeThinV);
    const Index k = std::min(n - 1, p);
    basis.loadings = svd.matrixV().leftCols(k);
    basis.singular_values = svd.singularValues().head(k);
    for (Index c = 0; c < k; ++c) {
        Index arg = 0;
        basis.loadings.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis.loadings(arg, c) < 0.0) basis.loadings.col(c) *= -1.0;
    }
    basis.scores = z * basis.loadings;
    return basis;
}

// ---------------------------------------------------------------------------
// Ridge regression

/// Column means and population SDs (divide by n) used to standardise ridge inputs.
struct Standardizer {
    VectorXd mean;
    VectorXd scale;

    static Standardizer fit(const MatrixXd& x) {
        Standardizer s;
        const double n = static_cast<double>(x.rows());
        s.mean = x.colwise().mean().transpose();
        s.scale.resize(x.cols());
        for (Index k = 0; k < x.cols(); ++k) {
            const double sd = std::sqrt((x.col(k).array() - s.mean(k)).square().sum() / n);
            if (!(sd > 1e-12 * x.col(k).cwiseAbs().maxCoeff()))
                throw NumericalError("ridge: column " + std::to_string(k) + " has zero variance");
            s.scale(k) = sd;
        }
        return s;
    }

    [[nodiscard]] MatrixXd apply(const MatrixXd& x) const {
        return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
    }
};

/// Solves (XᵀX + nλI) β = Xᵀy for many λ through one eigendecomposition of XᵀX.
/// X is standardised and y centred, so this is the ridge solution of
/// (1/2n)‖y − Xβ‖² + (λ/2)‖β‖² with the intercept left unpenalised.
class RidgePath {
public:
    RidgePath(const MatrixXd& xs, const VectorXd& yc) : n_(static_cast<double>(xs.rows())) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(xs.transpose() * xs);
        if (eig.info() != Eigen::Success) throw NumericalError("ridge: eigendecomposition failed");
        q_ = eig.eigenvectors();
        d_ = eig.eigenvalues();
        qtc_ = q_.transpose() * (xs.transpose() * yc);
    }

    [[nodiscard]] VectorXd solve(double lambda) const {
        const VectorXd denom = (d_.array() + n_ * lambda).matrix();
        return q_ * qtc_.cwiseQuotient(denom);
    }

private:
    double n_;
    MatrixXd q_;
    VectorXd d_;
    VectorXd qtc_;
};

struct RidgeFit {
    double lambda = 0.0;
    VectorXd coefficients;               // original feature scale
    double intercept = 0.0;
    VectorXd standardized_coefficients;  // on standardised features
    std::vector<double> lambda_grid;
    std::vector<double> cv_mse_curve;    // mean CV squared error per grid value
};

struct RidgeOptions {
    int folds = 10;
    int n_lambda = 100;
    double min_ratio = 1e-4;
    std::optional<std::vector<double>> grid;  // overrides the λ_max-anchored grid
};

/// Ridge fit at one λ on all rows; coefficients returned on the original scale.
inline RidgeFit ridge_fit(const MatrixXd& x, const VectorXd& y, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("ridge: lambda must be non-negative");
    const Standardizer st = Standardizer::fit(x);
    const double ybar = y.mean();
    RidgePath path(st.apply(x), (y.array() - ybar).matrix());
    RidgeFit fit;
    fit.lambda = lambda;
    fit.standardized_coefficients = path.solve(lambda);
    fit.coefficients = fit.standardized_coefficients.cwiseQuotient(st.scale);
    fit.intercept = ybar - fit.coefficients.dot(st.mean);
    return fit;
}

/// λ_max = max_k |Σ_i x̃_ik y_i| / n on the full standardised data.
inline double ridge_lambda_max(const MatrixXd& x, const VectorXd& y) {
    const Standardizer st = Standardizer::fit(x);
    const VectorXd yc = (y.array() - y.mean()).matrix();
    return (st.apply(x).transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(x.rows());
}

/// Log-spaced grid from λ_max down to min_ratio·λ_max.
inline std::vector<double> ridge_lambda_grid(double lambda_max, int count, double min_ratio) {
    if (!(lambda_max > 0.0)) lambda_max = 1.0;
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double lo = std::log(min_ratio);
    for (int i = 0; i < count; ++i)
        grid[static_cast<std::size_t>(i)] = lambda_max * std::exp(lo * i / (count - 1));
    return grid;
}

/// K-fold cross-validated ridge. Rows are shuffled once and cut into contiguous folds;
/// each fold is standardised with its own training statistics. The grid value with the
/// smallest mean CV squared error (largest λ on ties) is refit on all rows.
inline RidgeFit ridge_cv(const MatrixXd& x, const VectorXd& y, const RidgeOptions& opts, Stream& rng) {
    const Index n = x.rows();
    if (y.size() != n) throw ConfigError("ridge: response length does not match the feature rows");
    if (x.cols() < 1) throw ConfigError("ridge: needs at least one feature");
    if (opts.folds < 2) throw ConfigError("ridge: needs at least 2 folds");
    if (n < 2 * static_cast<Index>(opts.folds))
        throw ConfigError("ridge: " + std::to_string(n) + " rows cannot fill " + std::to_string(opts.folds) +
                          " folds of at least 2 rows");

    const std::vector<double> grid = opts.grid ? *opts.grid
                                               : ridge_lambda_grid(ridge_lambda_max(x, y), opts.n_lambda,
                                                                   opts.min_ratio);
    if (grid.empty()) throw ConfigError("ridge: empty lambda grid");

    const std::vector<Index> order = permutation(n, rng);
    std::vector<double> sse(grid.size(), 0.0);
    const Index base = n / opts.folds;
    const Index extra = n % opts.folds;
    Index start = 0;
    for (int f = 0; f < opts.folds; ++f) {
        const Index len = base + (f < extra ? 1 : 0);
        std::vector<Index> test(order.begin() + start, order.begin() + start + len);
        std::vector<Index> train;
        train.reserve(static_cast<std::size_t>(n - len));
        train.insert(train.end(), order.begin(), order.begin() + start);
        train.insert(train.end(), order.begin() + start + len, order.end());
        start += len;

        const MatrixXd x_train = x(train, Eigen::all);
        const VectorXd y_train = y(train);
        const Standardizer st = Standardizer::fit(x_train);
        const double ybar = y_train.mean();
        RidgePath path(st.apply(x_train), (y_train.array() - ybar).matrix());
        const MatrixXd x_test = st.apply(x(test, Eigen::all));
        const VectorXd y_test = y(test);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const VectorXd pred = (x_test * path.solve(grid[g])).array() + ybar;
            sse[g] += (y_test - pred).squaredNorm();
        }
    }

    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        sse[g] /= static_cast<double>(n);
        if (sse[g] < sse[best]) best = g;
    }
    RidgeFit fit = ridge_fit(x, y, grid[best]);
    fit.lambda_grid = grid;
    fit.cv_mse_curve = std::move(sse);
    return fit;
}

// ---------------------------------------------------------------------------
// Random-intercept mixed model

struct LmmFit {
    VectorXd beta;  // intercept first, original response scale
    double theta = 0.0;  // sigma_alpha2 / sigma_eps2
    double sigma_alpha2 = 0.0;
    double sigma_eps2 = 0.0;
    double sigma_f2 = 0.0;
    double r2_conditional = 0.0;
    double reml_criterion = 0.0;  // -2 restricted log-likelihood, standardised response
};

inline double conditional_r2(double sigma_f2, double sigma_alpha2, double sigma_eps2) {
    const double explained = sigma_f2 + sigma_alpha2;
    return explained / (explained + sigma_eps2);
}

/// Sufficient statistics of a balanced one-way random-intercept model
/// y = Dβ + u_group + ε, with D = [1, X] and equal group sizes.
///
/// With θ = σ_α²/σ_ε² and w = θ/(1 + θm), the GLS normal equations are
/// (DᵀD − w Σ_j s_j s_jᵀ) β = Dᵀy − w Σ_j s_j t_j where s_j, t_j are the group sums of
/// the design rows and responses. REML is profiled over σ_ε², leaving a 1-D problem in θ.
class RandomInterceptModel {
public:
    struct Profile {
        double criterion = 0.0;
        double derivative = 0.0;  // d criterion / d theta
        VectorXd beta;
        double rss = 0.0;
    };

    RandomInterceptModel(MatrixXd xtx, VectorXd xty, double yty, MatrixXd ss, VectorXd st, double tt,
                         Index n_obs, Index n_groups)
        : xtx_(std::move(xtx)), xty_(std::move(xty)), yty_(yty), ss_(std::move(ss)), st_(std::move(st)),
          tt_(tt), n_obs_(n_obs), n_groups_(n_groups), group_size_(n_obs / n_groups) {
        if (n_obs_ - params() <= 0) throw ConfigError("mixed model: not enough observations for the fixed effects");
    }

    [[nodiscard]] Index params() const { return xtx_.rows(); }
    [[nodiscard]] Index observations() const { return n_obs_; }

    [[nodiscard]] Profile evaluate(double theta) const {
        const double m = static_cast<double>(group_size_);
        const double w = theta / (1.0 + theta * m);
        const double dw = 1.0 / ((1.0 + theta * m) * (1.0 + theta * m));
        const MatrixXd a = xtx_ - w * ss_;
        const VectorXd b = xty_ - w * st_;
        const double c = yty_ - w * tt_;
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) throw NumericalError("mixed model: fixed-effect design is rank deficient");
        Profile out;
        out.beta = llt.solve(b);
        out.rss = c - b.dot(out.beta);
        if (!(out.rss > 0.0)) throw NumericalError("mixed model: residual sum of squares is not positive");
        const double dof = static_cast<double>(n_obs_ - params());
        double logdet_a = 0.0;
        const MatrixXd& l = llt.matrixLLT();
        for (Index i = 0; i < a.rows(); ++i) logdet_a += 2.0 * std::log(l(i, i));
        const double logdet_h = static_cast<double>(n_groups_) * std::log1p(theta * m);
        out.criterion = logdet_h + logdet_a + dof * (1.0 + std::log(2.0 * std::numbers::pi * out.rss / dof));

        const double trace = llt.solve(ss_).trace();
        const double quad = tt_ - 2.0 * out.beta.dot(st_) + out.beta.dot(ss_ * out.beta);
        out.derivative = static_cast<double>(n_groups_) * m / (1.0 + theta * m) - dw * trace -
                         dof * dw * quad / out.rss;
        return out;
    }

    [[nodiscard]] double criterion(double theta) const { return evaluate(theta).criterion; }

    static constexpr double kThetaMin = 1e-8;
    static constexpr double kThetaMax = 1e8;

    /// REML optimum over θ ∈ [1e-8, 1e8]: a coarse log-grid brackets the minimum, then
    /// the stationary point inside the bracket is located by a TOMS 748 (Brent-class)
    /// root search on the analytic derivative in log θ.
    [[nodiscard]] double optimize_theta() const {
        constexpr int kGrid = 49;
        const double lo = std::log(kThetaMin);
        const double hi = std::log(kThetaMax);
        std::vector<double> u(kGrid), crit(kGrid);
        for (int i = 0; i < kGrid; ++i) {
            u[i] = lo + (hi - lo) * i / (kGrid - 1);
            crit[i] = criterion(std::exp(u[i]));
        }
        const int k = static_cast<int>(std::min_element(crit.begin(), crit.end()) - crit.begin());
        auto slope = [this](double uu) {
            const double t = std::exp(uu);
            return t * evaluate(t).derivative;
        };

        double left, right;
        const double g = slope(u[k]);
        if (g == 0.0) return std::exp(u[k]);
        if (g < 0.0) {
            if (k == kGrid - 1) return kThetaMax;
            left = u[k];
            right = u[k + 1];
        } else {
            if (k == 0) return kThetaMin;
            left = u[k - 1];
            right = u[k];
        }
        const double g_left = slope(left);
        const double g_right = slope(right);
        if (g_left < 0.0 && g_right > 0.0) {
            std::uintmax_t iters = 200;
            const auto bracket = boost::math::tools::toms748_solve(
                slope, left, right, g_left, g_right, boost::math::tools::eps_tolerance<double>(52), iters);
            if (iters >= 200)
                throw NumericalError("mixed model: REML search did not converge; final log-theta bracket [" +
                                     std::to_string(bracket.first) + ", " + std::to_string(bracket.second) + "]");
            const double a = bracket.first;
            const double b = bracket.second;
            return std::exp(criterion(std::exp(a)) <= criterion(std::exp(b)) ? a : b);
        }
        // No clean sign change at the bracket ends: fall back to Brent minimisation
        // over the neighbouring grid cells.
        const double blo = u[std::max(k - 1, 0)];
        const double bhi = u[std::min(k + 1, kGrid - 1)];
        std::uintmax_t iters = 200;
        const auto best = boost::math::tools::brent_find_minima(
            [this](double uu) { return criterion(std::exp(uu)); }, blo, bhi, 52, iters);
        if (iters >= 200)
            throw NumericalError("mixed model: REML search did not converge; final log-theta bracket [" +
                                 std::to_string(blo) + ", " + std::to_string(bhi) + "]");
        return std::exp(best.second <= crit[k] ? best.first : u[k]);
    }

private:
    MatrixXd xtx_;
    VectorXd xty_;
    double yty_;
    MatrixXd ss_;
    VectorXd st_;
    double tt_;
    Index n_obs_;
    Index n_groups_;
    Index group_size_;
};

namespace detail {

/// Response standardisation applied before fitting; makes the optimisation (and every
/// R² it produces) invariant to affine rescaling of y.
struct ResponseScale {
    double center = 0.0;
    double scale = 1.0;
};

inline ResponseScale response_scale(const double* data, Index count) {
    const Eigen::Map<const VectorXd> y(data, count);
    ResponseScale s;
    s.center = y.mean();
    const double var = (y.array() - s.center).square().sum() / static_cast<double>(count);
    if (!(var > 0.0)) throw DegenerateError("mixed model: response has zero variance");
    s.scale = std::sqrt(var);
    return s;
}

/// Finish a fit given the model, the centred design (intercept first) used for the
/// fixed-effect predictions, the feature column means, and the response scale.
inline LmmFit finish_lmm(const RandomInterceptModel& model, const MatrixXd& design, const VectorXd& feature_means,
                         const ResponseScale& rs) {
    LmmFit fit;
    fit.theta = model.optimize_theta();
    const RandomInterceptModel::Profile prof = model.evaluate(fit.theta);
    fit.reml_criterion = prof.criterion;
    const double dof = static_cast<double>(model.observations() - model.params());
    const double sigma_eps2 = prof.rss / dof;
    const double sigma_alpha2 = fit.theta * sigma_eps2;
    const double sigma_f2 = detail::population_variance(design * prof.beta);
    fit.r2_conditional = conditional_r2(sigma_f2, sigma_alpha2, sigma_eps2);

    const double s2 = rs.scale * rs.scale;
    fit.sigma_eps2 = sigma_eps2 * s2;
    fit.sigma_alpha2 = sigma_alpha2 * s2;
    fit.sigma_f2 = sigma_f2 * s2;
    fit.beta = prof.beta * rs.scale;
    fit.beta(0) = rs.center + rs.scale * prof.beta(0) - fit.beta.tail(fit.beta.size() - 1).dot(feature_means);
    return fit;
}

}  // namespace detail

/// REML fit of y = β₀ + Xβ + u_group + ε from long-form rows. Groups (voxels) must all
/// have the same number of rows.
inline LmmFit lmm_fit(const MatrixXd& x_long, std::span<const int> group, const VectorXd& y_long) {
    const Index rows = x_long.rows();
    if (static_cast<Index>(group.size()) != rows || y_long.size() != rows)
        throw ConfigError("mixed model: group labels and response must match the feature rows");
    std::map<int, Index> slot;
    for (int g : group) slot.emplace(g, 0);
    const Index n_groups = static_cast<Index>(slot.size());
    if (n_groups < 2) throw ConfigError("mixed model: needs at least 2 groups (voxels)");
    {
        Index next = 0;
        for (auto& [label, idx] : slot) idx = next++;
    }
    std::vector<Index> counts(static_cast<std::size_t>(n_groups), 0);
    for (int g : group) ++counts[static_cast<std::size_t>(slot[g])];
    if (std::any_of(counts.begin(), counts.end(), [&](Index c) { return c != counts.front(); }))
        throw ConfigError("mixed model: unbalanced design (groups differ in row count)");

    const VectorXd means = x_long.colwise().mean().transpose();
    const MatrixXd design = detail::with_intercept(x_long.rowwise() - means.transpose());
    const detail::ResponseScale rs = detail::response_scale(y_long.data(), rows);
    const VectorXd y = ((y_long.array() - rs.center) / rs.scale).matrix();

    const Index q = design.cols();
    MatrixXd sums = MatrixXd::Zero(q, n_groups);
    VectorXd totals = VectorXd::Zero(n_groups);
    for (Index i = 0; i < rows; ++i) {
        const Index j = slot[group[static_cast<std::size_t>(i)]];
        sums.col(j) += design.row(i).transpose();
        totals(j) += y(i);
    }
    RandomInterceptModel model(design.transpose() * design, design.transpose() * y, y.squaredNorm(),
                               sums * sums.transpose(), sums * totals, totals.squaredNorm(), rows, n_groups);
    return detail::finish_lmm(model, design, means, rs);
}

/// Same model for the wide layout used by voxel data: stimulus i contributes the row
/// x_i to every voxel j with response v(i, j). Avoids materialising the long form.
inline LmmFit lmm_fit_wide(const MatrixXd& x, const MatrixXd& v) {
    const Index n = x.rows();
    const Index voxels = v.cols();
    if (v.rows() != n) throw ConfigError("mixed model: voxel matrix rows must match the feature rows");
    if (voxels < 2) throw ConfigError("mixed model: needs at least 2 groups (voxels)");

    const VectorXd means = x.colwise().mean().transpose();
    const MatrixXd design = detail::with_intercept(x.rowwise() - means.transpose());
    const detail::ResponseScale rs = detail::response_scale(v.data(), v.size());
    const MatrixXd y = ((v.array() - rs.center) / rs.scale).matrix();

    const VectorXd col_design_sums = design.colwise().sum().transpose();  // s_j, identical for all voxels
    const VectorXd totals = y.colwise().sum().transpose();                // t_j
    MatrixXd ss = static_cast<double>(voxels) * (col_design_sums * col_design_sums.transpose());
    VectorXd st = col_design_sums * totals.sum();
    RandomInterceptModel model(static_cast<double>(voxels) * (design.transpose() * design),
                               design.transpose() * y.rowwise().sum(), y.squaredNorm(), std::move(ss),
                               std::move(st), totals.squaredNorm(), n * voxels, voxels);
    return detail::finish_lmm(model, design, means, rs);
}

}  // namespace rsasim
