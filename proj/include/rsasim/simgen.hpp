#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"
#include "random.hpp"

namespace rsasim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Block correlation structure of the feature population. The first p/2 features are
/// the relevant block, the last p/2 the irrelevant block.
struct CovarianceSpec {
    int p = 20;
    double rho_relevant = 0.2;
    double rho_irrelevant = 0.2;
    double cross_lo = 0.0;
    double cross_hi = 0.1;

    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        os << "CovarianceSpec{p=" << p << ", rho_relevant=" << rho_relevant
           << ", rho_irrelevant=" << rho_irrelevant << ", cross_range=[" << cross_lo << ", "
           << cross_hi << "]}";
        return os.str();
    }

    void validate() const {
        if (p <= 0 || p % 2 != 0)
            throw ConfigError("feature count must be a positive even integer: " + describe());
        auto unit = [](double r) { return r >= 0.0 && r < 1.0; };
        if (!unit(rho_relevant) || !unit(rho_irrelevant))
            throw ConfigError("block correlations must lie in [0, 1): " + describe());
        if (!unit(cross_lo) || !unit(cross_hi) || cross_lo > cross_hi)
            throw ConfigError("cross-block range must be an ordered subset of [0, 1): " + describe());
    }
};

/// Linear-model effect for one response. Irrelevant coefficients are always zero.
struct EffectSpec {
    double intercept = 1.0;
    double beta_relevant = 0.5;
    double noise_variance = 5.0;

    void validate() const {
        if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
            throw ConfigError("noise variance must be finite and non-negative");
        if (!std::isfinite(beta_relevant) || !std::isfinite(intercept))
            throw ConfigError("effect coefficients must be finite");
    }
};

inline constexpr double kLargerEffect = 0.5;
inline constexpr double kSmallerEffect = 0.4;
inline constexpr int kMaxCovarianceResamples = 100;
inline constexpr double kMinEigenvalue = 1e-10;

/// Unit-diagonal block covariance. Cross-block entries are drawn i.i.d. from the cross
/// range; draws are repeated (fixed blocks untouched) until the matrix is positive
/// definite.
inline MatrixXd build_covariance(const CovarianceSpec& spec, Stream& rng) {
    spec.validate();
    const Index p = spec.p;
    const Index half = p / 2;
    MatrixXd sigma = MatrixXd::Identity(p, p);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            if (i == j) continue;
            if (i < half && j < half) sigma(i, j) = spec.rho_relevant;
            if (i >= half && j >= half) sigma(i, j) = spec.rho_irrelevant;
        }
    }
    for (int attempt = 0; attempt < kMaxCovarianceResamples; ++attempt) {
        for (Index i = 0; i < half; ++i) {
            for (Index j = half; j < p; ++j) {
                const double c = uniform(rng, spec.cross_lo, spec.cross_hi);
                sigma(i, j) = c;
                sigma(j, i) = c;
            }
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
        if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > kMinEigenvalue)
            return sigma;
    }
    throw NumericalError("covariance is not positive definite after " +
                         std::to_string(kMaxCovarianceResamples) +
                         " cross-block resamples: " + spec.describe());
}

/// Lower Cholesky factor; throws when sigma is not positive definite.
inline MatrixXd covariance_factor(const MatrixXd& sigma) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization failed: covariance is not positive definite");
    return llt.matrixL();
}

/// Rows i.i.d. N_p(0, Lᵀ L) given the lower factor L.
inline MatrixXd sample_features_factored(const MatrixXd& factor, Index n, Stream& rng) {
    return standard_normal_matrix(n, factor.rows(), rng) * factor.transpose();
}

inline MatrixXd sample_features(const MatrixXd& sigma, Index n, Stream& rng) {
    return sample_features_factored(covariance_factor(sigma), n, rng);
}

/// y_i = intercept + sum over the relevant half of x_ik * beta + eps_i.
inline VectorXd generate_response(const MatrixXd& x, const EffectSpec& effect, Stream& rng) {
    effect.validate();
    if (!x.allFinite()) throw ConfigError("feature matrix contains non-finite values");
    const Index half = x.cols() / 2;
    const double sd = std::sqrt(effect.noise_variance);
    VectorXd y(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const double signal = effect.beta_relevant * x.row(i).head(half).sum();
        y(i) = effect.intercept + signal + sd * standard_normal(rng);
    }
    return y;
}

/// Population of one simulated condition: Sigma_X and its factor, fixed across
/// replications.
struct Population {
    CovarianceSpec spec;
    MatrixXd sigma;
    MatrixXd factor;
};

inline Population make_population(const CovarianceSpec& spec, std::uint64_t base_seed,
                                  std::uint64_t condition_id) {
    Stream rng = derive_stream(base_seed, condition_id, 0, "cross_corr");
    Population pop{spec, build_covariance(spec, rng), {}};
    pop.factor = covariance_factor(pop.sigma);
    return pop;
}

/// One simulated condition.
///
/// `sample_key` keys the per-replication streams. Conditions that share it (the harness
/// uses the sample size) draw the same standard-normal variates, which pairs conditions
/// that differ only in population parameters.
struct SimCondition {
    std::uint64_t id = 0;
    std::uint64_t sample_key = 0;
    Index n = 100;
    double noise_variance = 5.0;
    Population population;
};

inline SimCondition make_condition(std::uint64_t id, std::uint64_t sample_key, Index n,
                                   double noise_variance, const CovarianceSpec& spec,
                                   std::uint64_t base_seed) {
    if (n < 1) throw ConfigError("sample size must be positive");
    if (!(noise_variance >= 0.0)) throw ConfigError("noise variance must be non-negative");
    return SimCondition{id, sample_key, n, noise_variance, make_population(spec, base_seed, id)};
}

/// Shared features with a larger- and a smaller-effect response.
struct SimDataset {
    MatrixXd x;
    VectorXd y_large;
    VectorXd y_small;
    std::uint64_t replication = 0;
};

inline SimDataset generate_replication(const SimCondition& cond, std::uint64_t replication,
                                       std::uint64_t base_seed) {
    Stream features = derive_stream(base_seed, cond.sample_key, replication, "features");
    Stream noise_large = derive_stream(base_seed, cond.sample_key, replication, "noise_large");
    Stream noise_small = derive_stream(base_seed, cond.sample_key, replication, "noise_small");
    SimDataset d;
    d.replication = replication;
    d.x = sample_features_factored(cond.population.factor, cond.n, features);
    d.y_large = generate_response(d.x, {1.0, kLargerEffect, cond.noise_variance}, noise_large);
    d.y_small = generate_response(d.x, {1.0, kSmallerEffect, cond.noise_variance}, noise_small);
    return d;
}

// ---------------------------------------------------------------------------
// Radial voxel maps

struct RadialConfig {
    int grid = 11;
    double noise_sd = 0.2;

    void validate() const {
        if (grid < 3 || grid % 2 == 0) throw ConfigError("grid size must be odd and at least 3");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
            throw ConfigError("map noise SD must be finite and non-negative");
    }
};

/// Radial decay gamma = 1 - d/max(d) around the centre cell, G x G.
inline MatrixXd radial_decay(int grid) {
    const double c = (grid + 1) / 2.0;
    MatrixXd dist(grid, grid);
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) dist(i, j) = std::hypot(i + 1 - c, j + 1 - c);
    return (1.0 - dist.array() / dist.maxCoeff()).matrix();
}

/// Base map M_norm = (M + max M) / max(M + max M) with M = gamma * gamma cellwise.
inline MatrixXd radial_base(const RadialConfig& cfg) {
    cfg.validate();
    const MatrixXd gamma = radial_decay(cfg.grid);
    const MatrixXd m = gamma.cwiseProduct(gamma);
    const MatrixXd shifted = (m.array() + m.maxCoeff()).matrix();
    return shifted / shifted.maxCoeff();
}

/// Activation map for one stimulus, flattened row-major (length G^2). Negative
/// responses use the reversed map so the centre stays the signed maximum.
inline VectorXd voxel_map(double y, const MatrixXd& m_norm, double noise_sd, Stream& rng) {
    const Index g = m_norm.rows();
    MatrixXd pos(g, g);
    for (Index i = 0; i < g; ++i)
        for (Index j = 0; j < g; ++j) pos(i, j) = m_norm(i, j) + noise_sd * standard_normal(rng);
    if (y < 0.0) pos = (1.0 - pos.array() + pos.minCoeff()).matrix();
    VectorXd out(g * g);
    for (Index i = 0; i < g; ++i)
        for (Index j = 0; j < g; ++j) out(i * g + j) = pos(i, j) * y;
    return out;
}

struct VoxelDataset {
    MatrixXd x;
    VectorXd y_large;
    VectorXd y_small;
    MatrixXd v_large;  // n x G^2
    MatrixXd v_small;
    std::uint64_t replication = 0;
};

inline MatrixXd voxel_matrix(const VectorXd& y, const MatrixXd& m_norm, double noise_sd,
                             Stream& rng) {
    MatrixXd v(y.size(), m_norm.size());
    for (Index i = 0; i < y.size(); ++i) v.row(i) = voxel_map(y(i), m_norm, noise_sd, rng).transpose();
    return v;
}

/// Behavioral replication plus per-stimulus voxel maps for both effect models. Map
/// noise is redrawn for every stimulus; large-model maps are drawn before small-model
/// maps from the same stream.
inline VoxelDataset generate_voxel_replication(const SimCondition& cond, std::uint64_t replication,
                                               std::uint64_t base_seed, const RadialConfig& cfg) {
    SimDataset base = generate_replication(cond, replication, base_seed);
    const MatrixXd m_norm = radial_base(cfg);
    Stream rng = derive_stream(base_seed, cond.sample_key, replication, "voxel_noise");
    VoxelDataset d;
    d.replication = replication;
    d.v_large = voxel_matrix(base.y_large, m_norm, cfg.noise_sd, rng);
    d.v_small = voxel_matrix(base.y_small, m_norm, cfg.noise_sd, rng);
    d.x = std::move(base.x);
    d.y_large = std::move(base.y_large);
    d.y_small = std::move(base.y_small);
    return d;
}

}  // namespace rsasim
