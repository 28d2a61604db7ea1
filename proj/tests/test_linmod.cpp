#include <gtest/gtest.h>

#include <rsasim/linmod.hpp>
#include <rsasim/simgen.hpp>

#include "oracles.hpp"

using namespace rsasim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian(Eigen::Index n, Eigen::Index p, std::uint64_t key) {
    Stream rng = derive_stream(100, key, 0, "test");
    return standard_normal_matrix(n, p, rng);
}

double pearson(const VectorXd& a, const VectorXd& b) {
    const VectorXd ac = (a.array() - a.mean()).matrix(), bc = (b.array() - b.mean()).matrix();
    return ac.dot(bc) / (ac.norm() * bc.norm());
}

}  // namespace

// ---- OLS

TEST(Ols, NoiselessFitIsPerfect) {
    const MatrixXd x = gaussian(40, 3, 1);
    const VectorXd y = (2.0 + (x * VectorXd::LinSpaced(3, 1, 3)).array()).matrix();
    const OlsFit f = ols_fit(x, y);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_NEAR(f.r2_adj, 1.0, 1e-12);
}

TEST(Ols, AdjustedFormula) {
    EXPECT_NEAR(adjusted_r2(0.5, 100, 20), 1.0 - 0.5 * 99.0 / 79.0, 1e-15);
    EXPECT_NEAR(adjusted_r2(0.5, 100, 20), 0.3734, 1e-4);
    EXPECT_THROW(adjusted_r2(0.5, 21, 20), ConfigError);
}

TEST(Ols, MatchesNormalEquations) {
    const MatrixXd x = gaussian(20, 3, 2);
    const VectorXd y = gaussian(20, 1, 3).col(0);
    const OlsFit f = ols_fit(x, y);
    const VectorXd ref = oracle::normal_equations(x, y);
    EXPECT_LT((f.beta - ref).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, AdjustedBelowRawAndErrors) {
    const MatrixXd x = gaussian(30, 4, 4);
    const VectorXd y = gaussian(30, 1, 5).col(0);
    const OlsFit f = ols_fit(x, y);
    EXPECT_LT(f.r2_adj, f.r2);
    EXPECT_GE(f.r2, 0.0);
    EXPECT_LE(f.r2, 1.0);
    EXPECT_THROW(ols_fit(gaussian(5, 4, 6), gaussian(5, 1, 7).col(0)), ConfigError);
    MatrixXd dup = gaussian(30, 3, 8);
    dup.col(2) = dup.col(1);
    EXPECT_THROW(ols_fit(dup, y), NumericalError);
}

TEST(Ols, AffineResponseInvariance) {
    const MatrixXd x = gaussian(50, 5, 9);
    const VectorXd y = gaussian(50, 1, 10).col(0) + x.col(0);
    const OlsFit a = ols_fit(x, y);
    const OlsFit b = ols_fit(x, (-3.0 * y.array() + 11.0).matrix());
    EXPECT_NEAR(a.r2, b.r2, 1e-10);
    EXPECT_NEAR(a.r2_adj, b.r2_adj, 1e-10);
}

TEST(Ols, NullResponseAveragesNearZero) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const MatrixXd x = gaussian(500, 20, 1000 + s);
        const VectorXd y = gaussian(500, 1, 5000 + s).col(0);
        sum += ols_fit(x, y).r2_adj;
    }
    EXPECT_LT(std::abs(sum / 100.0), 0.02);
}

// ---- PCA

TEST(Pca, OrthonormalLoadingsAndUncorrelatedScores) {
    const MatrixXd x = gaussian(60, 8, 11) * gaussian(8, 8, 12);
    const PcaBasis b = pca_scores(x);
    ASSERT_EQ(b.loadings.cols(), 8);
    EXPECT_LT((b.loadings.transpose() * b.loadings - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < i; ++j) EXPECT_LT(std::abs(pearson(b.scores.col(i), b.scores.col(j))), 1e-8);
}

TEST(Pca, ComponentCountAndTotalVariance) {
    const MatrixXd wide = gaussian(6, 10, 13);
    EXPECT_EQ(pca_scores(wide).scores.cols(), 5);
    const MatrixXd x = gaussian(40, 6, 14);
    const PcaBasis b = pca_scores(x);
    double total = 0.0;
    for (Eigen::Index k = 0; k < b.scores.cols(); ++k) {
        const VectorXd c = b.scores.col(k);
        total += (c.array() - c.mean()).square().sum() / 39.0;
    }
    EXPECT_NEAR(total, 6.0, 1e-10);
}

TEST(Pca, ReconstructionAtFullRank) {
    const MatrixXd x = gaussian(30, 5, 15);
    const PcaBasis b = pca_scores(x);
    MatrixXd z = x.rowwise() - b.column_means.transpose();
    for (Eigen::Index k = 0; k < 5; ++k) z.col(k) /= b.column_scales(k);
    EXPECT_LT((z - b.scores * b.loadings.transpose()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, DuplicatedColumnLeavesNullComponent) {
    MatrixXd x = gaussian(50, 4, 16);
    x.col(3) = x.col(2);
    const PcaBasis b = pca_scores(x);
    const auto var = [](const VectorXd& c) { return (c.array() - c.mean()).square().sum(); };
    EXPECT_LT(var(b.scores.col(3)), 1e-10 * var(b.scores.col(0)));
}

TEST(Pca, ZeroVarianceColumnNamed) {
    MatrixXd x = gaussian(20, 3, 17);
    x.col(1).setConstant(4.0);
    try {
        pca_scores(x);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
    }
}

// ---- Ridge

TEST(Ridge, FixedLambdaMatchesClosedForm) {
    const MatrixXd x = gaussian(10, 3, 18);
    const VectorXd y = gaussian(10, 1, 19).col(0);
    for (double lambda : {0.0, 0.01, 0.3, 5.0}) {
        const RidgeFit f = ridge_fit(x, y, lambda);
        EXPECT_LT((f.standardized_coefficients - oracle::ridge_closed_form(x, y, lambda)).cwiseAbs().maxCoeff(),
                  1e-8);
    }
}

TEST(Ridge, ZeroLambdaReproducesOls) {
    const MatrixXd x = gaussian(40, 4, 20);
    const VectorXd y = gaussian(40, 1, 21).col(0) + x.col(1);
    Stream rng = derive_stream(1, 0, 0, "cv_folds");
    RidgeOptions opts;
    opts.grid = std::vector<double>{0.0};
    const RidgeFit f = ridge_cv(x, y, opts, rng);
    const OlsFit o = ols_fit(x, y);
    EXPECT_NEAR(f.intercept, o.beta(0), 1e-6);
    EXPECT_LT((f.coefficients - o.beta.tail(4)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ridge, HugeLambdaShrinksToMean) {
    const MatrixXd x = gaussian(40, 4, 22);
    const VectorXd y = gaussian(40, 1, 23).col(0);
    Stream rng = derive_stream(1, 0, 0, "cv_folds");
    RidgeOptions opts;
    opts.grid = std::vector<double>{1e8};
    const RidgeFit f = ridge_cv(x, y, opts, rng);
    EXPECT_LT(f.coefficients.cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_NEAR(f.intercept, y.mean(), 1e-4);
}

TEST(Ridge, GridShapeAndCurveDeterminism) {
    const MatrixXd x = gaussian(60, 5, 24);
    const VectorXd y = gaussian(60, 1, 25).col(0) + 0.5 * x.col(0);
    Stream a = derive_stream(2, 0, 0, "cv_folds"), b = derive_stream(2, 0, 0, "cv_folds");
    const RidgeFit fa = ridge_cv(x, y, {}, a);
    const RidgeFit fb = ridge_cv(x, y, {}, b);
    ASSERT_EQ(fa.lambda_grid.size(), 100u);
    EXPECT_EQ(fa.cv_mse_curve.size(), 100u);
    EXPECT_EQ(fa.cv_mse_curve, fb.cv_mse_curve);
    EXPECT_NEAR(fa.lambda_grid.front(), ridge_lambda_max(x, y), 1e-15);
    EXPECT_NEAR(fa.lambda_grid.back() / fa.lambda_grid.front(), 1e-4, 1e-12);
    const auto best = std::min_element(fa.cv_mse_curve.begin(), fa.cv_mse_curve.end()) - fa.cv_mse_curve.begin();
    EXPECT_EQ(fa.lambda, fa.lambda_grid[static_cast<std::size_t>(best)]);
    EXPECT_TRUE(fa.coefficients.allFinite());
}

TEST(Ridge, CoefficientNormShrinksAlongLambda) {
    const MatrixXd x = gaussian(50, 6, 26);
    const VectorXd y = gaussian(50, 1, 27).col(0) + x.col(2);
    const auto grid = ridge_lambda_grid(ridge_lambda_max(x, y), 100, 1e-4);
    double prev = 0.0;
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
        const double norm = ridge_fit(x, y, *it).standardized_coefficients.norm();
        if (it != grid.rbegin()) {
            EXPECT_LE(norm, prev + 1e-12);
        }
        prev = norm;
    }
}

TEST(Ridge, TooFewRowsRejected) {
    Stream rng = derive_stream(1, 0, 0, "cv_folds");
    EXPECT_THROW(ridge_cv(gaussian(15, 3, 28), gaussian(15, 1, 29).col(0), {}, rng), ConfigError);
}

// ---- Mixed model

TEST(Lmm, ConditionalR2Formula) { EXPECT_DOUBLE_EQ(conditional_r2(2, 1, 1), 0.75); }

namespace {

struct LongData {
    MatrixXd x;
    std::vector<int> group;
    VectorXd y;
};

/// n stimuli x J voxels, y = 1 + x·b + u_j + e.
LongData make_long(int n, int voxels, int p, double sd_u, double sd_e, std::uint64_t key) {
    Stream rng = derive_stream(200, key, 0, "lmm");
    const MatrixXd xs = standard_normal_matrix(n, p, rng);
    VectorXd u(voxels);
    for (int j = 0; j < voxels; ++j) u(j) = sd_u * standard_normal(rng);
    LongData d{MatrixXd(n * voxels, p), {}, VectorXd(n * voxels)};
    for (int j = 0; j < voxels; ++j)
        for (int i = 0; i < n; ++i) {
            const int r = j * n + i;
            d.x.row(r) = xs.row(i);
            d.group.push_back(j);
            d.y(r) = 1.0 + xs.row(i).sum() * 0.7 + u(j) + sd_e * standard_normal(rng);
        }
    return d;
}

MatrixXd indicator(const std::vector<int>& group, int groups) {
    MatrixXd z = MatrixXd::Zero(static_cast<Eigen::Index>(group.size()), groups);
    for (std::size_t r = 0; r < group.size(); ++r) z(static_cast<Eigen::Index>(r), group[r]) = 1.0;
    return z;
}

}  // namespace

TEST(Lmm, RemlOptimumBeatsDenseGridOracle) {
    for (int inst = 0; inst < 20; ++inst) {
        const double sd_u = inst % 4 == 0 ? 0.0 : 0.3 * (inst % 5);
        const LongData d = make_long(6, 3, 1, sd_u, 1.0, static_cast<std::uint64_t>(inst));
        const LmmFit f = lmm_fit(d.x, d.group, d.y);
        MatrixXd design(d.x.rows(), 2);
        design << VectorXd::Ones(d.x.rows()), d.x;
        const MatrixXd z = indicator(d.group, 3);
        const double at_fit = oracle::reml_criterion(design, z, d.y, f.theta);
        for (int g = 0; g < 1000; ++g) {
            const double theta = std::exp(std::log(1e-8) + (std::log(1e8) - std::log(1e-8)) * g / 999.0);
            ASSERT_LE(at_fit, oracle::reml_criterion(design, z, d.y, theta) + 1e-9)
                << "instance " << inst << " theta " << theta;
        }
    }
}

TEST(Lmm, NoRandomEffectRecoversOls) {
    const LongData d = make_long(80, 6, 3, 0.0, 1.0, 99);
    const LmmFit f = lmm_fit(d.x, d.group, d.y);
    EXPECT_LT(f.sigma_alpha2, 0.05 * f.sigma_eps2);
    EXPECT_NEAR(f.r2_conditional, ols_fit(d.x, d.y).r2, 0.05);
}

TEST(Lmm, TinyThetaReproducesOlsFixedEffects) {
    const LongData d = make_long(30, 4, 2, 0.5, 1.0, 7);
    // The profiled GLS solution at the lower end of the search range is OLS.
    const VectorXd means = d.x.colwise().mean().transpose();
    MatrixXd design(d.x.rows(), 3);
    design << VectorXd::Ones(d.x.rows()), d.x.rowwise() - means.transpose();
    MatrixXd sums = MatrixXd::Zero(3, 4);
    VectorXd totals = VectorXd::Zero(4);
    for (Eigen::Index r = 0; r < d.x.rows(); ++r) {
        sums.col(d.group[static_cast<std::size_t>(r)]) += design.row(r).transpose();
        totals(d.group[static_cast<std::size_t>(r)]) += d.y(r);
    }
    const RandomInterceptModel model(design.transpose() * design, design.transpose() * d.y, d.y.squaredNorm(),
                                     sums * sums.transpose(), sums * totals, totals.squaredNorm(), d.x.rows(), 4);
    const VectorXd beta = model.evaluate(RandomInterceptModel::kThetaMin).beta;
    const VectorXd ols = ols_fit(design.rightCols(2), d.y).beta;
    EXPECT_LT((beta - ols).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Lmm, RecoversVarianceComponents) {
    const LongData d = make_long(200, 40, 2, 1.0, 1.0, 8);
    const LmmFit f = lmm_fit(d.x, d.group, d.y);
    EXPECT_NEAR(f.sigma_eps2, 1.0, 0.1);
    EXPECT_NEAR(f.sigma_alpha2, 1.0, 0.6);
    EXPECT_NEAR(f.beta(1), 0.7, 0.05);
    EXPECT_NEAR(f.beta(2), 0.7, 0.05);
    EXPECT_GE(f.r2_conditional, 0.0);
    EXPECT_LE(f.r2_conditional, 1.0);
}

TEST(Lmm, WideLayoutMatchesLongLayout) {
    Stream rng = derive_stream(300, 0, 0, "lmm");
    const MatrixXd x = standard_normal_matrix(25, 3, rng);
    const MatrixXd v = standard_normal_matrix(25, 5, rng) + (x.col(0) * Eigen::RowVectorXd::LinSpaced(5, 1, 2));
    MatrixXd x_long(125, 3);
    VectorXd y_long(125);
    std::vector<int> group;
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 25; ++i) {
            x_long.row(j * 25 + i) = x.row(i);
            y_long(j * 25 + i) = v(i, j);
            group.push_back(j);
        }
    const LmmFit a = lmm_fit(x_long, group, y_long);
    const LmmFit b = lmm_fit_wide(x, v);
    EXPECT_NEAR(a.theta, b.theta, 1e-8 * std::max(1.0, a.theta));
    EXPECT_NEAR(a.r2_conditional, b.r2_conditional, 1e-10);
    EXPECT_LT((a.beta - b.beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lmm, AffineResponseInvariance) {
    const LongData d = make_long(40, 5, 2, 0.8, 1.0, 9);
    const LmmFit a = lmm_fit(d.x, d.group, d.y);
    const LmmFit b = lmm_fit(d.x, d.group, (2.5 * d.y.array() - 40.0).matrix());
    EXPECT_NEAR(a.r2_conditional, b.r2_conditional, 1e-10);
}

TEST(Lmm, DesignErrors) {
    const LongData d = make_long(10, 3, 1, 0.5, 1.0, 10);
    std::vector<int> unbalanced = d.group;
    unbalanced[0] = 2;
    EXPECT_THROW(lmm_fit(d.x, unbalanced, d.y), ConfigError);
    std::vector<int> single(d.group.size(), 0);
    EXPECT_THROW(lmm_fit(d.x, single, d.y), ConfigError);
    EXPECT_THROW(lmm_fit_wide(d.x.topRows(10), MatrixXd::Random(10, 1)), ConfigError);
}
