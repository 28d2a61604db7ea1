#include <gtest/gtest.h>

#include <rsasim/methods.hpp>
#include <rsasim/simgen.hpp>

using namespace rsasim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian(Eigen::Index n, Eigen::Index p, std::uint64_t key) {
    Stream rng = derive_stream(400, key, 0, "test");
    return standard_normal_matrix(n, p, rng);
}

}  // namespace

TEST(Rsa, HandComputedNegativeOne) {
    MatrixXd x(3, 2);
    x << 1, 2, 2, 1, 1, 3;
    MatrixXd y(3, 1);
    y << 1, 2, 3;
    const MethodScore s = score_rsa(x, y);
    ASSERT_TRUE(s.ok());
    EXPECT_NEAR(s.estimate, -1.0, 1e-15);
    EXPECT_EQ(s.method, Method::rsa);
}

TEST(Rsa, ConstantResponseIsDegenerate) {
    const MethodScore s = score_rsa(gaussian(10, 4, 1), MatrixXd::Constant(10, 1, 3.0));
    EXPECT_EQ(s.status, Status::degenerate);
    EXPECT_TRUE(std::isnan(s.estimate));
}

TEST(Rsa, EuclideanFeaturesAgainstThemselves) {
    const MatrixXd x = gaussian(12, 3, 2);
    EXPECT_NEAR(score_rsa(x, x, Metric::euclidean).estimate, 1.0, 1e-15);
}

TEST(Rsa, PermutationAndPositiveAffineInvariance) {
    const MatrixXd x = gaussian(40, 6, 3);
    const MatrixXd y = gaussian(40, 1, 4) + x.col(0);
    Stream rng = derive_stream(1, 0, 0, "perm");
    const auto perm = permutation(40, rng);
    const double base = score_rsa(x, y).estimate;
    EXPECT_NEAR(score_rsa(x(perm, Eigen::all), y(perm, Eigen::all)).estimate, base, 1e-12);
    EXPECT_NEAR(score_rsa(x, (2.0 * y.array() + 5.0).matrix()).estimate, base, 1e-12);
    EXPECT_NEAR(score_pca_rsa(x(perm, Eigen::all), y(perm, Eigen::all)).estimate, score_pca_rsa(x, y).estimate,
                1e-12);
}

TEST(PcaRsa, UncorrelatedAndCollinearInputs) {
    const MethodScore a = score_pca_rsa(gaussian(200, 6, 5), gaussian(200, 1, 6));
    EXPECT_TRUE(a.ok());
    EXPECT_TRUE(std::isfinite(a.estimate));
    EXPECT_EQ(a.method, Method::pca_rsa);
    MatrixXd dup = gaussian(50, 4, 7);
    dup.col(3) = dup.col(1);
    const MethodScore b = score_pca_rsa(dup, gaussian(50, 1, 8));
    EXPECT_TRUE(b.ok());
}

TEST(FrRsa, UniformWeightsEqualPlainRsa) {
    const MatrixXd x = gaussian(30, 5, 9);
    const MatrixXd y = gaussian(30, 1, 10);
    const MethodScore w = score_reweighted_rsa(x, y, VectorXd::Constant(5, 0.37));
    EXPECT_NEAR(w.estimate, score_rsa(x, y).estimate, 1e-12);
    EXPECT_EQ(score_reweighted_rsa(x, y, VectorXd::Zero(5)).status, Status::degenerate);
}

TEST(FrRsa, DeterministicGivenSeed) {
    const MatrixXd x = gaussian(80, 6, 11);
    const MatrixXd y = gaussian(80, 1, 12) + x.col(0);
    auto run = [&] {
        Stream split = derive_stream(3, 80, 1, "fr_split"), folds = derive_stream(3, 80, 1, "cv_folds");
        return score_fr_rsa(x, y, {}, split, folds).estimate;
    };
    const double a = run();
    EXPECT_EQ(a, run());
    EXPECT_TRUE(std::isfinite(a));
}

TEST(FrRsa, MatchesManualPipeline) {
    const MatrixXd x = gaussian(60, 4, 13);
    const MatrixXd y = gaussian(60, 1, 14) + 0.8 * x.col(1);
    Stream split = derive_stream(5, 0, 0, "fr_split"), folds = derive_stream(5, 0, 0, "cv_folds");
    const double got = score_fr_rsa(x, y, {}, split, folds).estimate;

    Stream split2 = derive_stream(5, 0, 0, "fr_split"), folds2 = derive_stream(5, 0, 0, "cv_folds");
    const auto order = permutation(60, split2);
    const std::vector<Eigen::Index> train(order.begin(), order.begin() + 30), test(order.begin() + 30, order.end());
    RidgeOptions opts;
    opts.folds = 10;
    const RidgeFit fit = ridge_cv(x(train, Eigen::all), y(train, 0), opts, folds2);
    const MatrixXd weighted = x(test, Eigen::all) * fit.coefficients.asDiagonal();
    EXPECT_NEAR(got, score_rsa(weighted, y(test, Eigen::all)).estimate, 1e-14);
}

TEST(FrRsa, TooFewItemsRejected) {
    Stream a = derive_stream(1, 0, 0, "fr_split"), b = derive_stream(1, 0, 0, "cv_folds");
    EXPECT_THROW(score_fr_rsa(gaussian(19, 4, 15), gaussian(19, 1, 16), {}, a, b), ConfigError);
}

TEST(Regression, NoiselessAndAffine) {
    const MatrixXd x = gaussian(40, 4, 17);
    const VectorXd y = (x * VectorXd::Ones(4)).array() + 1.0;
    EXPECT_NEAR(score_regression(x, y).estimate, 1.0, 1e-12);
    const VectorXd noisy = y + gaussian(40, 1, 18).col(0);
    EXPECT_NEAR(score_regression(x, noisy).estimate, score_regression(x, (-4.0 * noisy.array() + 2).matrix()).estimate,
                1e-10);
    EXPECT_EQ(score_regression(x, VectorXd::Constant(40, 2.0)).status, Status::degenerate);
}

TEST(Lmm, NoiselessVoxelsFitAlmostPerfectly) {
    const SimCondition cond = make_condition(0, 100, 100, 0.0, {20, 0.2, 0.2, 0, 0.1}, 3);
    const VoxelDataset d = generate_voxel_replication(cond, 1, 3, {11, 0.0});
    const MethodScore s = score_lmm(d.x, d.v_large);
    ASSERT_TRUE(s.ok());
    EXPECT_GT(s.estimate, 0.95);
    EXPECT_LE(s.estimate, 1.0);
    EXPECT_THROW(score_lmm(d.x, d.v_large.leftCols(1)), ConfigError);
}

TEST(Lmm, KnownVarianceDecomposition) {
    // Build V so that the fitted components are close to sigma_f2 = 2, alpha = 1, eps = 1.
    const int n = 400, voxels = 200;
    const MatrixXd x = gaussian(n, 2, 19);
    const VectorXd f = x * VectorXd::Constant(2, 1.0);  // variance 2
    Stream rng = derive_stream(7, 0, 0, "lmm");
    MatrixXd v(n, voxels);
    for (int j = 0; j < voxels; ++j) {
        const double u = standard_normal(rng);
        for (int i = 0; i < n; ++i) v(i, j) = f(i) + u + standard_normal(rng);
    }
    EXPECT_NEAR(score_lmm(x, v).estimate, 0.75, 0.03);
}

TEST(Names, RoundTrip) {
    for (Method m : kAllMethods) EXPECT_EQ(parse_method(to_string(m)), m);
    EXPECT_THROW(parse_method("kendall"), ConfigError);
}
