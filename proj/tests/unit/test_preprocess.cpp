#include "streamguard/error.hpp"
#include "streamguard/preprocess.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace streamguard;
using namespace streamguard::preprocess;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

RawStream column_stream(const std::vector<double>& xs) {
    RawStream s;
    for (std::size_t t = 0; t < xs.size(); ++t) s.push_back({static_cast<std::int64_t>(t), {xs[t]}, {}});
    return s;
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
    return m;
}

// Data whose sample covariance is exactly `sigma`: rows +/- a * l_k for the
// columns l_k of a hand-computed Cholesky factor.
}  // namespace

TEST(Clean, ForwardFillsGaps) {
    const auto out = clean(column_stream({5, kNaN, 7}));
    EXPECT_EQ(out[1].values[0], 5.0);
    EXPECT_EQ(out[2].values[0], 7.0);
}

TEST(Clean, LeadingGapTakesColumnMean) {
    const auto out = clean(column_stream({kNaN, 3}));
    EXPECT_EQ(out[0].values[0], 3.0);
    EXPECT_EQ(out[1].values[0], 3.0);
}

TEST(Clean, ClipsAtFourStandardDeviations) {
    // Oracle: the clip bound evaluated by hand on the column.
    std::vector<double> xs(99, 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = k % 2 ? 1.0 : -1.0;
    xs.push_back(1000.0);
    double mean = 0.0;
    for (double x : xs) mean += x / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean) / xs.size();
    const double bound = mean + 4.0 * std::sqrt(var);
    const auto out = clean(column_stream(xs));
    EXPECT_NEAR(out.back().values[0], bound, 1e-9);
    EXPECT_LT(out.back().values[0], 1000.0);
}

TEST(Clean, UnitColumnValueNineClipsToFour) {
    // 100 values with mean 0 and population std 1, one of them 9.
    const double a = -9.0 / 99.0;
    const double b = std::sqrt((19.0 - 99.0 * a * a) / 98.0);
    std::vector<double> xs{9.0, a};
    for (int k = 0; k < 98; ++k) xs.push_back(a + (k % 2 ? b : -b));
    double mean = 0.0, sq = 0.0;
    for (double x : xs) mean += x / 100.0;
    for (double x : xs) sq += (x - mean) * (x - mean) / 100.0;
    ASSERT_NEAR(mean, 0.0, 1e-12);
    ASSERT_NEAR(sq, 1.0, 1e-12);
    EXPECT_NEAR(clean(column_stream(xs))[0].values[0], 4.0, 1e-12);
}

TEST(Clean, AllMissingColumnIsAnError) {
    EXPECT_THROW(clean(column_stream({kNaN, kNaN})), DataError);
    EXPECT_THROW(clean({}), DataError);
}

TEST(Standardize, HandComputedExample) {
    Matrix x(3, 1);
    x << 2, 4, 6;
    const auto s = fit_standardize(x);
    EXPECT_DOUBLE_EQ(s.stats.mean[0], 4.0);
    // Population std of [2, 4, 6] is sqrt(8/3), so the ends map to -/+1.2247.
    // Only the sample std (2) would give exactly -/+1.
    EXPECT_NEAR(s.stats.std[0], std::sqrt(8.0 / 3.0), 1e-15);
    EXPECT_NEAR(s.data(0, 0), -2.0 / std::sqrt(8.0 / 3.0), 1e-12);
    EXPECT_NEAR(s.data(2, 0), 2.0 / std::sqrt(8.0 / 3.0), 1e-12);
    EXPECT_NEAR(s.data(1, 0), 0.0, 1e-15);
}

TEST(Standardize, ConstantFeaturePassesAsZero) {
    Matrix x(3, 1);
    x << 5, 5, 5;
    const auto s = fit_standardize(x);
    EXPECT_TRUE(s.stats.constant[0]);
    EXPECT_EQ(s.stats.std[0], 1.0);
    EXPECT_TRUE(s.data.isZero(0.0));
}

TEST(Standardize, FittingDataHasZeroMeanUnitStd) {
    const Matrix x = random_matrix(200, 5, 3) * 7.0 + Matrix::Constant(200, 5, 3.0);
    const auto s = fit_standardize(x);
    for (int c = 0; c < 5; ++c) {
        const double m = s.data.col(c).mean();
        const double sd = std::sqrt((s.data.col(c).array() - m).square().mean());
        EXPECT_LT(std::abs(m), 1e-9);
        EXPECT_LT(std::abs(sd - 1.0), 1e-9);
    }
    const auto again = fit_standardize(s.data);
    EXPECT_LT((again.data - s.data).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pearson, Examples) {
    Matrix x(3, 3);
    x << 1, 1, -1, 2, 3, -2, 3, 2, -3;
    const auto c = pearson_matrix(x);
    EXPECT_NEAR(c.rho(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(c.rho(0, 1), 0.5, 1e-12);
    EXPECT_NEAR(c.rho(0, 2), -1.0, 1e-12);
}

TEST(Pearson, ZeroVarianceFeatureIsFlagged) {
    Matrix x(3, 2);
    x << 1, 4, 2, 4, 3, 4;
    const auto c = pearson_matrix(x);
    EXPECT_TRUE(c.zero_variance[1]);
    EXPECT_EQ(c.rho(0, 1), 0.0);
    EXPECT_EQ(c.rho(1, 1), 1.0);
}

TEST(Pearson, PositiveSemidefinite) {
    const Matrix x = random_matrix(50, 6, 11);
    const auto c = pearson_matrix(x);
    Eigen::SelfAdjointEigenSolver<Matrix> es(c.rho);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LT((c.rho - c.rho.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Pca, ThreeByThreeMatchesCharacteristicPolynomial) {
    const std::vector<std::vector<double>> sigma{{4, 1, 0.5}, {1, 3, 0.2}, {0.5, 0.2, 2}};
    const auto model = fit_pca(fixture::data_with_covariance(sigma), 1.0);
    const auto roots = oracle::real_roots(oracle::characteristic_polynomial(sigma), 10.0);
    ASSERT_EQ(roots.size(), 3u);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(model.all_eigenvalues[k], roots[k], 1e-8);
}

TEST(Pca, FourByFourSelectsDocumentedComponentCount) {
    // Eigenvalues 5, 3, 1.5, 0.5 rotated by a Householder reflection.
    Vector v(4);
    v << 1, 2, -1, 0.5;
    const Matrix q = Matrix::Identity(4, 4) - 2.0 * v * v.transpose() / v.squaredNorm();
    Vector lambda(4);
    lambda << 5, 3, 1.5, 0.5;
    const Matrix s = q * lambda.asDiagonal() * q.transpose();
    std::vector<std::vector<double>> sigma(4, std::vector<double>(4));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) sigma[r][c] = s(r, c);
    const Matrix x = fixture::data_with_covariance(sigma);

    const auto roots = oracle::real_roots(oracle::characteristic_polynomial(sigma), 20.0);
    ASSERT_EQ(roots.size(), 4u);
    const auto full = fit_pca(x, 1.0);
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(full.all_eigenvalues[k], roots[k], 1e-8);
        EXPECT_NEAR(full.all_eigenvalues[k], lambda[k], 1e-8);
    }
    EXPECT_EQ(fit_pca(x, 0.4).retained(), 1u);
    EXPECT_EQ(fit_pca(x, 0.75).retained(), 2u);
    EXPECT_EQ(fit_pca(x, 0.9).retained(), 3u);
    EXPECT_EQ(fit_pca(x, 0.96).retained(), 4u);
}

TEST(Pca, ComponentsOrthonormalAndSorted) {
    const Matrix x = random_matrix(100, 6, 5);
    const auto m = fit_pca(x, 1.0);
    EXPECT_LT((m.components.transpose() * m.components - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
    for (int k = 1; k < 6; ++k) EXPECT_GE(m.all_eigenvalues[k - 1], m.all_eigenvalues[k]);
    for (int k = 0; k < 6; ++k) {
        Eigen::Index pivot;
        m.components.col(k).cwiseAbs().maxCoeff(&pivot);
        EXPECT_GT(m.components(pivot, k), 0.0);
    }
}

TEST(Pca, RankOneDataNeedsOneComponent) {
    Matrix x(20, 2);
    for (int r = 0; r < 20; ++r) x(r, 0) = x(r, 1) = r;
    const auto m = fit_pca(x, 0.95);
    EXPECT_EQ(m.retained(), 1u);
    EXPECT_NEAR(m.explained_variance(), 1.0, 1e-12);
}

TEST(Pca, IsotropicDataKeepsEveryComponent) {
    const std::vector<std::vector<double>> eye{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const auto m = fit_pca(fixture::data_with_covariance(eye), 1.0);
    EXPECT_EQ(m.retained(), 3u);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(m.eigenvalues[k], 1.0, 1e-12);
}

TEST(Pca, RoundTripAndLinearity) {
    const Matrix x = random_matrix(60, 4, 9);
    const auto m = fit_pca(x, 1.0);
    const Vector a = x.row(3).transpose();
    const Vector b = x.row(7).transpose();
    EXPECT_LT((inverse_pca(m, apply_pca(m, a)) - a).cwiseAbs().maxCoeff(), 1e-8);
    const Vector lhs = apply_pca(m, Vector(2.5 * a - 0.75 * b));
    const Vector rhs = 2.5 * apply_pca(m, a) - 0.75 * apply_pca(m, b);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(apply_pca(m, Vector(Vector::Zero(4))).isZero(0.0));
}

TEST(Pca, ProjectionMatchesManualDotProducts) {
    const Matrix x = random_matrix(40, 4, 21);
    const auto m = fit_pca_fixed(x, 2);
    const Vector r = random_matrix(4, 1, 22);
    const Vector out = apply_pca(m, r);
    for (int k = 0; k < 2; ++k) {
        double dot = 0.0;
        for (int i = 0; i < 4; ++i) dot += m.components(i, k) * r[i];
        EXPECT_NEAR(out[k], dot, 1e-14);
    }
    const Vector first = m.components.col(0);
    const Vector own = apply_pca(m, first);
    EXPECT_NEAR(own[0], 1.0, 1e-12);
    EXPECT_NEAR(own[1], 0.0, 1e-12);
}

TEST(Pca, RejectsBadInput) {
    const Matrix x = random_matrix(40, 4, 1);
    EXPECT_THROW(fit_pca(x, 0.0), ConfigError);
    EXPECT_THROW(fit_pca(x, 1.5), ConfigError);
    EXPECT_THROW(apply_pca(fit_pca(x, 1.0), Vector(Vector::Zero(3))), DataError);
    EXPECT_THROW(fit_pca(random_matrix(3, 4, 1), 0.9), DataError);
}

TEST(Seasonal, PureSineIsRecovered) {
    std::vector<double> x(24 * 10);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::sin(2.0 * std::numbers::pi * t / 24.0);
    const auto d = seasonal_decompose(x, 24);
    for (std::size_t t = 0; t < x.size(); ++t) {
        EXPECT_NEAR(d.seasonal[t], x[t], 1e-6);
        if (d.trend[t]) EXPECT_NEAR(d.residual[t], 0.0, 1e-6);
    }
}

TEST(Seasonal, ConstantSeries) {
    const std::vector<double> x(50, 3.0);
    const auto d = seasonal_decompose(x, 5);
    for (std::size_t t = 0; t < x.size(); ++t) {
        EXPECT_NEAR(d.seasonal[t], 0.0, 1e-12);
        if (d.trend[t]) {
            EXPECT_NEAR(*d.trend[t], 3.0, 1e-12);
            EXPECT_NEAR(d.residual[t], 0.0, 1e-12);
        }
    }
}

TEST(Seasonal, RampPlusSquareWaveMatchesIndependentDecomposition) {
    const std::vector<double> wave{1.0, 1.0, -1.0, -1.0};
    std::vector<double> x(40);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = 0.3 * t + wave[t % 4];
    const auto d = seasonal_decompose(x, 4);
    const auto ref = oracle::decompose(x, 4);
    for (std::size_t t = 0; t < x.size(); ++t) {
        EXPECT_NEAR(d.seasonal[t], ref.seasonal[t], 1e-12);
        EXPECT_EQ(d.trend[t].has_value(), ref.trend[t].has_value());
        if (d.trend[t]) {
            EXPECT_NEAR(*d.trend[t], *ref.trend[t], 1e-12);
            EXPECT_NEAR(d.seasonal[t], wave[t % 4], 1e-6);
        }
    }
}

TEST(Seasonal, AdditivityPeriodicityAndZeroSum) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int period : {24, 7}) {
        std::vector<double> x(period * 6);
        for (std::size_t t = 0; t < x.size(); ++t) x[t] = 0.05 * t + std::cos(t * 0.7) + n(rng);
        const auto d = seasonal_decompose(x, period);
        double sum = 0.0;
        for (int p = 0; p < period; ++p) sum += d.seasonal[p];
        EXPECT_NEAR(sum, 0.0, 1e-9);
        for (std::size_t t = 0; t < x.size(); ++t) {
            if (t + period < x.size()) EXPECT_EQ(d.seasonal[t], d.seasonal[t + period]);
            if (d.trend[t]) EXPECT_NEAR(*d.trend[t] + d.seasonal[t] + d.residual[t], x[t], 1e-9);
        }
    }
}

TEST(Seasonal, ShortSeriesIsAnError) {
    EXPECT_THROW(seasonal_decompose(std::vector<double>(47, 1.0), 24), DataError);
}

TEST(FeatureVector, Concatenation) {
    Vector reduced(2);
    reduced << 1, 2;
    const std::vector<double> seasonal{0.5};
    const Vector out = build_feature_vector(reduced, seasonal);
    ASSERT_EQ(out.size(), 3);
    EXPECT_EQ(out[2], 0.5);
    EXPECT_EQ(build_feature_vector(reduced, {}).size(), 2);
    EXPECT_EQ(build_feature_vector(Vector::Zero(3), std::vector<double>{1, 2}).size(), 5);
}

TEST(Preprocessor, JsonRoundTripAndTransform) {
    RawStream s;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        s.push_back({t, {std::sin(t * 0.26) + 0.1 * n(rng), 2.0 * n(rng), 5.0 + n(rng)}, {}});
    }
    PreprocessOptions opt;
    opt.seasonal_period = 24;
    const auto pre = Preprocessor::fit(s, opt);
    EXPECT_EQ(pre.raw_dim(), 3u);
    EXPECT_EQ(pre.feature_dim(), pre.pca()->retained() + 3);
    const auto back = Preprocessor::from_json(pre.to_json());
    const auto a = pre.transform(57, s[57].values);
    const auto b = back.transform(57, s[57].values);
    EXPECT_EQ(a.index, 57);
    EXPECT_LT((a.features - b.features).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((a.normalized - b.normalized).cwiseAbs().maxCoeff(), 1e-15);

    opt.use_pca = false;
    opt.seasonal_period = 0;
    const auto plain = Preprocessor::fit(s, opt);
    EXPECT_EQ(plain.feature_dim(), 3u);
}
