#include <fcp/qmc/ball.hpp>
#include <fcp/qmc/sample_size.hpp>
#include <fcp/qmc/sobol.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>
#include <vector>

using namespace fcp;
using namespace fcp::qmc;

// Reference points from scipy.stats.qmc.Sobol(scramble=False), which uses the
// same Joe-Kuo direction numbers; row i is the point with sequence index i.
namespace {
const std::vector<std::pair<std::uint64_t, std::vector<double>>> kSobol10 = {
    {1, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}},
    {2, {0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75}},
    {3, {0.25, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25, 0.25, 0.25}},
    {4, {0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875, 0.875, 0.625}},
    {5, {0.875, 0.875, 0.125, 0.375, 0.875, 0.625, 0.875, 0.375, 0.375, 0.125}},
    {6, {0.625, 0.125, 0.875, 0.625, 0.625, 0.875, 0.125, 0.125, 0.125, 0.375}},
    {7, {0.125, 0.625, 0.375, 0.125, 0.125, 0.375, 0.625, 0.625, 0.625, 0.875}},
    {100, {0.4140625, 0.2578125, 0.7734375, 0.7265625, 0.8828125, 0.7421875, 0.0234375, 0.4765625, 0.6328125,
           0.6953125}},
    {1023, {0.0009765625, 0.7529296875, 0.6123046875, 0.1455078125, 0.1865234375, 0.4384765625, 0.1396484375,
            0.6181640625, 0.3447265625, 0.8505859375}},
};

const std::vector<double> kSobol40At777 = {
    0.6923828125, 0.9365234375, 0.1630859375, 0.2744140625, 0.6357421875, 0.3564453125, 0.1904296875,
    0.7626953125, 0.3486328125, 0.3232421875, 0.7451171875, 0.6962890625, 0.3837890625, 0.4736328125,
    0.5693359375, 0.5146484375, 0.4033203125, 0.8642578125, 0.3701171875, 0.7529296875, 0.2373046875,
    0.2724609375, 0.9462890625, 0.4814453125, 0.3447265625, 0.1455078125, 0.0595703125, 0.7802734375,
    0.0634765625, 0.1103515625, 0.5419921875, 0.8994140625, 0.1123046875, 0.0029296875, 0.8056640625,
    0.9462890625, 0.4619140625, 0.3505859375, 0.3427734375, 0.3583984375};

const std::vector<double> kSobol40At2047 = {
    0.00048828125, 0.62744140625, 0.93115234375, 0.35107421875, 0.63037109375, 0.65771484375, 0.11767578125,
    0.03173828125, 0.91455078125, 0.44580078125, 0.49853515625, 0.88525390625, 0.58447265625, 0.98779296875,
    0.48876953125, 0.67822265625, 0.54150390625, 0.82373046875, 0.10986328125, 0.03662109375, 0.35791015625,
    0.10791015625, 0.09423828125, 0.69775390625, 0.94970703125, 0.31982421875, 0.25341796875, 0.07861328125,
    0.53076171875, 0.39208984375, 0.07568359375, 0.41455078125, 0.07470703125, 0.08154296875, 0.40283203125,
    0.46435546875, 0.15771484375, 0.55517578125, 0.86572265625, 0.67626953125};
}  // namespace

TEST(Sobol, FirstOneDimensionalPoints) {
    SobolStream s(1);
    EXPECT_EQ(sobol_next(s)[0], 0.5);
    EXPECT_EQ(sobol_next(s)[0], 0.75);
    EXPECT_EQ(sobol_next(s)[0], 0.25);
}

TEST(Sobol, FirstTwoDimensionalPoint) {
    SobolStream s(2);
    EXPECT_EQ(s.next(), (Vector{{0.5, 0.5}}));
}

TEST(Sobol, MatchesReferenceInTenDimensions) {
    for (const auto& [index, ref] : kSobol10) {
        SobolStream s(10, index);
        const Vector p = s.next();
        for (int j = 0; j < 10; ++j) EXPECT_EQ(p[j], ref[static_cast<std::size_t>(j)]) << index << "," << j;
    }
}

TEST(Sobol, MatchesReferenceInFortyDimensions) {
    for (const auto& [index, ref] : {std::pair{777u, kSobol40At777}, std::pair{2047u, kSobol40At2047}}) {
        SobolStream s(40, index);
        const Vector p = s.next();
        for (int j = 0; j < 40; ++j) EXPECT_EQ(p[j], ref[static_cast<std::size_t>(j)]) << index << "," << j;
    }
}

TEST(Sobol, SequentialAdvanceMatchesSeek) {
    SobolStream a(9);
    for (int i = 0; i < 500; ++i) a.next();
    SobolStream b(9, 501);
    EXPECT_EQ(a.index(), b.index());
    EXPECT_EQ(a.next(), b.next());
}

TEST(Sobol, DeterministicForEqualDimensionAndIndex) {
    SobolStream a(5, 33), b(5, 33);
    EXPECT_EQ(a.take(64), b.take(64));
}

// Points with indices 2^k .. 2^(k+1)-1 sit on the odd multiples of 2^-(k+1)
// in every coordinate.
TEST(Sobol, DyadicBlocksAreStratified) {
    for (int k = 0; k <= 4; ++k) {
        const std::uint64_t n = std::uint64_t{1} << k;
        SobolStream s(12, n);
        const Matrix pts = s.take(n);
        for (int j = 0; j < 12; ++j) {
            std::vector<double> got;
            for (Eigen::Index i = 0; i < pts.rows(); ++i) got.push_back(pts(i, j));
            std::sort(got.begin(), got.end());
            for (std::uint64_t i = 0; i < n; ++i)
                EXPECT_EQ(got[i], static_cast<double>(2 * i + 1) / static_cast<double>(2 * n)) << k << "," << j;
        }
    }
}

TEST(Sobol, ElementaryIntervalsAtResolution32) {
    SobolStream s(2, 1024);
    std::set<std::pair<int, int>> cells;
    for (int i = 0; i < 1024; ++i) {
        const Vector p = s.next();
        cells.emplace(static_cast<int>(p[0] * 32), static_cast<int>(p[1] * 32));
    }
    EXPECT_EQ(cells.size(), 1024u);

    // the first 1023 emitted points miss only the cell of the skipped origin
    SobolStream f(2);
    cells.clear();
    for (int i = 0; i < 1023; ++i) {
        const Vector p = f.next();
        cells.emplace(static_cast<int>(p[0] * 32), static_cast<int>(p[1] * 32));
    }
    EXPECT_EQ(cells.size(), 1023u);
    EXPECT_FALSE(cells.contains({0, 0}));
}

TEST(Sobol, UnsupportedDimensionRejected) {
    EXPECT_THROW(SobolStream(0), UsageError);
    EXPECT_THROW(SobolStream(65), UsageError);
}

// ---------------------------------------------------------------------------
// Ball points

TEST(BallPoint, ZeroRadialCoordinateGivesCenter) {
    EXPECT_EQ(ball_point(Vector{{0.3, 0.8, 0.0}}, 2, 2.0), Vector::Zero(2));
}

TEST(BallPoint, OneDimensionalIsUniformOnInterval) {
    const double r = 1.7;
    BallSampler b(1, r);
    std::vector<double> xs;
    for (int i = 0; i < 4096; ++i) {
        const Vector p = b.next();
        xs.push_back(p[0]);
    }
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = (xs[i] + r) / (2.0 * r);
        ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
    }
    EXPECT_LT(ks, 0.05);
}

TEST(BallPoint, TwoDimensionalSecondMoment) {
    BallSampler b(2, 1.0);
    const Matrix pts = b.take(4096);
    EXPECT_NEAR(pts.rowwise().squaredNorm().mean(), 0.5, 0.01);
}

TEST(BallPoint, NeverLeavesTheBall) {
    for (int d : {1, 2, 3, 4, 8}) {
        const double r = 0.37 * d;
        BallSampler b(d, r);
        const Matrix pts = b.take(4096);
        EXPECT_LE(pts.rowwise().norm().maxCoeff(), r) << d;
    }
    // radial coordinate at the top of the range
    EXPECT_LE(ball_point(Vector{{0.9, 0.1, 1.0}}, 2, 3.0).norm(), 3.0);
}

TEST(BallPoint, HigherDimensionalMomentsMatchUniformLaw) {
    // E||p||^2 = d r^2 / (d + 2)
    for (int d : {3, 4, 8}) {
        BallSampler b(d, 1.0);
        const Matrix pts = b.take(8192);
        EXPECT_NEAR(pts.rowwise().squaredNorm().mean(), d / (d + 2.0), 0.01) << d;
        EXPECT_LT(pts.colwise().mean().cwiseAbs().maxCoeff(), 0.02) << d;
    }
}

TEST(NormalQuantile, KnownValues) {
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
    EXPECT_EQ(normal_quantile(0.5), 0.0);
    EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-12);
}

// ---------------------------------------------------------------------------
// Relative standard error and the sample-size gate

TEST(RelativeSe, Examples) {
    const std::vector<double> c(10, 3.0);
    EXPECT_EQ(relative_se(c), 0.0);
    const std::vector<double> v{1.0, 3.0};
    EXPECT_DOUBLE_EQ(relative_se(v), 0.5);
    const std::vector<double> z{1.0, -1.0};
    EXPECT_THROW(relative_se(z), ZeroMean);
}

TEST(RelativeSe, ShrinksLikeInverseRootN) {
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> ln(0.0, 0.5);
    std::vector<double> a(10000), b(40000);
    for (auto& x : a) x = ln(rng);
    for (auto& x : b) x = ln(rng);
    const double ratio = relative_se(b) / relative_se(a);
    EXPECT_GT(ratio, 0.4);
    EXPECT_LT(ratio, 0.6);
}

TEST(SelectSampleSize, ConstantEvaluatorReturnsStart) {
    auto eval = [](std::size_t n) { return std::vector<double>(n, 2.0); };
    EXPECT_EQ(select_sample_size(eval, 512), 512u);
}

TEST(SelectSampleSize, UnreachableGate) {
    std::mt19937_64 rng(1);
    auto eval = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = 1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return v;
    };
    EXPECT_THROW(select_sample_size(eval, 64, 0.0, 1024), GateUnreachable);
}

TEST(SelectSampleSize, StartMustBePowerOfTwo) {
    auto eval = [](std::size_t n) { return std::vector<double>(n, 1.0); };
    EXPECT_THROW(select_sample_size(eval, 100), UsageError);
}

TEST(SelectSampleSize, LognormalMatchesDeltaMethod) {
    // relative sd of lognormal(0, s) is sqrt(exp(s^2) - 1); N* = (sd_rel / gate)^2
    const double s = 0.5, gate = 0.01;
    const double n_star = (std::exp(s * s) - 1.0) / (gate * gate);
    auto eval = [&](std::size_t n) {
        std::mt19937_64 rng(n);
        std::lognormal_distribution<double> ln(0.0, s);
        std::vector<double> v(n);
        for (auto& x : v) x = ln(rng);
        return v;
    };
    const auto n = static_cast<double>(select_sample_size(eval, 256, gate));
    EXPECT_GE(n, n_star / 2.0);
    EXPECT_LE(n, n_star * 2.0);
}
