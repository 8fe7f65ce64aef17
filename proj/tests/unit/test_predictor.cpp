#include <fcp/predictor/linear_ensemble.hpp>

#include "fd.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace fcp;
using namespace fcp::predictor;
using fcp::testing::uniform_matrix;

namespace {

struct LinearData {
    Matrix x, y, w_star;  // w_star: d_y x (width + 1), intercept last

    LinearData(std::uint64_t seed, Eigen::Index n, Eigen::Index width, Eigen::Index d_y) {
        std::mt19937_64 rng(seed);
        x = uniform_matrix(rng, n, width);
        w_star = uniform_matrix(rng, d_y, width + 1, -2.0, 2.0);
        y = (x * w_star.leftCols(width).transpose()).rowwise() + w_star.col(width).transpose();
    }
};

LinearModel constant_model(const Vector& c, Eigen::Index width) {
    Matrix w = Matrix::Zero(c.size(), width + 1);
    w.col(width) = c;
    return LinearModel{w};
}

}  // namespace

TEST(FitLinear, RecoversNoiselessWeights) {
    const LinearData d(1, 200, 6, 3);
    EXPECT_LT((fit_linear(d.x, d.y).weights - d.w_star).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitLinear, InterceptOnlyGivesColumnMeans) {
    std::mt19937_64 rng(2);
    const Matrix y = uniform_matrix(rng, 30, 2);
    const LinearModel m = fit_linear(Matrix(30, 0), y);
    EXPECT_LT((m.weights.col(0) - y.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitLinear, SlopeAndIntercept) {
    Matrix x(3, 1), y(3, 1);
    x << 0, 1, 2;
    y << 1, 3, 5;
    const LinearModel m = fit_linear(x, y);
    EXPECT_NEAR(m.weights(0, 0), 2.0, 1e-8);
    EXPECT_NEAR(m.weights(0, 1), 1.0, 1e-8);
    EXPECT_NEAR(m.predict(Vector::Constant(1, 10.0))[0], 21.0, 1e-7);
}

TEST(FitLinear, ErrorCases) {
    EXPECT_THROW(fit_linear(Matrix::Ones(3, 2), Matrix::Ones(4, 1)), ShapeMismatch);
    EXPECT_THROW(fit_linear(Matrix::Ones(2, 4), Matrix::Ones(2, 1)), UsageError);
    Matrix bad = Matrix::Ones(5, 1);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(fit_linear(bad, Matrix::Ones(5, 1)), SingularGram);
}

TEST(Bootstrap, FullIndexSetEqualsOrdinaryLeastSquares) {
    const LinearData d(3, 50, 4, 2);
    std::vector<std::size_t> all(50);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Ensemble e = fit_on_samples(d.x, d.y, {all});
    const LinearModel ols = fit_linear(d.x, d.y);
    const Vector f = d.x.row(7).transpose();
    EXPECT_EQ(predict(e, f), ols.predict(f));
    EXPECT_EQ(predict(e, f, 7), ols.predict(f));
}

TEST(Bootstrap, DeterministicForSeed) {
    const LinearData d(4, 60, 3, 2);
    std::mt19937_64 a(9), b(9);
    const Ensemble ea = fit_loo_bootstrap(a, d.x, d.y), eb = fit_loo_bootstrap(b, d.x, d.y);
    ASSERT_EQ(ea.members.size(), 15u);
    EXPECT_EQ(ea.samples, eb.samples);
    for (std::size_t m = 0; m < 15; ++m) EXPECT_EQ(ea.members[m].weights, eb.members[m].weights);
}

TEST(Bootstrap, SamplesAreFullSizeWithReplacement) {
    const LinearData d(5, 40, 2, 1);
    std::mt19937_64 rng(5);
    const Ensemble e = fit_loo_bootstrap(rng, d.x, d.y, 7);
    ASSERT_EQ(e.samples.size(), 7u);
    bool any_repeat = false;
    for (const auto& s : e.samples) {
        EXPECT_EQ(s.size(), 40u);
        std::vector<bool> seen(40, false);
        for (std::size_t i : s) {
            any_repeat = any_repeat || seen[i];
            seen[i] = true;
        }
    }
    EXPECT_TRUE(any_repeat);
}

TEST(Bootstrap, NoiselessDataEveryMemberRecoversWeights) {
    const LinearData d(6, 120, 5, 2);
    std::mt19937_64 rng(6);
    for (const auto& m : fit_loo_bootstrap(rng, d.x, d.y).members)
        EXPECT_LT((m.weights - d.w_star).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Bootstrap, TooFewRowsRejected) {
    std::mt19937_64 rng(7);
    EXPECT_THROW(fit_loo_bootstrap(rng, Matrix::Ones(1, 1), Matrix::Ones(1, 1)), UsageError);
}

TEST(Predict, IdenticalMembersGiveCommonPrediction) {
    Ensemble e;
    for (int i = 0; i < 3; ++i) {
        e.members.push_back(constant_model(Vector{{1.5, -2.0}}, 2));
        e.in_bag.push_back({true, false});
    }
    EXPECT_EQ(predict(e, Vector::Zero(2)), (Vector{{1.5, -2.0}}));
}

TEST(Predict, NewPointAveragesAllMembers) {
    Ensemble e;
    e.members = {constant_model(Vector{{0.0, 0.0}}, 1), constant_model(Vector{{2.0, 2.0}}, 1)};
    e.in_bag = {{true, true}, {true, false}};
    EXPECT_EQ(predict(e, Vector::Zero(1)), (Vector{{1.0, 1.0}}));
    EXPECT_EQ(predict(e, Vector::Zero(1), 5), (Vector{{1.0, 1.0}}));
}

TEST(Predict, OutOfBagMembersOnly) {
    Ensemble e;
    e.members = {constant_model(Vector{{0.0, 0.0}}, 1), constant_model(Vector{{2.0, 2.0}}, 1),
                 constant_model(Vector{{7.0, 7.0}}, 1)};
    e.in_bag = {{true, true}, {false, true}, {true, true}};
    EXPECT_EQ(predict(e, Vector::Zero(1), 0), (Vector{{2.0, 2.0}}));
    // index 1 is in every bag: fall back to all members
    EXPECT_EQ(predict(e, Vector::Zero(1), 1), (Vector{{3.0, 3.0}}));
}

TEST(Predict, AffineInTheWindow) {
    const LinearData d(8, 80, 4, 3);
    Matrix noisy = d.y;
    std::mt19937_64 rng(8);
    noisy += uniform_matrix(rng, noisy.rows(), noisy.cols(), -0.1, 0.1);
    const Ensemble e = fit_loo_bootstrap(rng, d.x, noisy);
    const Vector w1 = uniform_matrix(rng, 4, 1), w2 = uniform_matrix(rng, 4, 1);
    const double a = 0.3;
    const Vector lhs = predict(e, Vector(a * w1 + (1 - a) * w2));
    const Vector rhs = a * predict(e, w1) + (1 - a) * predict(e, w2);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, EveryTrainingRowHasAResidual) {
    const LinearData d(9, 30, 2, 2);
    std::mt19937_64 rng(9);
    const Ensemble e = fit_loo_bootstrap(rng, d.x, d.y);
    for (Eigen::Index i = 0; i < d.x.rows(); ++i)
        EXPECT_TRUE(predict(e, Vector(d.x.row(i).transpose()), static_cast<std::size_t>(i)).allFinite());
}

TEST(Predict, WidthMismatchThrows) {
    Ensemble e;
    e.members = {constant_model(Vector::Zero(1), 3)};
    e.in_bag = {{true}};
    EXPECT_THROW(predict(e, Vector::Zero(2)), ShapeMismatch);
}
