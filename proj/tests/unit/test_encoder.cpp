#include <fcp/diffmath/tape.hpp>
#include <fcp/encoder/transformer.hpp>

#include "fd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace fcp;
using namespace fcp::encoder;
using fcp::testing::uniform_matrix;

namespace {

struct Fixture {
    EncoderConfig cfg{2, 2, 8, 0.1};
    Encoder enc{cfg, 5};
    ParamStore ps;

    explicit Fixture(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        enc.init(ps, rng);
    }
};

RowVector layer_norm_row(const RowVector& x, const ParamStore& ps, const std::string& name) {
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const RowVector xhat = (x.array() - mu) / std::sqrt(var + 1e-5);
    return xhat.cwiseProduct(ps.at(name + ".gain")) + ps.at(name + ".bias");
}

double gelu_tanh(double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
}

RowVector affine(const RowVector& x, const ParamStore& ps, const std::string& name) {
    return x * ps.at(name + ".weight").transpose() + ps.at(name + ".bias");
}

}  // namespace

TEST(Encoder, ZeroWeightsGiveZeroGuidance) {
    Fixture f(1);
    for (auto& [name, m] : f.ps)
        if (name.ends_with(".gain"))
            m.setOnes();
        else
            m.setZero();
    std::mt19937_64 rng(2);
    const Vector h = encode(f.enc, f.ps, ContextWindow{uniform_matrix(rng, 7, 5)});
    EXPECT_EQ(h, Vector::Zero(8));
}

TEST(Encoder, OutputDimensionIsModelDimForAnyLength) {
    Fixture f(3);
    std::mt19937_64 rng(4);
    for (int len : {1, 2, 17, 50}) EXPECT_EQ(f.enc.encode(f.ps, ContextWindow{uniform_matrix(rng, len, 5)}).size(), 8);
}

TEST(Encoder, ReversingTokensChangesGuidance) {
    Fixture f(5);
    std::mt19937_64 rng(6);
    const Matrix tokens = uniform_matrix(rng, 6, 5);
    const Matrix reversed = tokens.colwise().reverse();
    EXPECT_NE(f.enc.encode(f.ps, {tokens}), f.enc.encode(f.ps, {reversed}));
}

TEST(Encoder, EvaluationIsPure) {
    Fixture f(7);
    std::mt19937_64 rng(8);
    const ContextWindow w{uniform_matrix(rng, 10, 5)};
    EXPECT_EQ(f.enc.encode(f.ps, w), f.enc.encode(f.ps, w));
}

TEST(Encoder, SingleTokenMatchesHandPipeline) {
    Fixture f(9);
    std::mt19937_64 rng(10);
    const Matrix token = uniform_matrix(rng, 1, 5);
    // position 0 encoding: sin(0) = 0 on even, cos(0) = 1 on odd slots
    RowVector pe(8);
    for (int i = 0; i < 8; ++i) pe[i] = i % 2 == 0 ? 0.0 : 1.0;
    RowVector x = affine(token.row(0), f.ps, "enc.embed") + pe;
    for (int l = 0; l < 2; ++l) {
        const std::string b = "enc.b" + std::to_string(l);
        const RowVector a = layer_norm_row(x, f.ps, b + ".ln1");
        x += affine(affine(a, f.ps, b + ".attn.v"), f.ps, b + ".attn.o");
        RowVector hdn = affine(layer_norm_row(x, f.ps, b + ".ln2"), f.ps, b + ".ff1");
        for (Eigen::Index i = 0; i < hdn.size(); ++i) hdn[i] = gelu_tanh(hdn[i]);
        x += affine(hdn, f.ps, b + ".ff2");
    }
    const RowVector h = affine(layer_norm_row(x, f.ps, "enc.final_ln"), f.ps, "enc.head");
    const Vector got = f.enc.encode(f.ps, {token});
    EXPECT_LT((got - h.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, StackedWindowsMatchIndividualEncodings) {
    Fixture f(11);
    std::mt19937_64 rng(12);
    const Matrix a = uniform_matrix(rng, 4, 5), b = uniform_matrix(rng, 4, 5);
    Matrix both(8, 5);
    both << a, b;
    const Matrix h = f.enc.encode_many(f.ps, both, 4);
    EXPECT_LT((h.row(0).transpose() - f.enc.encode(f.ps, {a})).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((h.row(1).transpose() - f.enc.encode(f.ps, {b})).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Encoder, DropoutOnlyWithGenerator) {
    Fixture f(13);
    std::mt19937_64 rng(14), drop(15);
    const Matrix tokens = uniform_matrix(rng, 5, 5);
    diffmath::Tape t1, t2;
    const Matrix eval = t1.value(f.enc.forward(t1, f.ps, tokens, 5));
    const Matrix train = t2.value(f.enc.forward(t2, f.ps, tokens, 5, &drop));
    EXPECT_EQ(eval.transpose(), Matrix(f.enc.encode(f.ps, {tokens})));
    EXPECT_NE(eval, train);
}

TEST(Encoder, ShapeMismatchThrows) {
    Fixture f(16);
    EXPECT_THROW(f.enc.encode(f.ps, {Matrix::Zero(3, 4)}), ShapeMismatch);
    diffmath::Tape t;
    EXPECT_THROW(f.enc.forward(t, f.ps, Matrix::Zero(5, 5), 2), ShapeMismatch);
}

TEST(Encoder, InvalidConfigRejected) {
    EXPECT_THROW(Encoder(EncoderConfig{1, 3, 8, 0.0}, 2), UsageError);
    EXPECT_THROW(Encoder(EncoderConfig{1, 2, 8, 1.0}, 2), UsageError);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Fixture f(seed);
        std::mt19937_64 rng(seed + 100);
        const Matrix tokens = uniform_matrix(rng, 4, 5);
        const Matrix up = uniform_matrix(rng, 1, 8);
        auto loss = [&](const ParamStore& p) {
            diffmath::Tape t;
            return (t.value(f.enc.forward(t, p, tokens, 4)).array() * up.array()).sum();
        };
        diffmath::Tape t;
        t.set_output(f.enc.forward(t, f.ps, tokens, 4));
        const ParamStore g = diffmath::grad_params(t, up);
        EXPECT_LT(fcp::testing::max_rel_err(g, fcp::testing::fd_param_grads(loss, f.ps)), 1e-3) << seed;
    }
}

TEST(NullGuidance, DeterministicInitializationAndRoundTrip) {
    Fixture a(21), b(21);
    EXPECT_EQ(null_guidance(a.ps), null_guidance(b.ps));
    EXPECT_EQ(null_guidance(a.ps).size(), 8);
    std::stringstream buf;
    diffmath::save(buf, a.ps);
    EXPECT_EQ(null_guidance(diffmath::load(buf)), null_guidance(a.ps));
}

TEST(NullGuidance, DiffersFromEncodedWindows) {
    Fixture f(22);
    std::mt19937_64 rng(23);
    for (int i = 0; i < 10; ++i) EXPECT_NE(f.enc.encode(f.ps, {uniform_matrix(rng, 6, 5)}), null_guidance(f.ps));
}

TEST(PositionalEncoding, FirstRowsAreKnown) {
    const Matrix pe = positional_encoding(2, 4);
    EXPECT_EQ(pe(0, 0), 0.0);
    EXPECT_EQ(pe(0, 1), 1.0);
    EXPECT_NEAR(pe(1, 0), std::sin(1.0), 1e-15);
    EXPECT_NEAR(pe(1, 2), std::sin(0.01), 1e-15);
    EXPECT_NEAR(pe(1, 3), std::cos(0.01), 1e-15);
}
