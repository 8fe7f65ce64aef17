#pragma once

#include <fcp/diffmath/nn.hpp>
#include <fcp/encoder/transformer.hpp>

#include "fd.hpp"

#include <random>

namespace fcp::testing {

/// Attention block feeding a 2-layer Softplus MLP, reduced to a scalar by a
/// fixed upstream vector. Used for end-to-end gradient checks.
struct AttentionMlp {
    encoder::Encoder enc{encoder::EncoderConfig{1, 2, 4, 0.0}, 3};
    diffmath::Mlp mlp{"head", {4, 5, 2}};
    Matrix tokens;
    Matrix upstream;
    ParamStore params;

    explicit AttentionMlp(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        enc.init(params, rng);
        mlp.init(params, rng);
        randomize(params, rng);
        tokens = uniform_matrix(rng, 4, 3);
        upstream = uniform_matrix(rng, 1, 2);
    }

    diffmath::Var record(diffmath::Tape& tape, const ParamStore& p) const {
        diffmath::Var h = enc.forward(tape, p, tokens, tokens.rows());
        diffmath::Var y = mlp.forward(tape, p, h);
        tape.set_output(y);
        return y;
    }

    double loss(const ParamStore& p) const {
        diffmath::Tape tape;
        return (tape.value(record(tape, p)).array() * upstream.array()).sum();
    }

    ParamStore grads() const {
        diffmath::Tape tape;
        record(tape, params);
        return diffmath::grad_params(tape, upstream);
    }
};

}  // namespace fcp::testing
