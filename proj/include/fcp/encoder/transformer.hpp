#pragma once

#include <fcp/diffmath/nn.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/diffmath/tape.hpp>
#include <fcp/errors.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace fcp::encoder {

using diffmath::ParamStore;
using diffmath::Tape;
using diffmath::Var;

struct EncoderConfig {
    int layers = 4;
    int heads = 2;
    int model_dim = 32;
    double dropout = 0.1;

    void validate() const {
        if (layers < 0) throw UsageError("encoder layers must be >= 0");
        if (heads < 1 || model_dim < 1) throw UsageError("encoder heads and model_dim must be >= 1");
        if (model_dim % heads != 0) throw UsageError("model_dim must be divisible by heads");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0,1)");
    }
};

/// Past-context tokens: one row per time step, features followed by residuals.
struct ContextWindow {
    Matrix tokens;  // w x (d_x + d_y)

    Eigen::Index length() const { return tokens.rows(); }
};

inline constexpr const char* kNullGuidanceName = "guidance.null";

/// Sinusoidal positional encoding, rows = positions.
inline Matrix positional_encoding(Eigen::Index length, Eigen::Index dim) {
    Matrix pe(length, dim);
    for (Eigen::Index pos = 0; pos < length; ++pos)
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * freq)
                                      : std::cos(static_cast<double>(pos) * freq);
        }
    return pe;
}

/// Pre-LayerNorm Transformer encoder with mean pooling and a linear head.
///
/// tokens -> linear embedding + positional encoding -> `layers` blocks of
/// [x + MHA(LN(x)), x + FFN(LN(x))] -> LN -> mean over tokens -> linear.
/// Parameters use the `enc.` prefix; the learned null guidance is stored
/// alongside as `guidance.null`.
class Encoder {
public:
    Encoder(EncoderConfig cfg, Eigen::Index token_dim) : cfg_(cfg), token_dim_(token_dim) {
        cfg_.validate();
        if (token_dim < 1) throw UsageError("token dimension must be >= 1");
    }

    const EncoderConfig& config() const noexcept { return cfg_; }
    Eigen::Index token_dim() const noexcept { return token_dim_; }
    Eigen::Index output_dim() const noexcept { return cfg_.model_dim; }

    template <class Rng>
    void init(ParamStore& store, Rng& rng) const {
        const Eigen::Index d = cfg_.model_dim;
        const auto lin = [&](const std::string& name, Eigen::Index out, Eigen::Index in) {
            store.add(name + ".weight", diffmath::uniform_init(out, in, in, rng));
            store.add(name + ".bias", diffmath::uniform_init(1, out, in, rng));
        };
        const auto norm = [&](const std::string& name) {
            store.add(name + ".gain", Matrix::Ones(1, d));
            store.add(name + ".bias", Matrix::Zero(1, d));
        };
        lin("enc.embed", d, token_dim_);
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string b = block_prefix(l);
            norm(b + ".ln1");
            lin(b + ".attn.q", d, d);
            lin(b + ".attn.k", d, d);
            lin(b + ".attn.v", d, d);
            lin(b + ".attn.o", d, d);
            norm(b + ".ln2");
            lin(b + ".ff1", 4 * d, d);
            lin(b + ".ff2", d, 4 * d);
        }
        norm("enc.final_ln");
        lin("enc.head", d, d);
        store.add(kNullGuidanceName, diffmath::uniform_init(1, d, d, rng));
    }

    /// Records the encoder for `tokens`, a vertical stack of windows of
    /// `window_len` rows each. Returns (#windows x model_dim). Dropout is
    /// active iff `dropout_rng` is non-null.
    Var forward(Tape& tape, const ParamStore& store, const Matrix& tokens, Eigen::Index window_len,
                std::mt19937_64* dropout_rng = nullptr) const {
        if (tokens.cols() != token_dim_) throw ShapeMismatch("encoder token width mismatch");
        if (window_len < 1 || tokens.rows() % window_len != 0) throw ShapeMismatch("encoder window length mismatch");
        const Eigen::Index segments = tokens.rows() / window_len;
        const Eigen::Index d = cfg_.model_dim;

        Matrix pe(tokens.rows(), d);
        const Matrix pe_one = positional_encoding(window_len, d);
        for (Eigen::Index s = 0; s < segments; ++s) pe.middleRows(s * window_len, window_len) = pe_one;

        Var x = lin(tape, store, "enc.embed", tape.constant(tokens));
        x = diffmath::add(tape, x, tape.constant(std::move(pe)));
        for (int l = 0; l < cfg_.layers; ++l) {
            const std::string b = block_prefix(l);
            Var a = norm(tape, store, b + ".ln1", x);
            Var att = attention(tape, store, b, a, window_len, segments);
            x = diffmath::add(tape, x, dropout(tape, att, dropout_rng));
            Var f = norm(tape, store, b + ".ln2", x);
            f = diffmath::gelu(tape, lin(tape, store, b + ".ff1", f));
            f = lin(tape, store, b + ".ff2", f);
            x = diffmath::add(tape, x, dropout(tape, f, dropout_rng));
        }
        x = norm(tape, store, "enc.final_ln", x);
        Var pooled = diffmath::segment_mean_rows(tape, x, window_len);
        return lin(tape, store, "enc.head", pooled);
    }

    /// Guidance for a single window in evaluation mode.
    Vector encode(const ParamStore& store, const ContextWindow& window) const {
        Tape tape;
        Var h = forward(tape, store, window.tokens, window.length());
        return tape.value(h).row(0).transpose();
    }

    /// Guidance for many windows of equal length, one row each.
    Matrix encode_many(const ParamStore& store, const Matrix& stacked_tokens, Eigen::Index window_len) const {
        Tape tape;
        return tape.value(forward(tape, store, stacked_tokens, window_len));
    }

private:
    static std::string block_prefix(int l) { return "enc.b" + std::to_string(l); }

    static Var lin(Tape& t, const ParamStore& s, const std::string& name, Var x) {
        return diffmath::linear(t, x, t.param(s, name + ".weight"), t.param(s, name + ".bias"));
    }

    static Var norm(Tape& t, const ParamStore& s, const std::string& name, Var x) {
        return diffmath::layer_norm(t, x, t.param(s, name + ".gain"), t.param(s, name + ".bias"));
    }

    Var dropout(Tape& t, Var x, std::mt19937_64* rng) const {
        if (rng == nullptr || cfg_.dropout == 0.0) return x;
        const Matrix& v = t.value(x);
        std::bernoulli_distribution keep(1.0 - cfg_.dropout);
        const double s = 1.0 / (1.0 - cfg_.dropout);
        Matrix mask(v.rows(), v.cols());
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? s : 0.0;
        return diffmath::hadamard(t, x, t.constant(std::move(mask)));
    }

    Var attention(Tape& t, const ParamStore& s, const std::string& b, Var a, Eigen::Index len,
                  Eigen::Index segments) const {
        const Eigen::Index dh = cfg_.model_dim / cfg_.heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        Var q = lin(t, s, b + ".attn.q", a);
        Var k = lin(t, s, b + ".attn.k", a);
        Var v = lin(t, s, b + ".attn.v", a);
        std::vector<Var> rows;
        rows.reserve(static_cast<std::size_t>(segments));
        std::vector<Var> heads(static_cast<std::size_t>(cfg_.heads));
        for (Eigen::Index seg = 0; seg < segments; ++seg) {
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                const Eigen::Index r0 = seg * len;
                const Eigen::Index c0 = hd * dh;
                Var qs = diffmath::block(t, q, r0, c0, len, dh);
                Var ks = diffmath::block(t, k, r0, c0, len, dh);
                Var vs = diffmath::block(t, v, r0, c0, len, dh);
                Var w = diffmath::softmax_rows(t, diffmath::scale(t, diffmath::matmul_nt(t, qs, ks), inv_sqrt));
                heads[static_cast<std::size_t>(hd)] = diffmath::matmul(t, w, vs);
            }
            rows.push_back(cfg_.heads == 1 ? heads[0] : diffmath::concat_cols(t, heads));
        }
        Var merged = segments == 1 ? rows[0] : diffmath::concat_rows(t, rows);
        return lin(t, s, b + ".attn.o", merged);
    }

    EncoderConfig cfg_;
    Eigen::Index token_dim_;
};

inline Vector encode(const Encoder& enc, const ParamStore& store, const ContextWindow& window) {
    return enc.encode(store, window);
}

/// The learned guidance vector standing in for "no context".
inline Vector null_guidance(const ParamStore& store) { return store.at(kNullGuidanceName).row(0).transpose(); }

}  // namespace fcp::encoder
