#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/diffmath/tape.hpp>
#include <fcp/errors.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace fcp::diffmath {

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization of a rows x cols block.
template <class Rng>
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// Fully connected network with Softplus between layers and a linear head.
///
/// Parameters live in a ParamStore as `<prefix>.l<i>.weight` (out x in) and
/// `<prefix>.l<i>.bias` (1 x out).
struct Mlp {
    std::string prefix;
    std::vector<Eigen::Index> widths;  // input, hidden..., output

    Eigen::Index input_width() const { return widths.front(); }
    Eigen::Index output_width() const { return widths.back(); }
    std::size_t layer_count() const { return widths.size() - 1; }

    std::string weight_name(std::size_t l) const { return prefix + ".l" + std::to_string(l) + ".weight"; }
    std::string bias_name(std::size_t l) const { return prefix + ".l" + std::to_string(l) + ".bias"; }

    template <class Rng>
    void init(ParamStore& store, Rng& rng) const {
        for (std::size_t l = 0; l < layer_count(); ++l) {
            store.add(weight_name(l), uniform_init(widths[l + 1], widths[l], widths[l], rng));
            store.add(bias_name(l), uniform_init(1, widths[l + 1], widths[l], rng));
        }
    }

    /// Records the network on `tape` for a batch of row inputs.
    Var forward(Tape& tape, const ParamStore& store, Var x) const {
        if (tape.value(x).cols() != input_width()) throw ShapeMismatch("mlp input width mismatch");
        Var h = x;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            h = linear(tape, h, tape.param(store, weight_name(l)), tape.param(store, bias_name(l)));
            if (l + 1 < layer_count()) h = softplus(tape, h);
        }
        return h;
    }

    /// Tape-free evaluation for a batch of row inputs.
    Matrix evaluate(const ParamStore& store, const Matrix& x) const {
        if (x.cols() != input_width()) throw ShapeMismatch("mlp input width mismatch");
        Matrix h = x;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            Matrix z = (h * store.at(weight_name(l)).transpose()).rowwise() + store.at(bias_name(l)).row(0);
            if (l + 1 < layer_count()) z = z.unaryExpr([](double v) { return softplus(v); });
            h = std::move(z);
        }
        return h;
    }
};

/// Result of a single-input forward evaluation with its recording.
struct Forward {
    Vector output;
    Tape tape;
};

inline Forward forward(const Mlp& net, const ParamStore& store, const Vector& input) {
    if (input.size() != net.input_width()) throw ShapeMismatch("input length does not match network input width");
    Forward f;
    Var x = f.tape.input(input.transpose());
    Var y = net.forward(f.tape, store, x);
    f.tape.set_output(y);
    f.output = f.tape.value(y).row(0).transpose();
    return f;
}

/// Exact input Jacobian (d_out x d_in) of a graph built by `build(tape, x)`,
/// using one reverse pass per output component.
template <class Build>
Matrix jacobian_input(Build&& build, const Vector& input) {
    Matrix jac;
    Eigen::Index d_out = -1;
    for (Eigen::Index k = 0; d_out < 0 || k < d_out; ++k) {
        Tape tape;
        Var x = tape.input(input.transpose());
        Var y = build(tape, x);
        const Matrix& out = tape.value(y);
        if (out.rows() != 1) throw ShapeMismatch("jacobian_input expects a single-row output");
        if (d_out < 0) {
            d_out = out.cols();
            jac.resize(d_out, input.size());
            if (d_out == 0) break;
        }
        Matrix seed = Matrix::Zero(1, d_out);
        seed(0, k) = 1.0;
        tape.backward(y, seed);
        jac.row(k) = tape.input_grad(x).row(0);
    }
    return jac;
}

inline Matrix jacobian_input(const Mlp& net, const ParamStore& store, const Vector& input) {
    if (input.size() != net.input_width()) throw ShapeMismatch("input length does not match network input width");
    return jacobian_input([&](Tape& t, Var x) { return net.forward(t, store, x); }, input);
}

/// Adam moments; beta/eps default to the canonical values.
struct AdamState {
    ParamStore m;
    ParamStore v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const ParamStore& params) {
        AdamState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        return s;
    }
};

/// One bias-corrected Adam update. Parameters absent from `grads` see a zero gradient.
inline void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr) {
    if (state.m.size() != params.size()) state = AdamState::for_params(params);
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        Matrix& m = state.m.at(name);
        Matrix& v = state.v.at(name);
        if (grads.contains(name)) {
            const Matrix& g = grads.at(name);
            if (g.rows() != p.rows() || g.cols() != p.cols()) throw ShapeMismatch("adam: gradient shape for " + name);
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        } else {
            m *= state.beta1;
            v *= state.beta2;
        }
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
    }
}

/// Rescales all gradients so that their joint L2 norm is at most max_norm; returns the pre-clip norm.
inline double clip_global_norm(ParamStore& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads) g *= s;
    }
    return norm;
}

}  // namespace fcp::diffmath
