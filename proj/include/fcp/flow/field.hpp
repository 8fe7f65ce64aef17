#pragma once

#include <fcp/diffmath/nn.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/diffmath/tape.hpp>
#include <fcp/encoder/transformer.hpp>
#include <fcp/errors.hpp>

#include <array>
#include <concepts>
#include <optional>
#include <utility>
#include <vector>

namespace fcp::flow {

using diffmath::ParamStore;

/// A velocity field with the guidance already fixed: rows of `x` are points.
/// velocity_div also returns the divergence (trace of the input Jacobian) per row.
template <class F>
concept ConditionalField = requires(const F& f, double t, const Matrix& x, Vector& div) {
    { f.velocity(t, x) } -> std::convertible_to<Matrix>;
    { f.velocity_div(t, x, div) } -> std::convertible_to<Matrix>;
    { f.dimension() } -> std::convertible_to<Eigen::Index>;
};

/// A guidance-conditioned field family with a distinguished null guidance.
template <class G>
concept GuidedField = requires(const G& g, const Vector& h) {
    { g.bind(h) } -> ConditionalField;
    { g.null_guidance() } -> std::convertible_to<Vector>;
};

// ---------------------------------------------------------------------------
// Analytic fields

struct ZeroField {
    Eigen::Index dim;
    Eigen::Index dimension() const { return dim; }
    Matrix velocity(double, const Matrix& x) const { return Matrix::Zero(x.rows(), x.cols()); }
    Matrix velocity_div(double t, const Matrix& x, Vector& div) const {
        div = Vector::Zero(x.rows());
        return velocity(t, x);
    }
};

struct ConstantField {
    Vector c;
    Eigen::Index dimension() const { return c.size(); }
    Matrix velocity(double, const Matrix& x) const {
        Matrix v(x.rows(), c.size());
        v.rowwise() = c.transpose();
        return v;
    }
    Matrix velocity_div(double t, const Matrix& x, Vector& div) const {
        div = Vector::Zero(x.rows());
        return velocity(t, x);
    }
};

/// u(t, x) = A x.
struct LinearField {
    Matrix a;
    Eigen::Index dimension() const { return a.rows(); }
    Matrix velocity(double, const Matrix& x) const { return x * a.transpose(); }
    Matrix velocity_div(double t, const Matrix& x, Vector& div) const {
        div = Vector::Constant(x.rows(), a.trace());
        return velocity(t, x);
    }
};

/// Lifts a guidance-free field into a GuidedField that ignores h.
template <ConditionalField F>
struct Unconditional {
    F field;
    F bind(const Vector&) const { return field; }
    Vector null_guidance() const { return Vector(); }
};

template <ConditionalField F>
Unconditional<F> unconditional(F f) {
    return Unconditional<F>{std::move(f)};
}

// ---------------------------------------------------------------------------
// Classifier-free guidance

/// (1 - w) u(x | h_null) + w u(x | h); a term with zero weight is never evaluated.
template <ConditionalField F>
class CfgField {
public:
    CfgField(std::optional<F> guided, std::optional<F> unguided, double w)
        : guided_(std::move(guided)), unguided_(std::move(unguided)), w_(w) {}

    Eigen::Index dimension() const { return guided_ ? guided_->dimension() : unguided_->dimension(); }
    double scale() const noexcept { return w_; }

    Matrix velocity(double t, const Matrix& x) const {
        if (!unguided_) return guided_->velocity(t, x);
        if (!guided_) return unguided_->velocity(t, x);
        return (1.0 - w_) * unguided_->velocity(t, x) + w_ * guided_->velocity(t, x);
    }

    Matrix velocity_div(double t, const Matrix& x, Vector& div) const {
        if (!unguided_) return guided_->velocity_div(t, x, div);
        if (!guided_) return unguided_->velocity_div(t, x, div);
        Vector dg, du;
        Matrix v = (1.0 - w_) * unguided_->velocity_div(t, x, du) + w_ * guided_->velocity_div(t, x, dg);
        div = (1.0 - w_) * du + w_ * dg;
        return v;
    }

private:
    std::optional<F> guided_;
    std::optional<F> unguided_;
    double w_;
};

template <GuidedField G>
auto cfg_field(const G& g, const Vector& h, double w) {
    using F = decltype(g.bind(h));
    std::optional<F> guided, unguided;
    if (w != 0.0) guided.emplace(g.bind(h));
    if (w != 1.0) unguided.emplace(g.bind(g.null_guidance()));
    return CfgField<F>(std::move(guided), std::move(unguided), w);
}

/// Single-point CFG velocity with an explicit null guidance.
template <GuidedField G>
Vector cfg_velocity(const G& g, double t, const Vector& x, const Vector& h, const Vector& h_null, double w) {
    const Matrix row = x.transpose();
    const Matrix guided = g.bind(h).velocity(t, row);
    const Matrix unguided = g.bind(h_null).velocity(t, row);
    return ((1.0 - w) * unguided + w * guided).row(0).transpose();
}

// ---------------------------------------------------------------------------
// MLP guided vector field

/// Softplus MLP on concat(x, h, t) -> velocity; `layers` linear maps of width `hidden`.
class GuidedVectorField {
public:
    GuidedVectorField(Eigen::Index d_y, Eigen::Index d_h, int layers, int hidden)
        : d_y_(d_y), d_h_(d_h), net_{"vf", {}} {
        if (d_y < 1 || d_h < 0) throw UsageError("vector field dimensions invalid");
        if (layers < 1 || hidden < 1) throw UsageError("vector field needs >= 1 layer and hidden width >= 1");
        net_.widths.push_back(d_y + d_h + 1);
        for (int l = 0; l + 1 < layers; ++l) net_.widths.push_back(hidden);
        net_.widths.push_back(d_y);
    }

    Eigen::Index d_y() const noexcept { return d_y_; }
    Eigen::Index d_h() const noexcept { return d_h_; }
    const diffmath::Mlp& net() const noexcept { return net_; }

    template <class Rng>
    void init(ParamStore& store, Rng& rng) const {
        net_.init(store, rng);
    }

    /// Tape recording for training: x (B x d_y), h (B x d_h), t (B x 1).
    diffmath::Var forward(diffmath::Tape& tape, const ParamStore& store, diffmath::Var x, diffmath::Var h,
                          diffmath::Var t) const {
        const std::array<diffmath::Var, 3> parts{x, h, t};
        return net_.forward(tape, store, diffmath::concat_cols(tape, parts));
    }

private:
    Eigen::Index d_y_;
    Eigen::Index d_h_;
    diffmath::Mlp net_;
};

/// The MLP field with guidance folded into the first-layer bias.
///
/// velocity_div propagates d tangent directions alongside the values
/// (forward mode), so the divergence is exact.
class BoundMlpField {
public:
    BoundMlpField(const GuidedVectorField& spec, const ParamStore& store, const Vector& h) : d_(spec.d_y()) {
        if (h.size() != spec.d_h()) throw ShapeMismatch("guidance dimension mismatch");
        const auto& net = spec.net();
        const Matrix& w0 = store.at(net.weight_name(0));
        w0x_ = w0.leftCols(d_);
        bias0_ = store.at(net.bias_name(0)).row(0) + (w0.middleCols(d_, spec.d_h()) * h).transpose();
        w0t_ = w0.col(d_ + spec.d_h()).transpose();
        for (std::size_t l = 1; l < net.layer_count(); ++l) {
            weights_.push_back(store.at(net.weight_name(l)));
            biases_.push_back(store.at(net.bias_name(l)).row(0));
        }
    }

    Eigen::Index dimension() const { return d_; }

    Matrix velocity(double t, const Matrix& x) const {
        Matrix a = (x * w0x_.transpose()).rowwise() + (bias0_ + t * w0t_);
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            softplus_inplace(a);
            Matrix z = (a * weights_[l].transpose()).rowwise() + biases_[l];
            a.swap(z);
        }
        return a;
    }

    Matrix velocity_div(double t, const Matrix& x, Vector& div) const {
        const Eigen::Index n = x.rows();
        const Eigen::Index hw = w0x_.rows();
        // stack = [values; tangent_1; ...; tangent_d], each block n rows
        Matrix stack((d_ + 1) * n, hw);
        stack.topRows(n) = (x * w0x_.transpose()).rowwise() + (bias0_ + t * w0t_);
        for (Eigen::Index j = 0; j < d_; ++j) stack.middleRows((j + 1) * n, n).rowwise() = w0x_.col(j).transpose();
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            activate_with_tangents(stack, n);
            Matrix z = stack * weights_[l].transpose();
            z.topRows(n).rowwise() += biases_[l];
            stack.swap(z);
        }
        div = Vector::Zero(n);
        for (Eigen::Index j = 0; j < d_; ++j) div += stack.block((j + 1) * n, j, n, 1);
        return stack.topRows(n);
    }

private:
    // softplus(z) = max(z, 0) + log(1 + exp(-|z|)); the plain log keeps the
    // kernel vectorized at an absolute error below 1e-16.
    static void softplus_inplace(Matrix& z) {
        auto za = z.array();
        za = za.max(0.0) + ((-za.abs()).exp() + 1.0).log();
    }

    // values <- softplus(values); tangents <- logistic(values) * tangents
    void activate_with_tangents(Matrix& stack, Eigen::Index n) const {
        auto z = stack.topRows(n).array();
        const Array l = ((-z.abs()).exp() + 1.0).log();
        const Array sig = (z.min(0.0) - l).exp();
        z = z.max(0.0) + l;
        for (Eigen::Index j = 0; j < d_; ++j) stack.middleRows((j + 1) * n, n).array() *= sig;
    }

    Eigen::Index d_;
    Matrix w0x_;
    RowVector bias0_;
    RowVector w0t_;
    std::vector<Matrix> weights_;
    std::vector<RowVector> biases_;
};

/// GuidedField view over trained parameters (vector field + null guidance).
class MlpGuidedField {
public:
    MlpGuidedField(const GuidedVectorField& spec, const ParamStore& store) : spec_(&spec), store_(&store) {}

    BoundMlpField bind(const Vector& h) const { return BoundMlpField(*spec_, *store_, h); }
    Vector null_guidance() const { return encoder::null_guidance(*store_); }
    const GuidedVectorField& spec() const { return *spec_; }
    const ParamStore& params() const { return *store_; }

private:
    const GuidedVectorField* spec_;
    const ParamStore* store_;
};

}  // namespace fcp::flow
