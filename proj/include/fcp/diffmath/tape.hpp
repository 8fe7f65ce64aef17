#pragma once

#include <fcp/diffmath/matrix.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/errors.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fcp::diffmath {

/// ln(1 + e^x) without overflow; equals x + ln(1 + e^-x) for large x.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode recording of matrix-valued operations.
///
/// Every op pushes a node holding its value and a closure that scatters the
/// node's gradient into its inputs. Leaves are constants, inputs (whose
/// gradients can be read back) and named parameters. A tape supports exactly
/// one backward pass.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t)>;

    Var constant(Matrix value) { return push(std::move(value), nullptr); }

    /// Leaf whose gradient is retrievable through input_grad() after backward().
    Var input(Matrix value) { return push(std::move(value), nullptr); }

    /// Parameter leaf; repeated requests for the same name share one node.
    Var param(const ParamStore& store, const std::string& name) {
        if (auto it = params_.find(name); it != params_.end()) return Var{it->second};
        Var v = push(store.at(name), nullptr);
        params_.emplace(name, v.id);
        param_order_.push_back(name);
        return v;
    }

    Var record(Matrix value, Backward back) { return push(std::move(value), std::move(back)); }

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool consumed() const noexcept { return consumed_; }

    void set_output(Var v) { output_ = v; }
    Var output() const { return output_; }

    /// Gradient accumulator of node `id`; allocated on first use.
    Matrix& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }
    const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }

    /// Seeds d(out) with `upstream` and propagates to every leaf.
    void backward(Var out, const Matrix& upstream) {
        if (consumed_) throw TapeConsumed();
        const Matrix& v = value(out);
        if (upstream.rows() != v.rows() || upstream.cols() != v.cols())
            throw ShapeMismatch("upstream gradient shape does not match output");
        consumed_ = true;
        grad(out.id) += upstream;
        for (std::size_t i = out.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.back && n.grad.size() != 0) n.back(*this, i);
        }
    }

    /// Gradient of a leaf after backward(); zeros if the leaf did not influence the output.
    Matrix input_grad(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    /// Gradients of all parameter leaves, in first-use order.
    ParamStore param_grads() const {
        ParamStore out;
        for (const auto& name : param_order_) out.add(name, input_grad(Var{params_.at(name)}));
        return out;
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward back;
    };

    Var push(Matrix value, Backward back) {
        nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
        return Var{nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> params_;
    std::vector<std::string> param_order_;
    Var output_{};
    bool consumed_ = false;
};

/// Runs the single backward pass from the tape's output and returns parameter gradients.
inline ParamStore grad_params(Tape& tape, const Matrix& upstream) {
    tape.backward(tape.output(), upstream);
    return tape.param_grads();
}

inline ParamStore grad_params(Tape& tape, const Vector& upstream) {
    const Matrix& out = tape.value(tape.output());
    if (upstream.size() != out.size()) throw ShapeMismatch("upstream length does not match output width");
    Matrix up = Eigen::Map<const Matrix>(upstream.data(), out.rows(), out.cols());
    return grad_params(tape, up);
}

// ---------------------------------------------------------------------------
// Operations

namespace detail {
inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeMismatch(std::string(op) + ": shape mismatch");
}
}  // namespace detail

inline Var add(Tape& t, Var a, Var b) {
    detail::require_same_shape(t.value(a), t.value(b), "add");
    Matrix v = t.value(a) + t.value(b);
    return t.record(std::move(v), [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id) += g;
        tp.grad(b.id) += g;
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    detail::require_same_shape(t.value(a), t.value(b), "sub");
    Matrix v = t.value(a) - t.value(b);
    return t.record(std::move(v), [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id) += g;
        tp.grad(b.id) -= g;
    });
}

inline Var scale(Tape& t, Var a, double s) {
    Matrix v = s * t.value(a);
    return t.record(std::move(v), [a, s](Tape& tp, std::size_t self) { tp.grad(a.id) += s * tp.grad(self); });
}

inline Var hadamard(Tape& t, Var a, Var b) {
    detail::require_same_shape(t.value(a), t.value(b), "hadamard");
    Matrix v = t.value(a).cwiseProduct(t.value(b));
    return t.record(std::move(v), [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id) += g.cwiseProduct(tp.value_of(b.id));
        tp.grad(b.id) += g.cwiseProduct(tp.value_of(a.id));
    });
}

/// a * b
inline Var matmul(Tape& t, Var a, Var b) {
    if (t.value(a).cols() != t.value(b).rows()) throw ShapeMismatch("matmul: inner dimensions differ");
    Matrix v = t.value(a) * t.value(b);
    return t.record(std::move(v), [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id).noalias() += g * tp.value_of(b.id).transpose();
        tp.grad(b.id).noalias() += tp.value_of(a.id).transpose() * g;
    });
}

/// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
    if (t.value(a).cols() != t.value(b).cols()) throw ShapeMismatch("matmul_nt: inner dimensions differ");
    Matrix v = t.value(a) * t.value(b).transpose();
    return t.record(std::move(v), [a, b](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id).noalias() += g * tp.value_of(b.id);
        tp.grad(b.id).noalias() += g.transpose() * tp.value_of(a.id);
    });
}

/// Adds a 1 x cols row to every row of a.
inline Var add_row(Tape& t, Var a, Var row) {
    const Matrix& r = t.value(row);
    if (r.rows() != 1 || r.cols() != t.value(a).cols()) throw ShapeMismatch("add_row: row shape mismatch");
    Matrix v = t.value(a).rowwise() + r.row(0);
    return t.record(std::move(v), [a, row](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(a.id) += g;
        tp.grad(row.id) += g.colwise().sum();
    });
}

/// x W^T + b with W stored (out x in) and b a 1 x out row.
inline Var linear(Tape& t, Var x, Var weight, Var bias) { return add_row(t, matmul_nt(t, x, weight), bias); }

inline Var softplus(Tape& t, Var a) {
    const Matrix& x = t.value(a);
    Matrix v = x.unaryExpr([](double z) { return softplus(z); });
    return t.record(std::move(v), [a](Tape& tp, std::size_t self) {
        const Matrix s = tp.value_of(a.id).unaryExpr([](double z) { return logistic(z); });
        tp.grad(a.id) += tp.grad(self).cwiseProduct(s);
    });
}

namespace detail {
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;
inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }
inline double gelu_prime(double x) {
    const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}
}  // namespace detail

/// tanh-approximated GELU.
inline Var gelu(Tape& t, Var a) {
    const auto x = t.value(a).array();
    // tanh(u) = 1 - 2 / (exp(2u) + 1), vectorized
    Array th = 1.0 - 2.0 / ((2.0 * detail::kGeluC * (x + detail::kGeluA * x.cube())).exp() + 1.0);
    Matrix v = (0.5 * x * (1.0 + th)).matrix();
    return t.record(std::move(v), [a, th = std::move(th)](Tape& tp, std::size_t self) {
        const auto z = tp.value_of(a.id).array();
        const Array d =
            0.5 * (1.0 + th) + 0.5 * z * (1.0 - th.square()) * detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * z.square());
        tp.grad(a.id).array() += tp.grad(self).array() * d;
    });
}

/// Row-wise softmax.
inline Var softmax_rows(Tape& t, Var a) {
    const Matrix& x = t.value(a);
    const Eigen::VectorXd m = x.rowwise().maxCoeff();
    Matrix v = (x.colwise() - m).array().exp().matrix();
    const Eigen::VectorXd sums = v.rowwise().sum();
    v.array().colwise() /= sums.array();
    return t.record(std::move(v), [a](Tape& tp, std::size_t self) {
        const Matrix& y = tp.value_of(self);
        const Matrix& g = tp.grad(self);
        const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
        tp.grad(a.id) += y.cwiseProduct(g.colwise() - dots);
    });
}

/// Row-wise layer normalization with learned 1 x cols gain and bias.
inline Var layer_norm(Tape& t, Var a, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& x = t.value(a);
    const Eigen::Index n = x.cols();
    if (t.value(gain).cols() != n || t.value(bias).cols() != n) throw ShapeMismatch("layer_norm: gain/bias width");
    const Eigen::VectorXd mu = x.rowwise().mean();
    Matrix xhat = x.colwise() - mu;
    const Eigen::VectorXd inv_std =
        ((xhat.rowwise().squaredNorm() / static_cast<double>(n)).array() + eps).rsqrt().matrix();
    xhat.array().colwise() *= inv_std.array();
    Matrix v = (xhat.array().rowwise() * t.value(gain).row(0).array()).rowwise() + t.value(bias).row(0).array();
    return t.record(std::move(v), [a, gain, bias, xhat = std::move(xhat), inv_std](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.grad(gain.id) += g.cwiseProduct(xhat).colwise().sum();
        tp.grad(bias.id) += g.colwise().sum();
        const Matrix dxhat = g.array().rowwise() * tp.value_of(gain.id).row(0).array();
        const double n = static_cast<double>(xhat.cols());
        const Eigen::VectorXd m1 = dxhat.rowwise().sum() / n;
        const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / n;
        Matrix d = dxhat.colwise() - m1;
        d.array() -= xhat.array().colwise() * m2.array();
        d.array().colwise() *= inv_std.array();
        tp.grad(a.id) += d;
    });
}

inline Var block(Tape& t, Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) {
    const Matrix& x = t.value(a);
    if (r0 < 0 || c0 < 0 || r0 + nr > x.rows() || c0 + nc > x.cols()) throw ShapeMismatch("block out of range");
    Matrix v = x.block(r0, c0, nr, nc);
    return t.record(std::move(v), [a, r0, c0, nr, nc](Tape& tp, std::size_t self) {
        tp.grad(a.id).block(r0, c0, nr, nc) += tp.grad(self);
    });
}

inline Var concat_cols(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no parts");
    const Eigen::Index rows = t.value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
        if (t.value(p).rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
        cols += t.value(p).cols();
    }
    Matrix v(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
        v.middleCols(c, t.value(p).cols()) = t.value(p);
        c += t.value(p).cols();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return t.record(std::move(v), [ps](Tape& tp, std::size_t self) {
        Eigen::Index c = 0;
        for (Var p : ps) {
            const Eigen::Index w = tp.value_of(p.id).cols();
            const Matrix g = tp.grad(self).middleCols(c, w);
            tp.grad(p.id) += g;
            c += w;
        }
    });
}

inline Var concat_rows(Tape& t, std::span<const Var> parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: no parts");
    const Eigen::Index cols = t.value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
        if (t.value(p).cols() != cols) throw ShapeMismatch("concat_rows: column counts differ");
        rows += t.value(p).rows();
    }
    Matrix v(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        v.middleRows(r, t.value(p).rows()) = t.value(p);
        r += t.value(p).rows();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return t.record(std::move(v), [ps](Tape& tp, std::size_t self) {
        Eigen::Index r = 0;
        for (Var p : ps) {
            const Eigen::Index h = tp.value_of(p.id).rows();
            const Matrix g = tp.grad(self).middleRows(r, h);
            tp.grad(p.id) += g;
            r += h;
        }
    });
}

/// Mean over each consecutive block of `segment` rows: (k*segment) x c -> k x c.
inline Var segment_mean_rows(Tape& t, Var a, Eigen::Index segment) {
    const Matrix& x = t.value(a);
    if (segment <= 0 || x.rows() % segment != 0) throw ShapeMismatch("segment_mean_rows: bad segment length");
    const Eigen::Index k = x.rows() / segment;
    Matrix v(k, x.cols());
    for (Eigen::Index s = 0; s < k; ++s) v.row(s) = x.middleRows(s * segment, segment).colwise().mean();
    return t.record(std::move(v), [a, segment](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix& ga = tp.grad(a.id);
        const double inv = 1.0 / static_cast<double>(segment);
        for (Eigen::Index s = 0; s < g.rows(); ++s)
            ga.middleRows(s * segment, segment).rowwise() += inv * g.row(s);
    });
}

/// Sum of squared entries as a 1 x 1 node.
inline Var sum_squares(Tape& t, Var a) {
    Matrix v(1, 1);
    v(0, 0) = t.value(a).squaredNorm();
    return t.record(std::move(v), [a](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0);
        tp.grad(a.id) += (2.0 * g) * tp.value_of(a.id);
    });
}

}  // namespace fcp::diffmath
