#pragma once

#include <fcp/diffmath/nn.hpp>
#include <fcp/diffmath/param_store.hpp>
#include <fcp/diffmath/tape.hpp>
#include <fcp/encoder/transformer.hpp>
#include <fcp/errors.hpp>
#include <fcp/flow/field.hpp>
#include <fcp/flow/path.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace fcp::flow {

struct FlowConfig {
    double gamma = 1.0;
    double p_null = 0.05;
    double w = 1.1;
    int vf_layers = 4;
    int vf_hidden = 32;
    double lr = 1e-4;
    int batch = 8;
    int max_epochs = 50;
    double clip_norm = 10.0;

    void validate() const {
        if (!(gamma > 0.0)) throw UsageError("gamma must be positive");
        if (!(p_null >= 0.0 && p_null <= 1.0)) throw UsageError("p_null must lie in [0,1]");
        if (!std::isfinite(w)) throw UsageError("guidance scale must be finite");
        if (vf_layers < 1 || vf_hidden < 1) throw UsageError("vector field layers and hidden width must be >= 1");
        if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
        if (batch < 1) throw UsageError("batch must be >= 1");
        if (max_epochs < 0) throw UsageError("max_epochs must be >= 0");
        if (!(clip_norm > 0.0)) throw UsageError("clip_norm must be positive");
    }
};

/// One training example: the context window preceding index i and its residual.
struct TrainItem {
    Matrix tokens;  // window x (d_x + d_y)
    Vector eps_hat;
};

/// Vector field, encoder and the shared parameter store (vf.*, enc.*, guidance.null).
struct FlowModel {
    GuidedVectorField field;
    encoder::Encoder encoder;
    ParamStore params;

    FlowModel(Eigen::Index d_y, Eigen::Index token_dim, const FlowConfig& fc, const encoder::EncoderConfig& ec)
        : field(d_y, ec.model_dim, fc.vf_layers, fc.vf_hidden), encoder(ec, token_dim) {}

    template <class Rng>
    void init(Rng& rng) {
        params = ParamStore();
        field.init(params, rng);
        encoder.init(params, rng);
    }

    Eigen::Index d_y() const { return field.d_y(); }
    MlpGuidedField guided() const { return MlpGuidedField(field, params); }
};

/// Random quantities of one flow-matching draw; rows are batch items.
struct PathDraw {
    Matrix x0;          // B x d_y, N(0, gamma I)
    Matrix t;           // B x 1, U(0, 1)
    std::vector<bool> use_null;
};

template <class Rng>
PathDraw draw_path(Rng& rng, Eigen::Index batch, Eigen::Index d_y, const FlowConfig& cfg) {
    std::normal_distribution<double> normal(0.0, std::sqrt(cfg.gamma));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::bernoulli_distribution drop(cfg.p_null);
    PathDraw d{Matrix(batch, d_y), Matrix(batch, 1), std::vector<bool>(static_cast<std::size_t>(batch))};
    for (Eigen::Index b = 0; b < batch; ++b) {
        d.use_null[static_cast<std::size_t>(b)] = drop(rng);
        for (Eigen::Index j = 0; j < d_y; ++j) d.x0(b, j) = normal(rng);
        d.t(b, 0) = unif(rng);
    }
    return d;
}

/// Records the batch-mean flow-matching loss (1/B) sum_b ||u(t_b, x_t | h_b) - (eps_b - x0_b)||^2.
/// Dropout in the encoder is active iff `dropout_rng` is non-null.
inline diffmath::Var record_flow_matching_loss(diffmath::Tape& tape, const FlowModel& model,
                                               std::span<const TrainItem* const> items, const PathDraw& draw,
                                               std::mt19937_64* dropout_rng) {
    using namespace diffmath;
    const auto batch = static_cast<Eigen::Index>(items.size());
    if (batch == 0) throw EmptyInput("flow-matching batch is empty");
    const Eigen::Index d_y = model.d_y();
    const Eigen::Index len = items.front()->tokens.rows();

    Matrix stacked(batch * len, items.front()->tokens.cols());
    Matrix eps(batch, d_y);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const TrainItem& it = *items[static_cast<std::size_t>(b)];
        if (it.tokens.rows() != len || it.tokens.cols() != stacked.cols())
            throw ShapeMismatch("training windows must share one shape");
        if (it.eps_hat.size() != d_y) throw ShapeMismatch("residual dimension mismatch");
        stacked.middleRows(b * len, len) = it.tokens;
        eps.row(b) = it.eps_hat.transpose();
    }

    Var h = model.encoder.forward(tape, model.params, stacked, len, dropout_rng);
    const bool any_null = std::any_of(draw.use_null.begin(), draw.use_null.end(), [](bool v) { return v; });
    if (any_null) {
        Matrix keep(batch, 1), drop(batch, 1);
        for (Eigen::Index b = 0; b < batch; ++b) {
            const bool n = draw.use_null[static_cast<std::size_t>(b)];
            keep(b, 0) = n ? 0.0 : 1.0;
            drop(b, 0) = n ? 1.0 : 0.0;
        }
        const Eigen::Index dh = tape.value(h).cols();
        Var kept = hadamard(tape, h, tape.constant(keep * RowVector::Ones(dh)));
        Var nulls = matmul(tape, tape.constant(drop), tape.param(model.params, encoder::kNullGuidanceName));
        h = add(tape, kept, nulls);
    }

    const Matrix xt = draw.t.asDiagonal() * eps + (1.0 - draw.t.array()).matrix().asDiagonal() * draw.x0;
    const Matrix target = eps - draw.x0;
    Var v = model.field.forward(tape, model.params, tape.constant(xt), h, tape.constant(draw.t));
    Var r = sub(tape, v, tape.constant(target));
    Var loss = scale(tape, sum_squares(tape, r), 1.0 / static_cast<double>(batch));
    tape.set_output(loss);
    return loss;
}

/// Optimizer state carried across train_step calls.
struct Trainer {
    diffmath::AdamState adam;
    std::mt19937_64 rng;

    Trainer(const FlowModel& model, std::uint64_t seed) : adam(diffmath::AdamState::for_params(model.params)), rng(seed) {}
};

/// One Adam update of field, encoder and null guidance on the batch; returns the pre-update loss.
inline double train_step(Trainer& tr, FlowModel& model, std::span<const TrainItem* const> items,
                         const FlowConfig& cfg) {
    if (items.empty()) throw EmptyInput("flow-matching batch is empty");
    const PathDraw draw = draw_path(tr.rng, static_cast<Eigen::Index>(items.size()), model.d_y(), cfg);
    diffmath::Tape tape;
    diffmath::Var loss = record_flow_matching_loss(tape, model, items, draw, &tr.rng);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value)) throw NonFiniteState(0.0);
    ParamStore grads = diffmath::grad_params(tape, Matrix(Matrix::Ones(1, 1)));
    diffmath::clip_global_norm(grads, cfg.clip_norm);
    diffmath::adam_step(model.params, grads, tr.adam, cfg.lr);
    return value;
}

/// Mean flow-matching loss over `items` in evaluation mode with draws fixed by `seed`.
inline double evaluation_loss(const FlowModel& model, std::span<const TrainItem> items, const FlowConfig& cfg,
                              std::uint64_t seed) {
    if (items.empty()) throw EmptyInput("evaluation set is empty");
    std::mt19937_64 rng(seed);
    double total = 0.0;
    const auto bs = static_cast<std::size_t>(cfg.batch);
    std::vector<const TrainItem*> ptrs;
    for (std::size_t s = 0; s < items.size(); s += bs) {
        const std::size_t e = std::min(items.size(), s + bs);
        ptrs.clear();
        for (std::size_t i = s; i < e; ++i) ptrs.push_back(&items[i]);
        const PathDraw draw = draw_path(rng, static_cast<Eigen::Index>(ptrs.size()), model.d_y(), cfg);
        diffmath::Tape tape;
        diffmath::Var loss = record_flow_matching_loss(tape, model, ptrs, draw, nullptr);
        total += tape.value(loss)(0, 0) * static_cast<double>(ptrs.size());
    }
    return total / static_cast<double>(items.size());
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ParamStore best;
    int best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<EpochRecord> log;
};

/// Joint encoder and field training with model selection on validation loss.
///
/// Epoch 0 records the initialization; with max_epochs = 0 it is the result.
/// `patience` > 0 stops after that many epochs without improvement.
inline TrainResult train_flow(FlowModel& model, std::span<const TrainItem> train, std::span<const TrainItem> val,
                              const FlowConfig& cfg, std::uint64_t seed, int patience = 0,
                              const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train.empty()) throw EmptyInput("training set is empty");
    const std::span<const TrainItem> sel = val.empty() ? train : val;
    const std::uint64_t val_seed = seed ^ 0x9e3779b97f4a7c15ULL;

    TrainResult res;
    auto record = [&](int epoch, double train_loss) {
        const double v = evaluation_loss(model, sel, cfg, val_seed);
        EpochRecord rec{epoch, train_loss, v};
        res.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (v < res.best_val) {
            res.best_val = v;
            res.best_epoch = epoch;
            res.best = model.params;
        }
    };
    record(0, std::numeric_limits<double>::quiet_NaN());

    Trainer tr(model, seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const TrainItem*> batch;
    const auto bs = static_cast<std::size_t>(cfg.batch);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), tr.rng);
        double sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t s = 0; s < order.size(); s += bs) {
            batch.clear();
            for (std::size_t i = s; i < std::min(order.size(), s + bs); ++i) batch.push_back(&train[order[i]]);
            sum += train_step(tr, model, batch, cfg);
            ++steps;
        }
        record(epoch, sum / static_cast<double>(steps));
        if (patience > 0 && epoch - res.best_epoch >= patience) break;
    }
    model.params = res.best;
    return res;
}

}  // namespace fcp::flow
