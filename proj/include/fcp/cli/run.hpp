#pragma once

#include <fcp/cli/config.hpp>
#include <fcp/conformal/chi.hpp>
#include <fcp/conformal/prediction_set.hpp>
#include <fcp/data/context.hpp>
#include <fcp/data/dataset.hpp>
#include <fcp/data/splits.hpp>
#include <fcp/data/synth.hpp>
#include <fcp/errors.hpp>
#include <fcp/eval/metrics.hpp>
#include <fcp/flow/checkpoint.hpp>
#include <fcp/flow/training.hpp>
#include <fcp/predictor/linear_ensemble.hpp>
#include <fcp/qmc/sample_size.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>
#include <vector>

namespace fcp::cli {

/// A dataset with splits, standardized features, base predictions and residuals.
struct Experiment {
    data::SeriesDataset ds;
    data::SplitPlan splits;
    data::Standardizer standardizer;
    Matrix features;  // standardized x
    Matrix y_hat;     // rows before `first` are zero
    Matrix eps;       // y - y_hat
    std::size_t first = 0;
    std::size_t window = 50;

    Matrix context(std::size_t i) const { return data::context_window(features, eps, first, i, window); }

    /// Indices of `range` that have a residual.
    std::vector<std::size_t> indices(data::IndexRange range) const {
        std::vector<std::size_t> out;
        for (std::size_t i = std::max(range.begin, first); i < range.end; ++i) out.push_back(i);
        return out;
    }

    std::vector<flow::TrainItem> items(data::IndexRange range) const {
        std::vector<flow::TrainItem> out;
        for (std::size_t i : indices(range))
            out.push_back({context(i), eps.row(static_cast<Eigen::Index>(i)).transpose()});
        return out;
    }
};

/// Settings that fix the base predictor and the context layout.
struct PipelineSpec {
    int lags = 50;
    int window = 50;
    int ensemble = 15;
    double predictor_prefix = 0.0;
    std::uint64_t seed = 0;
};

/// Standardizes features on the training split and produces y_hat: the
/// dataset's own prediction columns when present, otherwise out-of-bag
/// predictions of the bootstrap linear ensemble on k lagged feature vectors.
inline Experiment prepare_experiment(data::SeriesDataset ds, const PipelineSpec& spec) {
    ds.validate();
    Experiment e;
    const auto t = static_cast<std::size_t>(ds.length());
    e.splits = data::make_splits(t);
    e.window = static_cast<std::size_t>(spec.window);
    e.standardizer = data::fit_standardizer(ds.x, e.splits.train);
    e.features = e.standardizer.apply(ds.x);
    e.y_hat = Matrix::Zero(ds.length(), ds.d_y());

    if (ds.y_hat) {
        e.first = 0;
        e.y_hat = *ds.y_hat;
    } else {
        const auto k = static_cast<std::size_t>(spec.lags);
        if (k >= e.splits.train.end) throw TooShort("predictor lags exceed the training split");
        std::size_t fit_end = t;
        if (spec.predictor_prefix > 0.0)
            fit_end = std::clamp(static_cast<std::size_t>(std::floor(spec.predictor_prefix * static_cast<double>(t))),
                                 k + 2, t);
        const auto rows = static_cast<Eigen::Index>(fit_end - k);
        Matrix xs(rows, static_cast<Eigen::Index>(k) * ds.d_x());
        Matrix ys(rows, ds.d_y());
        for (std::size_t i = k; i < fit_end; ++i) {
            const auto r = static_cast<Eigen::Index>(i - k);
            xs.row(r) = data::lag_features(e.features, i, k).transpose();
            ys.row(r) = ds.y.row(static_cast<Eigen::Index>(i));
        }
        std::mt19937_64 rng(spec.seed ^ 0x5bd1e995ULL);
        const predictor::Ensemble ens = predictor::fit_loo_bootstrap(rng, xs, ys, spec.ensemble);
        for (std::size_t i = k; i < t; ++i) {
            const std::optional<std::size_t> at = i < fit_end ? std::optional<std::size_t>(i - k) : std::nullopt;
            e.y_hat.row(static_cast<Eigen::Index>(i)) =
                predictor::predict(ens, data::lag_features(e.features, i, k), at).transpose();
        }
        e.first = k;
    }
    e.eps = ds.y - e.y_hat;
    e.eps.topRows(static_cast<Eigen::Index>(e.first)).setZero();
    e.ds = std::move(ds);
    return e;
}

inline data::SeriesDataset load_dataset(const RunConfig& c) {
    if (c.dataset.empty()) throw UsageError("no dataset given (--dataset)");
    if (!std::filesystem::exists(c.dataset)) throw UsageError("dataset not found: " + c.dataset);
    if (c.d_x >= 0 && c.d_y >= 1) return data::load_csv(c.dataset, c.d_x, c.d_y);
    data::SeriesDataset ds = data::load_csv(c.dataset);
    if ((c.d_x >= 0 && ds.d_x() != c.d_x) || (c.d_y >= 1 && ds.d_y() != c.d_y))
        throw ShapeMismatch("dataset columns do not match d_x/d_y");
    return ds;
}

inline std::string out_path(const RunConfig& c, const std::string& name) {
    std::filesystem::create_directories(c.out);
    return (std::filesystem::path(c.out) / name).string();
}

inline std::string checkpoint_path(const RunConfig& c) {
    return c.checkpoint.empty() ? (std::filesystem::path(c.out) / "checkpoint.bin").string() : c.checkpoint;
}

/// Guidance rows for `indices`, encoded in evaluation mode.
inline Matrix encode_indices(const flow::FlowModel& model, const Experiment& e, const std::vector<std::size_t>& indices) {
    const auto d = model.encoder.output_dim();
    Matrix h(static_cast<Eigen::Index>(indices.size()), d);
    constexpr std::size_t chunk = 32;
    const auto len = static_cast<Eigen::Index>(e.window);
    for (std::size_t s = 0; s < indices.size(); s += chunk) {
        const std::size_t n = std::min(chunk, indices.size() - s);
        Matrix stacked(static_cast<Eigen::Index>(n) * len, model.encoder.token_dim());
        for (std::size_t j = 0; j < n; ++j)
            stacked.middleRows(static_cast<Eigen::Index>(j) * len, len) = e.context(indices[s + j]);
        h.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) =
            model.encoder.encode_many(model.params, stacked, len);
    }
    return h;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    data::SynthSpec spec;
    std::uint64_t seed = 0;
    std::string out = "synth.csv";
};

inline data::SeriesDataset cmd_synth(const SynthArgs& a) {
    data::SeriesDataset ds = data::synth_var(a.seed, a.spec);
    const auto parent = std::filesystem::path(a.out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    data::save_csv(a.out, ds);
    return ds;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
    flow::Checkpoint checkpoint;
    flow::TrainResult result;
};

inline TrainOutcome cmd_train(const RunConfig& c, std::ostream* progress = nullptr) {
    c.validate();
    Experiment e = prepare_experiment(load_dataset(c), {c.lags, c.window, c.ensemble, c.predictor_prefix, c.seed});
    const auto train = e.items(e.splits.train);
    const auto val = e.items(e.splits.validation);
    if (train.empty()) throw TooShort("no training indices after the predictor burn-in");

    flow::FlowModel model(e.ds.d_y(), e.ds.d_x() + e.ds.d_y(), c.flow, c.encoder);
    std::mt19937_64 init_rng(c.seed);
    model.init(init_rng);

    std::ofstream log(out_path(c, "train_log.csv"));
    log << "epoch,train_loss,val_loss\n" << std::setprecision(17);
    TrainOutcome o;
    o.result = flow::train_flow(model, train, val, c.flow, c.seed + 1, c.patience, [&](const flow::EpochRecord& r) {
        log << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
        log.flush();
        if (progress) *progress << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << '\n';
    });

    flow::Checkpoint& ck = o.checkpoint;
    ck.flow = c.flow;
    ck.encoder = c.encoder;
    ck.d_x = static_cast<int>(e.ds.d_x());
    ck.d_y = static_cast<int>(e.ds.d_y());
    ck.window = c.window;
    ck.lags = c.lags;
    ck.ensemble = c.ensemble;
    ck.predictor_prefix = c.predictor_prefix;
    ck.seed = c.seed;
    ck.best_epoch = o.result.best_epoch;
    ck.params = model.params;
    flow::save_checkpoint(out_path(c, "checkpoint.bin"), ck);
    return o;
}

// ---------------------------------------------------------------------------
// eval

struct IndexResult {
    std::size_t index = 0;
    double score = 0.0;
    bool covered = false;
    double size = 0.0;
    double relative_se = 0.0;
};

struct EvalOutcome {
    eval::EvalReport report;
    std::vector<IndexResult> rows;
    conformal::Radius radius;
    double w = 1.0;
    std::size_t n = 0;
    double baseline_radius = 0.0;
    double baseline_size = 0.0;
    double baseline_coverage = 0.0;
    nlohmann::json json;
};

/// Split-conformal radius of a fixed ball: the ceil((n+1)(1-alpha))-th smallest norm.
inline double conformal_ball_radius(std::vector<double> norms, double alpha) {
    if (norms.empty()) throw EmptyInput("no calibration residuals");
    std::sort(norms.begin(), norms.end());
    const auto n = static_cast<double>(norms.size());
    const auto rank = static_cast<std::size_t>(std::ceil((n + 1.0) * (1.0 - alpha)));
    if (rank > norms.size()) return std::numeric_limits<double>::infinity();
    return norms[rank - 1];
}

inline EvalOutcome cmd_eval(const RunConfig& c, std::ostream* progress = nullptr) {
    c.validate();
    const flow::Checkpoint ck = flow::load_checkpoint(checkpoint_path(c));
    data::SeriesDataset ds = load_dataset(c);
    if (ds.d_x() != ck.d_x || ds.d_y() != ck.d_y) throw ShapeMismatch("dataset does not match checkpoint dimensions");
    const Experiment e =
        prepare_experiment(std::move(ds), {ck.lags, ck.window, ck.ensemble, ck.predictor_prefix, ck.seed});
    const flow::FlowModel model = ck.model();
    const flow::MlpGuidedField field = model.guided();

    EvalOutcome o;
    o.w = c.w_override.value_or(ck.flow.w);
    o.radius = conformal::make_radius(c.alpha, ck.d_y, ck.flow.gamma);
    const conformal::FlowQuery query{o.w, c.ode};

    const std::vector<std::size_t> test = e.indices(e.splits.test);
    if (test.empty()) throw TooShort("empty test split");
    const Matrix h = encode_indices(model, e, test);

    o.n = c.n != 0 ? c.n : default_sample_count(ck.d_y);
    if (c.auto_n) {
        // one global N: mean relative SE over up to 8 evenly spaced test guidances
        const std::size_t probes = std::min<std::size_t>(8, test.size());
        o.n = qmc::select_sample_size_by(
            [&](std::size_t n) {
                double sum = 0.0;
                for (std::size_t p = 0; p < probes; ++p) {
                    const auto row = static_cast<Eigen::Index>(p * test.size() / probes);
                    const Vector dets = conformal::ball_determinants(field, Vector(h.row(row).transpose()),
                                                                     o.radius.value, n, query);
                    sum += qmc::relative_se(std::span<const double>(dets.data(), static_cast<std::size_t>(dets.size())));
                }
                return sum / static_cast<double>(probes);
            },
            256, c.n_gate, std::size_t{1} << 20);
    }

    std::vector<bool> covered;
    std::vector<double> sizes;
    for (std::size_t j = 0; j < test.size(); ++j) {
        const std::size_t i = test[j];
        const auto r = static_cast<Eigen::Index>(i);
        const Vector hj = h.row(static_cast<Eigen::Index>(j)).transpose();
        IndexResult row;
        row.index = i;
        row.score = conformal::score(field, Vector(e.ds.y.row(r).transpose()), Vector(e.y_hat.row(r).transpose()),
                                     hj, query);
        row.covered = row.score <= o.radius.value;
        const conformal::SetSize sz = conformal::set_size(field, hj, o.radius, o.n, query);
        row.size = sz.size;
        row.relative_se = sz.relative_se;
        covered.push_back(row.covered);
        sizes.push_back(row.size);
        o.rows.push_back(row);
        if (progress && (j + 1) % 50 == 0) *progress << "evaluated " << j + 1 << "/" << test.size() << '\n';
    }
    o.report = eval::summarize(covered, sizes);

    // fixed ball calibrated on validation residual norms
    std::vector<double> norms;
    for (std::size_t i : e.indices(e.splits.validation)) norms.push_back(e.eps.row(static_cast<Eigen::Index>(i)).norm());
    o.baseline_radius = conformal_ball_radius(norms, c.alpha);
    o.baseline_size = conformal::ball_volume(ck.d_y, o.baseline_radius);
    std::size_t hits = 0;
    for (std::size_t i : test) hits += e.eps.row(static_cast<Eigen::Index>(i)).norm() <= o.baseline_radius ? 1 : 0;
    o.baseline_coverage = static_cast<double>(hits) / static_cast<double>(test.size());

    o.json = eval::to_json(o.report);
    o.json["alpha"] = c.alpha;
    o.json["radius"] = o.radius.value;
    o.json["gamma"] = ck.flow.gamma;
    o.json["w"] = o.w;
    o.json["N"] = o.n;
    o.json["auto_n"] = c.auto_n;
    o.json["best_epoch"] = ck.best_epoch;
    o.json["test_begin"] = test.front();
    o.json["test_end"] = test.back() + 1;
    o.json["baseline"] = {{"radius", o.baseline_radius}, {"size", o.baseline_size}, {"coverage", o.baseline_coverage}};

    std::ofstream rep(out_path(c, "report.json"));
    rep << o.json.dump(2) << '\n';
    std::ofstream per(out_path(c, "per_index.csv"));
    per << "index,score,radius,covered,size\n" << std::setprecision(17);
    for (const auto& row : o.rows)
        per << row.index << ',' << row.score << ',' << o.radius.value << ',' << (row.covered ? 1 : 0) << ','
            << row.size << '\n';
    if (!rep || !per) throw Error("failed to write evaluation outputs");
    return o;
}

// ---------------------------------------------------------------------------
// region

inline Matrix cmd_region(const RunConfig& c) {
    c.validate();
    const flow::Checkpoint ck = flow::load_checkpoint(checkpoint_path(c));
    if (ck.d_y != 2) throw NotTwoDimensional();
    data::SeriesDataset ds = load_dataset(c);
    if (ds.d_x() != ck.d_x || ds.d_y() != ck.d_y) throw ShapeMismatch("dataset does not match checkpoint dimensions");
    const Experiment e =
        prepare_experiment(std::move(ds), {ck.lags, ck.window, ck.ensemble, ck.predictor_prefix, ck.seed});
    const std::vector<std::size_t> test = e.indices(e.splits.test);
    const std::size_t i = c.index.value_or(test.front());
    if (std::find(test.begin(), test.end(), i) == test.end())
        throw UsageError("index " + std::to_string(i) + " outside the test range [" + std::to_string(test.front()) +
                         ", " + std::to_string(test.back() + 1) + ")");
    const flow::FlowModel model = ck.model();
    const Matrix h = encode_indices(model, e, {i});
    const conformal::FlowQuery query{c.w_override.value_or(ck.flow.w), c.ode};
    const conformal::Radius radius = conformal::make_radius(c.alpha, 2, ck.flow.gamma);
    const Matrix boundary = conformal::region_boundary_2d(model.guided(), Vector(h.row(0).transpose()),
                                                          Vector(e.y_hat.row(static_cast<Eigen::Index>(i)).transpose()),
                                                          radius, c.boundary_points, query);
    std::ofstream os(out_path(c, "region_" + std::to_string(i) + ".csv"));
    conformal::write_boundary_csv(os, boundary);
    if (!os) throw Error("failed to write region boundary");
    return boundary;
}

}  // namespace fcp::cli
