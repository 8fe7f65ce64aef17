#pragma once

#include <fcp/encoder/transformer.hpp>
#include <fcp/errors.hpp>
#include <fcp/flow/training.hpp>
#include <fcp/ode/dopri5.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

namespace fcp::cli {

/// Every setting of a run. JSON config keys use the same names as the fields
/// (flow, encoder and ODE settings are flattened to top level).
struct RunConfig {
    std::string dataset;
    std::string out = ".";
    std::string checkpoint;
    int d_x = -1;  // -1: from the CSV header
    int d_y = -1;
    double alpha = 0.05;
    int lags = 50;    // predictor window k
    int window = 50;  // encoder context length
    int ensemble = 15;
    double predictor_prefix = 0.0;  // fraction of the series used to fit the predictor; 0 = all
    flow::FlowConfig flow;
    encoder::EncoderConfig encoder;
    ode::OdeConfig ode;
    std::optional<double> w_override;  // guidance scale at evaluation; default: the checkpoint's
    std::size_t n = 0;                 // set-size sample count; 0 = default for d_y
    bool auto_n = false;
    double n_gate = 0.01;
    int patience = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> index;  // region: dataset index inside the test split
    std::size_t boundary_points = 360;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
        if (lags < 1 || window < 1) throw UsageError("lags and window must be >= 1");
        if (ensemble < 1) throw UsageError("ensemble must be >= 1");
        if (!(predictor_prefix >= 0.0 && predictor_prefix <= 1.0)) throw UsageError("predictor_prefix must lie in [0,1]");
        if (patience < 0) throw UsageError("patience must be >= 0");
        if (!(n_gate > 0.0)) throw UsageError("n_gate must be positive");
        if (boundary_points < 1) throw UsageError("boundary_points must be >= 1");
        flow.validate();
        encoder.validate();
        ode.validate();
    }
};

/// Sample count used for set sizes when none is given: 4096, 8192, 16384 for d_y = 2, 4, 8.
inline std::size_t default_sample_count(int d_y) {
    if (d_y <= 2) return 4096;
    if (d_y <= 4) return 8192;
    return 16384;
}

inline void apply_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    static const char* known[] = {"dataset", "out", "checkpoint", "d_x", "d_y", "alpha", "lags", "window",
                                  "ensemble", "predictor_prefix", "gamma", "p_null", "w", "vf_layers",
                                  "vf_hidden", "lr", "batch", "max_epochs", "clip_norm", "layers", "heads",
                                  "model_dim", "dropout", "abs_tol", "rel_tol", "max_steps", "initial_step",
                                  "N", "auto_n", "n_gate", "patience", "seed", "index", "K"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw UsageError("unknown config key: " + key);
    }
    try {
        c.dataset = j.value("dataset", c.dataset);
        c.out = j.value("out", c.out);
        c.checkpoint = j.value("checkpoint", c.checkpoint);
        c.d_x = j.value("d_x", c.d_x);
        c.d_y = j.value("d_y", c.d_y);
        c.alpha = j.value("alpha", c.alpha);
        c.lags = j.value("lags", c.lags);
        c.window = j.value("window", c.window);
        c.ensemble = j.value("ensemble", c.ensemble);
        c.predictor_prefix = j.value("predictor_prefix", c.predictor_prefix);
        c.flow.gamma = j.value("gamma", c.flow.gamma);
        c.flow.p_null = j.value("p_null", c.flow.p_null);
        if (j.contains("w")) {
            c.flow.w = j.at("w").get<double>();
            c.w_override = c.flow.w;
        }
        c.flow.vf_layers = j.value("vf_layers", c.flow.vf_layers);
        c.flow.vf_hidden = j.value("vf_hidden", c.flow.vf_hidden);
        c.flow.lr = j.value("lr", c.flow.lr);
        c.flow.batch = j.value("batch", c.flow.batch);
        c.flow.max_epochs = j.value("max_epochs", c.flow.max_epochs);
        c.flow.clip_norm = j.value("clip_norm", c.flow.clip_norm);
        c.encoder.layers = j.value("layers", c.encoder.layers);
        c.encoder.heads = j.value("heads", c.encoder.heads);
        c.encoder.model_dim = j.value("model_dim", c.encoder.model_dim);
        c.encoder.dropout = j.value("dropout", c.encoder.dropout);
        c.ode.abs_tol = j.value("abs_tol", c.ode.abs_tol);
        c.ode.rel_tol = j.value("rel_tol", c.ode.rel_tol);
        c.ode.max_steps = j.value("max_steps", c.ode.max_steps);
        c.ode.initial_step = j.value("initial_step", c.ode.initial_step);
        c.n = j.value("N", c.n);
        c.auto_n = j.value("auto_n", c.auto_n);
        c.n_gate = j.value("n_gate", c.n_gate);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
        if (j.contains("index")) c.index = j.at("index").get<std::size_t>();
        c.boundary_points = j.value("K", c.boundary_points);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what());
    }
}

inline void load_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    apply_json(c, j);
}

}  // namespace fcp::cli
