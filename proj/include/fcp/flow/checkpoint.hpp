#pragma once

#include <fcp/diffmath/param_store.hpp>
#include <fcp/encoder/transformer.hpp>
#include <fcp/errors.hpp>
#include <fcp/flow/training.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace fcp::flow {

/// Everything needed to rebuild a trained model and its data plumbing.
struct Checkpoint {
    FlowConfig flow;
    encoder::EncoderConfig encoder;
    int d_x = 0;
    int d_y = 0;
    int window = 50;   // encoder context length
    int lags = 50;     // predictor lag count k
    int ensemble = 15;
    double predictor_prefix = 0.0;
    std::uint64_t seed = 0;
    int best_epoch = 0;
    ParamStore params;

    FlowModel model() const {
        FlowModel m(d_y, d_x + d_y, flow, encoder);
        m.params = params;
        return m;
    }
};

inline void to_json(nlohmann::json& j, const FlowConfig& c) {
    j = {{"gamma", c.gamma},   {"p_null", c.p_null}, {"w", c.w},         {"vf_layers", c.vf_layers},
         {"vf_hidden", c.vf_hidden}, {"lr", c.lr},   {"batch", c.batch}, {"max_epochs", c.max_epochs},
         {"clip_norm", c.clip_norm}};
}

inline void from_json(const nlohmann::json& j, FlowConfig& c) {
    c.gamma = j.value("gamma", c.gamma);
    c.p_null = j.value("p_null", c.p_null);
    c.w = j.value("w", c.w);
    c.vf_layers = j.value("vf_layers", c.vf_layers);
    c.vf_hidden = j.value("vf_hidden", c.vf_hidden);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
}

}  // namespace fcp::flow

namespace fcp::encoder {

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"layers", c.layers}, {"heads", c.heads}, {"model_dim", c.model_dim}, {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.dropout = j.value("dropout", c.dropout);
}

}  // namespace fcp::encoder

namespace fcp::flow {

inline constexpr char kCheckpointMagic[8] = {'F', 'C', 'P', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
    const nlohmann::json header = {{"flow", ck.flow},   {"encoder", ck.encoder}, {"d_x", ck.d_x},
                                   {"d_y", ck.d_y},     {"window", ck.window},   {"lags", ck.lags},
                                   {"ensemble", ck.ensemble}, {"predictor_prefix", ck.predictor_prefix},
                                   {"seed", ck.seed},   {"best_epoch", ck.best_epoch}};
    const std::string text = header.dump();
    const auto len = static_cast<std::uint64_t>(text.size());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    os.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    diffmath::save(os, ck.params);
    if (!os) throw Error("checkpoint write failed");
}

inline Checkpoint load_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw UsageError("not a checkpoint file");
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || version != kCheckpointVersion) throw UsageError("unsupported checkpoint version");
    if (len > (1u << 20)) throw UsageError("checkpoint header too large");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw UsageError("truncated checkpoint header");

    Checkpoint ck;
    try {
        const auto j = nlohmann::json::parse(text);
        ck.flow = j.at("flow").get<FlowConfig>();
        ck.encoder = j.at("encoder").get<encoder::EncoderConfig>();
        ck.d_x = j.at("d_x").get<int>();
        ck.d_y = j.at("d_y").get<int>();
        ck.window = j.at("window").get<int>();
        ck.lags = j.at("lags").get<int>();
        ck.ensemble = j.value("ensemble", ck.ensemble);
        ck.predictor_prefix = j.value("predictor_prefix", ck.predictor_prefix);
        ck.seed = j.at("seed").get<std::uint64_t>();
        ck.best_epoch = j.value("best_epoch", 0);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("corrupt checkpoint header: ") + e.what());
    }
    ck.flow.validate();
    ck.encoder.validate();
    if (ck.d_x < 0 || ck.d_y < 1 || ck.window < 1 || ck.lags < 1 || ck.ensemble < 1) throw UsageError("checkpoint dimensions invalid");
    ck.params = diffmath::load(is);

    // shape check against a freshly initialized model
    FlowModel probe(ck.d_y, ck.d_x + ck.d_y, ck.flow, ck.encoder);
    std::mt19937_64 rng(0);
    probe.init(rng);
    if (probe.params.size() != ck.params.size()) throw UsageError("checkpoint parameters do not match its config");
    for (const auto& [name, m] : probe.params) {
        if (!ck.params.contains(name)) throw UsageError("checkpoint missing parameter " + name);
        const Matrix& got = ck.params.at(name);
        if (got.rows() != m.rows() || got.cols() != m.cols())
            throw UsageError("checkpoint parameter " + name + " has wrong shape");
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open " + path + " for writing");
    save_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot open checkpoint " + path);
    return load_checkpoint(is);
}

}  // namespace fcp::flow
