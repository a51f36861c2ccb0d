#pragma once

#include <istream>
#include <ostream>

#include <json.hpp>

#include "moserflow/flow.hpp"
#include "moserflow/num_io.hpp"

namespace moserflow {

// Self-describing checkpoint document. Weights travel as base64 of the
// little-endian float64 flat vector in pack_params order, so a save/load
// cycle reproduces the model bit for bit.
struct Checkpoint {
    FlowModel model;
    TrainConfig train_config;
    bool has_train_config = false;
    Vec train_loss, val_loss;
    std::uint64_t seed = 0;
    std::string config_digest;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
    const FlowModel& m = c.model;
    nlohmann::json j;
    j["schema_version"] = 1;
    j["kind"] = "moserflow-checkpoint";
    j["dim"] = m.dim;
    j["param_count"] = m.param_count();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.layers) {
        nlohmann::json lj;
        lj["mask"] = l.mask;
        lj["hidden"] = l.s_net.n_hidden;
        lj["convention"] = to_string(l.convention);
        lj["s_clamp"] = l.s_clamp;
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    if (m.prior.kind == PriorKind::standard_normal) {
        j["prior"] = {{"kind", "standard_normal"}};
    } else {
        j["prior"] = {{"kind", "uniform_box"},
                      {"lo_b64", doubles_to_base64(m.prior.box.lo)},
                      {"hi_b64", doubles_to_base64(m.prior.box.hi)}};
    }
    if (!m.whiten.identity()) {
        j["whitening"] = {{"mean_b64", doubles_to_base64(m.whiten.mean)},
                          {"scale_b64", doubles_to_base64(m.whiten.scale)}};
    }
    j["params_b64"] = doubles_to_base64(m.pack_params());
    if (c.has_train_config) {
        const TrainConfig& t = c.train_config;
        j["train_config"] = {{"batch_size", t.batch_size},
                             {"n_epochs", t.n_epochs},
                             {"learning_rate", t.learning_rate},
                             {"adam_beta1", t.adam_beta1},
                             {"adam_beta2", t.adam_beta2},
                             {"adam_eps", t.adam_eps},
                             {"seed", t.seed},
                             {"weight_init_scale", t.weight_init_scale},
                             {"validation_fraction", t.validation_fraction},
                             {"patience", t.patience}};
    }
    if (!c.train_loss.empty()) j["train_loss_b64"] = doubles_to_base64(c.train_loss);
    if (!c.val_loss.empty()) j["val_loss_b64"] = doubles_to_base64(c.val_loss);
    j["seed"] = c.seed;
    if (!c.config_digest.empty()) j["config_digest"] = c.config_digest;
    return j;
}

inline void save_checkpoint(std::ostream& os, const Checkpoint& c) {
    os << checkpoint_to_json(c).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("load_checkpoint: bad JSON: ") + e.what());
    }
    if (j.value("kind", "") != std::string("moserflow-checkpoint"))
        throw std::invalid_argument("load_checkpoint: not a checkpoint document");
    Checkpoint c;
    FlowModel& m = c.model;
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
        CouplingLayer l;
        l.mask = lj.at("mask").get<std::vector<std::uint8_t>>();
        l.convention = subnet_convention_from_string(lj.at("convention").get<std::string>());
        l.s_clamp = lj.at("s_clamp").get<double>();
        const std::size_t hidden = lj.at("hidden").get<std::size_t>();
        std::size_t d_a = 0;
        for (auto b : l.mask) d_a += b;
        const std::size_t n_in =
            l.convention == SubnetConvention::partition_input ? d_a : m.dim;
        const std::size_t n_out =
            l.convention == SubnetConvention::partition_input ? m.dim - d_a : m.dim;
        l.s_net.resize(n_in, hidden, n_out);
        l.t_net.resize(n_in, hidden, n_out);
        l.finalize();
        m.layers.push_back(std::move(l));
    }
    const auto& pj = j.at("prior");
    if (pj.at("kind") == "standard_normal") {
        m.prior.kind = PriorKind::standard_normal;
    } else {
        m.prior.kind = PriorKind::uniform_box;
        m.prior.box = Box(base64_to_doubles(pj.at("lo_b64").get<std::string>()),
                          base64_to_doubles(pj.at("hi_b64").get<std::string>()));
    }
    if (j.contains("whitening")) {
        m.whiten.mean = base64_to_doubles(j["whitening"].at("mean_b64").get<std::string>());
        m.whiten.scale = base64_to_doubles(j["whitening"].at("scale_b64").get<std::string>());
    }
    const Vec params = base64_to_doubles(j.at("params_b64").get<std::string>());
    m.unpack_params(params);
    if (j.contains("param_count") && j["param_count"].get<std::size_t>() != m.param_count())
        throw std::invalid_argument("load_checkpoint: param_count mismatch");
    if (j.contains("train_config")) {
        const auto& t = j["train_config"];
        c.has_train_config = true;
        c.train_config.batch_size = t.at("batch_size").get<std::size_t>();
        c.train_config.n_epochs = t.at("n_epochs").get<std::size_t>();
        c.train_config.learning_rate = t.at("learning_rate").get<double>();
        c.train_config.adam_beta1 = t.at("adam_beta1").get<double>();
        c.train_config.adam_beta2 = t.at("adam_beta2").get<double>();
        c.train_config.adam_eps = t.at("adam_eps").get<double>();
        c.train_config.seed = t.at("seed").get<std::uint64_t>();
        c.train_config.weight_init_scale = t.at("weight_init_scale").get<double>();
        c.train_config.validation_fraction = t.at("validation_fraction").get<double>();
        c.train_config.patience = t.at("patience").get<std::size_t>();
    }
    if (j.contains("train_loss_b64"))
        c.train_loss = base64_to_doubles(j["train_loss_b64"].get<std::string>());
    if (j.contains("val_loss_b64"))
        c.val_loss = base64_to_doubles(j["val_loss_b64"].get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
    c.config_digest = j.value("config_digest", "");
    m.validate();
    return c;
}

// Two-column loss table (epoch, nll), one line per epoch.
inline void write_loss_table(std::ostream& os, const Vec& train_loss, const Vec& val_loss) {
    os << "epoch\ttrain_nll";
    if (!val_loss.empty()) os << "\tval_nll";
    os << "\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e) {
        os << e << "\t" << format_double(train_loss[e]);
        if (e < val_loss.size()) os << "\t" << format_double(val_loss[e]);
        os << "\n";
    }
}

}  // namespace moserflow
