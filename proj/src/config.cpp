#include "prototsnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace prototsnet {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
}

}  // namespace

json to_json(const EncoderConfig& c) {
    return json{{"groups", c.groups},
                {"kernels", c.kernels},
                {"channels_per_group", c.channels_per_group},
                {"activation", activation_name(c.activation)},
                {"grouped", c.grouped}};
}

json to_json(const ModelConfig& c) {
    return json{{"reception", c.reception},
                {"proto_fraction", c.proto_fraction},
                {"protos_per_class", c.protos_per_class},
                {"epsilon", c.epsilon},
                {"init_own_class", c.init_own_class},
                {"init_other_class", c.init_other_class},
                {"seed", c.seed},
                {"encoder", to_json(c.encoder)}};
}

json to_json(const TrainConfig& c) {
    return json{{"pretrain_epochs", c.pretrain_epochs}, {"warm_epochs", c.warm_epochs},
                {"joint_epochs", c.joint_epochs},       {"last_epochs", c.last_epochs},
                {"cycles", c.cycles},                   {"lambda_clst", c.lambda_clst},
                {"lambda_sep", c.lambda_sep},           {"lambda_conv", c.lambda_conv},
                {"lambda_last", c.lambda_last},         {"pretrain_lr", c.pretrain_lr},
                {"warm_lr", c.warm_lr},                 {"base_lr", c.base_lr},
                {"last_lr", c.last_lr},                 {"lr_floor", c.lr_floor},
                {"lr_cycle_len", c.lr_cycle_len},       {"lr_decay", c.lr_decay},
                {"momentum", c.momentum},               {"batch_size", c.batch_size},
                {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
    json model = to_json(c.model);
    json encoder = model["encoder"];
    model.erase("encoder");
    return json{{"encoder", encoder}, {"model", model}, {"train", to_json(c.train)}, {"normalize", c.normalize}};
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig c;
    if (j.is_null()) return c;
    require_object(j, "encoder");
    reject_unknown(j, {"groups", "kernels", "channels_per_group", "activation", "grouped"}, "encoder");
    read(j, "groups", c.groups, "encoder");
    read(j, "kernels", c.kernels, "encoder");
    read(j, "channels_per_group", c.channels_per_group, "encoder");
    read(j, "grouped", c.grouped, "encoder");
    std::string act = activation_name(c.activation);
    read(j, "activation", act, "encoder");
    try {
        c.activation = activation_from_name(act);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ModelConfig model_config_from_json(const json& model, const json& encoder) {
    ModelConfig c;
    if (!model.is_null()) {
        require_object(model, "model");
        reject_unknown(model, {"reception", "proto_fraction", "protos_per_class", "epsilon", "init_own_class",
                               "init_other_class", "seed", "encoder"},
                       "model");
        read(model, "reception", c.reception, "model");
        read(model, "proto_fraction", c.proto_fraction, "model");
        read(model, "protos_per_class", c.protos_per_class, "model");
        read(model, "epsilon", c.epsilon, "model");
        read(model, "init_own_class", c.init_own_class, "model");
        read(model, "init_other_class", c.init_other_class, "model");
        read(model, "seed", c.seed, "model");
    }
    const json& enc = !encoder.is_null() ? encoder : (model.is_object() && model.contains("encoder") ? model["encoder"] : encoder);
    c.encoder = encoder_config_from_json(enc);
    return c;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    if (j.is_null()) return c;
    require_object(j, "train");
    reject_unknown(j, {"pretrain_epochs", "warm_epochs", "joint_epochs", "last_epochs", "cycles", "lambda_clst",
                       "lambda_sep", "lambda_conv", "lambda_last", "pretrain_lr", "warm_lr", "base_lr", "last_lr",
                       "lr_floor", "lr_cycle_len", "lr_decay", "momentum", "batch_size", "seed"},
                   "train");
    read(j, "pretrain_epochs", c.pretrain_epochs, "train");
    read(j, "warm_epochs", c.warm_epochs, "train");
    read(j, "joint_epochs", c.joint_epochs, "train");
    read(j, "last_epochs", c.last_epochs, "train");
    read(j, "cycles", c.cycles, "train");
    read(j, "lambda_clst", c.lambda_clst, "train");
    read(j, "lambda_sep", c.lambda_sep, "train");
    read(j, "lambda_conv", c.lambda_conv, "train");
    read(j, "lambda_last", c.lambda_last, "train");
    read(j, "pretrain_lr", c.pretrain_lr, "train");
    read(j, "warm_lr", c.warm_lr, "train");
    read(j, "base_lr", c.base_lr, "train");
    read(j, "last_lr", c.last_lr, "train");
    read(j, "lr_floor", c.lr_floor, "train");
    read(j, "lr_cycle_len", c.lr_cycle_len, "train");
    read(j, "lr_decay", c.lr_decay, "train");
    read(j, "momentum", c.momentum, "train");
    read(j, "batch_size", c.batch_size, "train");
    read(j, "seed", c.seed, "train");
    return c;
}

RunConfig run_config_from_json(const json& j) {
    require_object(j, "<root>");
    reject_unknown(j, {"encoder", "model", "train", "normalize"}, "<root>");
    RunConfig c;
    const json none;
    c.model = model_config_from_json(j.contains("model") ? j["model"] : none, j.contains("encoder") ? j["encoder"] : none);
    c.train = train_config_from_json(j.contains("train") ? j["train"] : none);
    read(j, "normalize", c.normalize, "<root>");
    try {
        c.model.validate();
        c.train.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace prototsnet
