#include "csasr/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace csasr::cfg {

using nlohmann::json;

const char* kOutRootEnvVar = "CSASR_OUT_ROOT";

namespace {

void expect_keys(const json& j, const std::string& section, const std::set<std::string>& known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) {
            throw ConfigError("unknown field '" + key + "' in config section '" + section + "'");
        }
    }
}

template <typename T>
void read_field(const json& j, const char* name, T& out) {
    if (!j.contains(name)) return;
    try {
        out = j.at(name).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + name + "' has the wrong type");
    }
}

void apply_preset(RunConfig& cfg) {
    if (cfg.preset == "desk") {
        cfg.train.batch_size = 16;
        cfg.train.epochs = 12;
        cfg.train.learning_rate = 2e-3;
    } else if (cfg.preset == "paper") {
        // §-faithful schedule: bare SGD, 3e-4, 40 epochs, batch 64
        cfg.train.batch_size = 64;
        cfg.train.epochs = 40;
        cfg.train.learning_rate = 3e-4;
    } else {
        throw ConfigError("unknown preset '" + cfg.preset + "' (expected desk or paper)");
    }
    cfg.suite.base = cfg.train;
}

void parse_synth(const json& j, RunConfig& cfg) {
    expect_keys(j, "synth",
                {"seed", "n_train_per_task", "n_dev_per_task", "n_test_per_task", "feature_dim",
                 "l1_symbols", "l2_symbols", "min_tokens", "max_tokens", "min_frames_per_token",
                 "max_frames_per_token", "switch_probability", "noise_sigma"});
    if (j.contains("seed")) {
        cfg.synth.seed = j.at("seed").get<std::uint64_t>();
        cfg.synth_seed_provided = true;
    }
    read_field(j, "n_train_per_task", cfg.synth.n_train_per_task);
    read_field(j, "n_dev_per_task", cfg.synth.n_dev_per_task);
    read_field(j, "n_test_per_task", cfg.synth.n_test_per_task);
    read_field(j, "feature_dim", cfg.synth.feature_dim);
    read_field(j, "l1_symbols", cfg.synth.l1_symbols);
    read_field(j, "l2_symbols", cfg.synth.l2_symbols);
    read_field(j, "min_tokens", cfg.synth.min_tokens);
    read_field(j, "max_tokens", cfg.synth.max_tokens);
    read_field(j, "min_frames_per_token", cfg.synth.min_frames_per_token);
    read_field(j, "max_frames_per_token", cfg.synth.max_frames_per_token);
    read_field(j, "switch_probability", cfg.synth.switch_probability);
    read_field(j, "noise_sigma", cfg.synth.noise_sigma);
}

void parse_train(const json& j, RunConfig& cfg) {
    expect_keys(j, "train",
                {"model", "learning_rate", "epochs", "batch_size", "seed", "init_from", "shuffle",
                 "reverse_cs_shared_gradient", "data_dir"});
    read_field(j, "model", cfg.train_model);
    read_field(j, "learning_rate", cfg.train.learning_rate);
    read_field(j, "epochs", cfg.train.epochs);
    read_field(j, "batch_size", cfg.train.batch_size);
    read_field(j, "seed", cfg.train.seed);
    read_field(j, "shuffle", cfg.train.shuffle);
    read_field(j, "reverse_cs_shared_gradient", cfg.train.model_options.reverse_cs_shared_gradient);
    read_field(j, "data_dir", cfg.data_dir);
    if (j.contains("init_from")) cfg.train.init_from = j.at("init_from").get<std::string>();
}

void parse_eval(const json& j, RunConfig& cfg) {
    expect_keys(j, "eval", {"decode", "beam", "lm_weight", "lm", "checkpoint", "split"});
    read_field(j, "decode", cfg.eval.decode);
    read_field(j, "beam", cfg.eval.beam);
    read_field(j, "lm_weight", cfg.eval.lm_weight);
    read_field(j, "lm", cfg.eval.lm_path);
    read_field(j, "checkpoint", cfg.eval.checkpoint);
    read_field(j, "split", cfg.eval.split_path);
}

void parse_probe(const json& j, RunConfig& cfg) {
    expect_keys(j, "probe", {"epochs", "learning_rate", "batch_size", "seed", "checkpoint"});
    read_field(j, "epochs", cfg.probe.epochs);
    read_field(j, "learning_rate", cfg.probe.learning_rate);
    read_field(j, "batch_size", cfg.probe.batch_size);
    if (j.contains("seed")) {
        cfg.probe.seed = j.at("seed").get<std::uint64_t>();
        cfg.probe_seed_provided = true;
    }
    read_field(j, "checkpoint", cfg.probe_checkpoint);
}

void parse_suite(const json& j, RunConfig& cfg) {
    expect_keys(j, "suite", {"experiments", "seeds", "epochs", "learning_rate", "batch_size"});
    read_field(j, "experiments", cfg.suite.experiments);
    read_field(j, "seeds", cfg.suite.seeds);
    read_field(j, "epochs", cfg.suite.base.epochs);
    read_field(j, "learning_rate", cfg.suite.base.learning_rate);
    read_field(j, "batch_size", cfg.suite.base.batch_size);
}

}  // namespace

nn::EncoderSpec RunConfig::encoder_spec() const {
    return preset == "paper" ? nn::EncoderSpec::paper(synth.feature_dim)
                             : nn::EncoderSpec::desk(synth.feature_dim);
}

std::string RunConfig::resolved_data_dir() const {
    if (!data_dir.empty()) return data_dir;
    return (std::filesystem::path(out_dir) / "data").string();
}

json RunConfig::echo() const {
    json j;
    j["preset"] = preset;
    j["out_dir"] = out_dir;
    j["synth"] = {{"seed", synth.seed},
                  {"n_train_per_task", synth.n_train_per_task},
                  {"n_dev_per_task", synth.n_dev_per_task},
                  {"n_test_per_task", synth.n_test_per_task},
                  {"feature_dim", synth.feature_dim},
                  {"l1_symbols", synth.l1_symbols},
                  {"l2_symbols", synth.l2_symbols},
                  {"min_tokens", synth.min_tokens},
                  {"max_tokens", synth.max_tokens},
                  {"min_frames_per_token", synth.min_frames_per_token},
                  {"max_frames_per_token", synth.max_frames_per_token},
                  {"switch_probability", synth.switch_probability},
                  {"noise_sigma", synth.noise_sigma}};
    j["train"] = {{"model", train_model},
                  {"learning_rate", train.learning_rate},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"seed", train.seed},
                  {"shuffle", train.shuffle},
                  {"reverse_cs_shared_gradient", train.model_options.reverse_cs_shared_gradient},
                  {"data_dir", resolved_data_dir()}};
    if (train.init_from) j["train"]["init_from"] = *train.init_from;
    j["eval"] = {{"decode", eval.decode}, {"beam", eval.beam},   {"lm_weight", eval.lm_weight},
                 {"lm", eval.lm_path},    {"checkpoint", eval.checkpoint},
                 {"split", eval.split_path}};
    j["probe"] = {{"epochs", probe.epochs},
                  {"learning_rate", probe.learning_rate},
                  {"batch_size", probe.batch_size},
                  {"seed", probe.seed},
                  {"checkpoint", probe_checkpoint}};
    j["suite"] = {{"experiments", suite.experiments},
                  {"seeds", suite.seeds},
                  {"epochs", suite.base.epochs},
                  {"learning_rate", suite.base.learning_rate},
                  {"batch_size", suite.base.batch_size}};
    return j;
}

RunConfig load_run_config(const std::string& config_path, const CliOverrides& overrides) {
    RunConfig cfg;
    json file = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file: " + config_path);
        try {
            in >> file;
        } catch (const json::exception& e) {
            throw ConfigError("config file is not valid json: " + std::string(e.what()));
        }
        cfg.config_path = config_path;
    }
    expect_keys(file, "(top level)", {"preset", "out", "synth", "train", "eval", "probe", "suite"});

    read_field(file, "preset", cfg.preset);
    if (overrides.preset) cfg.preset = *overrides.preset;
    apply_preset(cfg);

    read_field(file, "out", cfg.out_dir);
    if (file.contains("synth")) parse_synth(file.at("synth"), cfg);
    if (file.contains("train")) parse_train(file.at("train"), cfg);
    if (file.contains("eval")) parse_eval(file.at("eval"), cfg);
    if (file.contains("probe")) parse_probe(file.at("probe"), cfg);
    if (file.contains("suite")) parse_suite(file.at("suite"), cfg);
    cfg.suite.base.learning_rate = file.contains("suite") && file.at("suite").contains("learning_rate")
                                       ? cfg.suite.base.learning_rate
                                       : cfg.train.learning_rate;
    if (!(file.contains("suite") && file.at("suite").contains("epochs"))) {
        cfg.suite.base.epochs = cfg.train.epochs;
    }
    if (!(file.contains("suite") && file.at("suite").contains("batch_size"))) {
        cfg.suite.base.batch_size = cfg.train.batch_size;
    }

    if (overrides.seed) {
        cfg.synth.seed = *overrides.seed;
        cfg.synth_seed_provided = true;
        cfg.train.seed = *overrides.seed;
        cfg.probe.seed = *overrides.seed;
        cfg.probe_seed_provided = true;
    }
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;

    // output-root override variable
    if (const char* root = std::getenv(kOutRootEnvVar)) {
        std::filesystem::path p(cfg.out_dir);
        if (p.is_relative()) cfg.out_dir = (std::filesystem::path(root) / p).string();
    }

    // keep feasibility padding in sync with the preset's conv geometry
    const nn::EncoderSpec enc = cfg.encoder_spec();
    cfg.synth.enc_kernel_widths.clear();
    cfg.synth.enc_strides.clear();
    for (const nn::LayerSpec& l : enc.layers) {
        if (l.kind == nn::LayerKind::Conv1d) {
            cfg.synth.enc_kernel_widths.push_back(l.kernel_width);
            cfg.synth.enc_strides.push_back(l.stride);
        }
    }
    return cfg;
}

}  // namespace csasr::cfg
