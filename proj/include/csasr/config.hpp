#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "csasr/data.hpp"
#include "csasr/evaluator.hpp"
#include "csasr/trainer.hpp"

namespace csasr::cfg {

// One config file shared by every subcommand, JSON with per-command
// sections. Flags override file values; the fully-resolved config is echoed
// into the run manifest.
struct RunConfig {
    std::string preset = "desk";  // desk | paper
    std::string out_dir = "out";
    std::string config_path;  // empty when no file was given

    data::SynthConfig synth;
    bool synth_seed_provided = false;

    train::TrainConfig train;
    std::string train_model = "pooled";
    std::string data_dir;  // where synth wrote / train+suite read; default <out>/data

    struct EvalSection {
        std::string decode = "greedy";  // greedy | beam
        int beam = 8;
        double lm_weight = 0.5;
        std::string lm_path;
        std::string checkpoint;
        std::string split_path;
    } eval;

    eval::ProbeConfig probe;
    std::string probe_checkpoint;
    bool probe_seed_provided = false;

    train::SuiteConfig suite;

    nn::EncoderSpec encoder_spec() const;
    std::string resolved_data_dir() const;
    nlohmann::json echo() const;  // fully-resolved values for the manifest
};

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> preset;
};

// Loads the file (when non-empty), applies preset defaults then file values
// then flag overrides. Throws ConfigError naming the offending field.
RunConfig load_run_config(const std::string& config_path, const CliOverrides& overrides);

// output-root override variable; prefixes relative out dirs
extern const char* kOutRootEnvVar;

}  // namespace csasr::cfg
