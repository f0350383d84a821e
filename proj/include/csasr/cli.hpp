#pragma once

#include "csasr/config.hpp"

namespace csasr::cli {

// Full argv entry point (subcommands: synth | train | eval | probe | suite).
int run(int argc, const char* const* argv);

// Individual commands; throw on failure, return 0 on success.
int cmd_synth(const cfg::RunConfig& cfg);
int cmd_train(const cfg::RunConfig& cfg);
int cmd_eval(const cfg::RunConfig& cfg);
int cmd_probe(const cfg::RunConfig& cfg);
int cmd_suite(const cfg::RunConfig& cfg);

}  // namespace csasr::cli
