#pragma once

#include <span>
#include <string>
#include <vector>

#include "csasr/models.hpp"

namespace csasr::eval {

struct EditCounts {
    int substitutions = 0;
    int insertions = 0;
    int deletions = 0;
    int total() const { return substitutions + insertions + deletions; }
};

// Minimal Levenshtein alignment; ties prefer a substitution over an
// insert+delete pair. I counts hyp tokens absent from ref, D the reverse.
EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp);

struct DecodeConfig {
    enum class Mode { Greedy, Beam };
    Mode mode = Mode::Greedy;
    int beam = 8;
    double lm_weight = 0.5;
    const ctc::NGramLM* lm = nullptr;  // required in Beam mode

    const char* mode_name() const { return mode == Mode::Greedy ? "greedy" : "beam+lm"; }
};

// Corpus-level rates are token-weighted aggregates of per-utterance counts,
// not means of per-utterance rates. The generator emits one grapheme per
// token, so word- and character-level rates coincide on this corpus; both
// are kept for reporting.
struct ScoreReport {
    std::string decode_mode;
    std::size_t utterance_count = 0;
    EditCounts words;
    EditCounts chars;
    std::size_t ref_word_count = 0;
    std::size_t ref_char_count = 0;

    double wer() const;
    double cer() const;
};

ScoreReport score_decoded(std::span<const data::Utterance> split,
                          std::span<const ctc::LabelSequence> hyps, const std::string& mode_name);
ScoreReport score_model(const Model& model, std::span<const data::Utterance> split,
                        const DecodeConfig& decode);

void write_score_csv(const ScoreReport& report, const std::string& path);

// Fig. 2 probe: the same encoder+classifier stack trained twice under one
// seed, with and without the GRL, recording dev accuracy per epoch.
struct ProbeConfig {
    int epochs = 20;
    double learning_rate = 2e-3;
    int batch_size = 8;
    std::uint64_t seed = 1;
    // test hook: run the "adversarial" arm with the GRL removed, which must
    // reproduce the vanilla curves exactly
    bool disable_grl_in_adversarial_arm = false;
};

struct ProbeResult {
    std::vector<double> vanilla_accuracy;      // dev accuracy per epoch
    std::vector<double> adversarial_accuracy;  // same epoch axis
};

ProbeResult run_probe(const Model& encoder_donor, const data::Corpus& corpus,
                      const ProbeConfig& cfg);

struct ProbeVerdict {
    bool vanilla_reaches_high = false;   // final vanilla accuracy > threshold
    bool adversarial_stays_banded = false;  // inside [lo, hi] after the burn-in
    double vanilla_final = 0.0;
    double adversarial_min = 0.0, adversarial_max = 0.0;  // post burn-in
};

ProbeVerdict assess_probe(const ProbeResult& result, double vanilla_threshold = 0.9,
                          double band_lo = 0.35, double band_hi = 0.65, int burn_in_epochs = 2);

void write_probe_csv(const ProbeResult& result, const std::string& path);

}  // namespace csasr::eval
