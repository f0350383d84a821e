#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csasr/models.hpp"

namespace csasr::train {

struct TrainConfig {
    double learning_rate = 3e-4;
    int epochs = 40;
    int batch_size = 16;
    std::uint64_t seed = 1;
    ModelKind kind = ModelKind::Pooled;
    std::optional<std::string> init_from;  // checkpoint path; theta_s via transfer_shared
    bool shuffle = true;
    ModelOptions model_options;

    void validate() const;
};

// One CSV row per epoch. `seconds` is written as 0.000 so identical runs
// produce byte-identical CSVs; wall-clock timing goes to stderr and the run
// manifest instead.
struct MetricRecord {
    int epoch = 0;
    double loss_task_mono = 0.0;
    double loss_task_cs = 0.0;
    double loss_adv = 0.0;
    double dev_cer_mono = 0.0;
    double dev_cer_cs = 0.0;
    double disc_acc = 0.0;
    double seconds = 0.0;
};

extern const char* kMetricsCsvHeader;
void write_metrics_csv(const std::vector<MetricRecord>& metrics, const std::string& path);

struct TrainResult {
    std::vector<MetricRecord> metrics;
    std::string last_checkpoint;
    std::string best_checkpoint;
    std::string metrics_csv;
    int best_epoch = 0;
    double best_dev_cer = 0.0;
    long total_steps = 0;
    int skipped_utterances = 0;  // CTC-infeasible, logged and counted
    double wall_seconds = 0.0;
};

// theta <- theta - lr * grad for every tensor in every partition; the GRL
// already folded the adversarial sign into grad, so this single rule
// realizes Eq. 5-7 and Eq. 9-12.
void sgd_step(ParameterPartition& params, double learning_rate);

TrainResult train(const data::Corpus& corpus, const TrainConfig& cfg,
                  const nn::EncoderSpec& enc_spec, const std::string& out_dir);

// ---------------------------------------------------------------------------
// experiment suite (Exp1/Exp2/Exp3 then Exp5/Exp6 initialized from Exp3)

extern const std::vector<std::string> kAllExperiments;  // exp1 exp2 exp3 exp5 exp6
ModelKind experiment_kind(const std::string& exp);

struct SuiteConfig {
    std::vector<std::string> experiments = kAllExperiments;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    TrainConfig base;  // learning_rate / epochs / batch_size shared by every stage
};

struct SuiteResult {
    // cer[experiment][task][seed index]
    std::map<std::string, std::map<data::Task, std::vector<double>>> cer;
    std::map<std::string, std::map<data::Task, double>> median_cer;
    std::vector<std::string> experiments;
    std::vector<std::uint64_t> seeds;

    bool exp1_beats_exp2_on_mono() const;
    bool exp2_beats_exp1_on_cs() const;
    bool exp3_best_or_tied_everywhere() const;
    bool exp6_le_exp5_le_exp3() const;
    bool exp6_strictly_beats_exp3_somewhere(double min_relative) const;
};

double median(std::vector<double> values);

SuiteResult run_experiment_suite(const data::Corpus& corpus, const SuiteConfig& cfg,
                                 const nn::EncoderSpec& enc_spec, const std::string& out_dir);

std::string render_suite_table(const SuiteResult& result);
void write_suite_csv(const SuiteResult& result, const std::string& path);

}  // namespace csasr::train
