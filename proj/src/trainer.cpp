#include "csasr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "csasr/evaluator.hpp"

namespace csasr::train {

namespace fs = std::filesystem;
using ag::Tape;
using ag::Tensor;
using data::Task;
using data::Utterance;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void sgd_step(ParameterPartition& params, double learning_rate) {
    for (auto& [name, tensor] : params.all()) {
        auto& t = const_cast<Tensor&>(tensor);
        if (!t.grad_present()) {
            throw ContractError("sgd_step: no gradient on trainable tensor '" + name +
                                "'; run backward() first");
        }
        const auto& g = t.grad();
        auto d = t.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= learning_rate * g[i];
    }
}

// ---------------------------------------------------------------------------

const char* kMetricsCsvHeader =
    "epoch,loss_task_mono,loss_task_cs,loss_adv,dev_cer_mono,dev_cer_cs,disc_acc,seconds";

namespace {

std::string fmt_metric(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

double disc_dev_accuracy(const Model& model, std::span<const Utterance> dev) {
    int correct = 0;
    for (const Utterance& utt : dev) {
        Tape tape;
        Tensor enc = model.encode(tape, utt.features);
        const double z = model.discriminator_logit(tape, enc, /*use_grl=*/false).value();
        if ((z > 0.0) == (utt.task == Task::Cs)) ++correct;
    }
    return dev.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(dev.size());
}

double dev_cer_for_task(const Model& model, std::span<const Utterance> dev, Task task) {
    std::vector<Utterance> subset;
    for (const Utterance& u : dev) {
        if (u.task == task) subset.push_back(u);
    }
    if (subset.empty()) return nan_value();
    eval::DecodeConfig decode;  // greedy
    return eval::score_model(model, subset, decode).cer();
}

}  // namespace

void write_metrics_csv(const std::vector<MetricRecord>& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open metrics csv for writing: " + path);
    out << kMetricsCsvHeader << "\n";
    for (const MetricRecord& r : metrics) {
        out << r.epoch << "," << fmt_metric(r.loss_task_mono) << "," << fmt_metric(r.loss_task_cs)
            << "," << fmt_metric(r.loss_adv) << "," << fmt_metric(r.dev_cer_mono) << ","
            << fmt_metric(r.dev_cer_cs) << "," << fmt_metric(r.disc_acc) << ","
            << fmt_metric(r.seconds) << "\n";
    }
}

TrainResult train(const data::Corpus& corpus, const TrainConfig& cfg,
                  const nn::EncoderSpec& enc_spec, const std::string& out_dir) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);

    const int alphabet_size = corpus.config.alphabet_size();
    Model model = [&]() {
        if (cfg.init_from) {
            Model donor = load_checkpoint(*cfg.init_from);
            return transfer_shared(donor, cfg.kind, enc_spec, alphabet_size, cfg.seed,
                                   cfg.model_options);
        }
        return Model(cfg.kind, enc_spec, alphabet_size, cfg.seed, cfg.model_options);
    }();

    // training stream: only the tasks this kind trains on
    std::vector<Utterance> pool;
    for (const Utterance& u : corpus.train) {
        if (kind_trains_task(cfg.kind, u.task)) pool.push_back(u);
    }
    if (pool.empty()) {
        throw ConfigError(std::string("corpus has no trainable utterances for ") +
                          model_kind_name(cfg.kind));
    }

    TrainResult result;
    const bool adversarial = kind_has_discriminator(cfg.kind);
    const bool track_mono = kind_trains_task(cfg.kind, Task::Mono);
    const bool track_cs = kind_trains_task(cfg.kind, Task::Cs);

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
    result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
    result.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
    result.best_dev_cer = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        if (cfg.shuffle) {
            rng::Rng rng(rng::derive(cfg.seed, 0x5AFE + static_cast<std::uint64_t>(epoch)));
            rng.shuffle(order);
        }

        double sum_mono = 0.0, sum_cs = 0.0, sum_adv = 0.0;
        int n_mono = 0, n_cs = 0, n_adv = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Utterance> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const Utterance& u = pool[order[i]];
                const int t_in = ag::rows(u.features);
                const int reduced =
                    t_in >= enc_spec.min_input_length() ? enc_spec.output_length(t_in) : 0;
                if (reduced < ctc::required_frames(u.transcript)) {
                    std::cerr << "[train] skipping CTC-infeasible utterance " << u.id << " ("
                              << reduced << " reduced frames < "
                              << ctc::required_frames(u.transcript) << " required)\n";
                    ++result.skipped_utterances;
                    continue;
                }
                batch.push_back(u);
            }
            if (batch.empty()) continue;

            Tape tape;
            model.zero_grad();
            BatchLoss loss = model.composite_loss(tape, batch);
            Tensor scaled = tape.mul_scalar(loss.total, 1.0 / static_cast<double>(batch.size()));
            tape.backward(scaled);
            sgd_step(model.params(), cfg.learning_rate);
            ++result.total_steps;

            sum_mono += loss.task_mono;
            sum_cs += loss.task_cs;
            n_mono += loss.n_mono;
            n_cs += loss.n_cs;
            if (adversarial) {
                sum_adv += loss.adversarial;
                n_adv += static_cast<int>(batch.size());
            }
        }

        MetricRecord rec;
        rec.epoch = epoch;
        rec.loss_task_mono = track_mono && n_mono > 0 ? sum_mono / n_mono : nan_value();
        rec.loss_task_cs = track_cs && n_cs > 0 ? sum_cs / n_cs : nan_value();
        rec.loss_adv = adversarial && n_adv > 0 ? sum_adv / n_adv : nan_value();
        rec.dev_cer_mono = dev_cer_for_task(model, corpus.dev, Task::Mono);
        rec.dev_cer_cs = dev_cer_for_task(model, corpus.dev, Task::Cs);
        rec.disc_acc = adversarial ? disc_dev_accuracy(model, corpus.dev) : nan_value();
        rec.seconds = 0.0;  // deterministic artifact; wall time below
        result.metrics.push_back(rec);

        save_checkpoint(model, result.last_checkpoint);
        // best-dev selection: mean dev CER over the tasks this kind trains
        double selection = 0.0;
        int terms = 0;
        if (track_mono && !std::isnan(rec.dev_cer_mono)) {
            selection += rec.dev_cer_mono;
            ++terms;
        }
        if (track_cs && !std::isnan(rec.dev_cer_cs)) {
            selection += rec.dev_cer_cs;
            ++terms;
        }
        selection = terms > 0 ? selection / terms : std::numeric_limits<double>::infinity();
        if (selection < result.best_dev_cer) {
            result.best_dev_cer = selection;
            result.best_epoch = epoch;
            save_checkpoint(model, result.best_checkpoint);
        }

        const double epoch_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count();
        std::cerr << "[train] " << model_kind_name(cfg.kind) << " epoch " << epoch << "/"
                  << cfg.epochs << " loss_mono=" << fmt_metric(rec.loss_task_mono)
                  << " loss_cs=" << fmt_metric(rec.loss_task_cs)
                  << " loss_adv=" << fmt_metric(rec.loss_adv)
                  << " dev_cer_mono=" << fmt_metric(rec.dev_cer_mono)
                  << " dev_cer_cs=" << fmt_metric(rec.dev_cer_cs) << " (" << fmt_metric(epoch_s)
                  << "s)\n";
    }

    write_metrics_csv(result.metrics, result.metrics_csv);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// ---------------------------------------------------------------------------
// suite

const std::vector<std::string> kAllExperiments = {"exp1", "exp2", "exp3", "exp5", "exp6"};

ModelKind experiment_kind(const std::string& exp) {
    if (exp == "exp1") return ModelKind::BaselineMono;
    if (exp == "exp2") return ModelKind::BaselineCs;
    if (exp == "exp3") return ModelKind::Pooled;
    if (exp == "exp5") return ModelKind::AdvPooled;
    if (exp == "exp6") return ModelKind::MultitaskAdv;
    throw ConfigError("unknown experiment '" + exp + "' (expected exp1|exp2|exp3|exp5|exp6)");
}

double median(std::vector<double> values) {
    if (values.empty()) throw ContractError("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {
bool wants(const SuiteConfig& cfg, const std::string& exp) {
    return std::find(cfg.experiments.begin(), cfg.experiments.end(), exp) !=
           cfg.experiments.end();
}
}  // namespace

SuiteResult run_experiment_suite(const data::Corpus& corpus, const SuiteConfig& cfg,
                                 const nn::EncoderSpec& enc_spec, const std::string& out_dir) {
    for (const std::string& exp : cfg.experiments) (void)experiment_kind(exp);
    if (cfg.seeds.empty()) throw ConfigError("suite needs at least one seed");
    if ((wants(cfg, "exp5") || wants(cfg, "exp6")) && !wants(cfg, "exp3")) {
        throw DependencyError("exp5/exp6 are initialized from exp3's checkpoint; add exp3 to the suite");
    }

    SuiteResult result;
    result.seeds = cfg.seeds;
    // dependency order regardless of the order given
    for (const std::string& exp : kAllExperiments) {
        if (wants(cfg, exp)) result.experiments.push_back(exp);
    }

    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        const std::uint64_t seed = cfg.seeds[si];
        const fs::path seed_dir = fs::path(out_dir) / ("seed_" + std::to_string(seed));
        std::string exp3_best;
        for (const std::string& exp : result.experiments) {
            TrainConfig tc = cfg.base;
            tc.seed = seed;
            tc.kind = experiment_kind(exp);
            tc.init_from.reset();
            if (exp == "exp5" || exp == "exp6") {
                if (exp3_best.empty()) {
                    throw DependencyError(exp + " requires exp3's checkpoint for seed " +
                                          std::to_string(seed));
                }
                tc.init_from = exp3_best;
            }
            const std::string exp_dir = (seed_dir / exp).string();
            std::cerr << "[suite] seed " << seed << " " << exp << " ("
                      << model_kind_name(tc.kind) << ")\n";
            TrainResult tr = train(corpus, tc, enc_spec, exp_dir);
            if (exp == "exp3") exp3_best = tr.best_checkpoint;

            Model best = load_checkpoint(tr.best_checkpoint);
            for (Task task : {Task::Mono, Task::Cs}) {
                std::vector<Utterance> subset;
                for (const Utterance& u : corpus.test) {
                    if (u.task == task) subset.push_back(u);
                }
                eval::DecodeConfig decode;  // greedy CER is the suite metric
                const double cer = eval::score_model(best, subset, decode).cer();
                result.cer[exp][task].push_back(cer);
            }
        }
    }

    for (const std::string& exp : result.experiments) {
        for (Task task : {Task::Mono, Task::Cs}) {
            result.median_cer[exp][task] = median(result.cer[exp][task]);
        }
    }
    write_suite_csv(result, (fs::path(out_dir) / "suite.csv").string());
    return result;
}

bool SuiteResult::exp1_beats_exp2_on_mono() const {
    return median_cer.at("exp1").at(Task::Mono) < median_cer.at("exp2").at(Task::Mono);
}

bool SuiteResult::exp2_beats_exp1_on_cs() const {
    return median_cer.at("exp2").at(Task::Cs) < median_cer.at("exp1").at(Task::Cs);
}

bool SuiteResult::exp3_best_or_tied_everywhere() const {
    for (Task task : {Task::Mono, Task::Cs}) {
        const double e3 = median_cer.at("exp3").at(task);
        if (e3 > median_cer.at("exp1").at(task) || e3 > median_cer.at("exp2").at(task)) {
            return false;
        }
    }
    return true;
}

bool SuiteResult::exp6_le_exp5_le_exp3() const {
    for (Task task : {Task::Mono, Task::Cs}) {
        const double e3 = median_cer.at("exp3").at(task);
        const double e5 = median_cer.at("exp5").at(task);
        const double e6 = median_cer.at("exp6").at(task);
        if (!(e6 <= e5 && e5 <= e3)) return false;
    }
    return true;
}

bool SuiteResult::exp6_strictly_beats_exp3_somewhere(double min_relative) const {
    for (Task task : {Task::Mono, Task::Cs}) {
        const double e3 = median_cer.at("exp3").at(task);
        const double e6 = median_cer.at("exp6").at(task);
        if (e3 > 0.0 && (e3 - e6) / e3 >= min_relative) return true;
    }
    return false;
}

std::string render_suite_table(const SuiteResult& result) {
    std::string out = "test set";
    for (const std::string& exp : result.experiments) out += "\t" + exp;
    out += "\t(median CER over " + std::to_string(result.seeds.size()) + " seeds)\n";
    char buf[40];
    for (Task task : {Task::Mono, Task::Cs}) {
        out += task == Task::Mono ? "MONO" : "CS";
        for (const std::string& exp : result.experiments) {
            std::snprintf(buf, sizeof buf, "\t%.4f", result.median_cer.at(exp).at(task));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

void write_suite_csv(const SuiteResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open suite csv for writing: " + path);
    out << "experiment,split,";
    for (std::size_t i = 0; i < result.seeds.size(); ++i) {
        out << "seed_" << result.seeds[i] << ",";
    }
    out << "median\n";
    char buf[40];
    for (const std::string& exp : result.experiments) {
        for (Task task : {Task::Mono, Task::Cs}) {
            out << exp << "," << data::task_name(task) << ",";
            for (double v : result.cer.at(exp).at(task)) {
                std::snprintf(buf, sizeof buf, "%.6f,", v);
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "%.6f\n", result.median_cer.at(exp).at(task));
            out << buf;
        }
    }
}

}  // namespace csasr::train
