#include "csasr/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "csasr/trainer.hpp"

namespace csasr::eval {

using ag::Tape;
using ag::Tensor;
using data::Task;
using data::Utterance;

EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    struct Cell {
        int cost = 0;
        EditCounts counts;
    };
    std::vector<Cell> prev(m + 1), cur(m + 1);
    for (std::size_t j = 1; j <= m; ++j) {
        prev[j].cost = static_cast<int>(j);
        prev[j].counts.insertions = static_cast<int>(j);
    }
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0].cost = static_cast<int>(i);
        cur[0].counts = EditCounts{0, 0, static_cast<int>(i)};
        for (std::size_t j = 1; j <= m; ++j) {
            const bool match = ref[i - 1] == hyp[j - 1];
            // diagonal first: ties prefer substitutions over insert+delete
            Cell best = prev[j - 1];
            best.cost += match ? 0 : 1;
            if (!match) ++best.counts.substitutions;
            if (prev[j].cost + 1 < best.cost) {
                best = prev[j];
                ++best.cost;
                ++best.counts.deletions;
            }
            if (cur[j - 1].cost + 1 < best.cost) {
                best = cur[j - 1];
                ++best.cost;
                ++best.counts.insertions;
            }
            cur[j] = best;
        }
        std::swap(prev, cur);
    }
    return prev[m].counts;
}

double ScoreReport::wer() const {
    if (ref_word_count == 0) return words.total() == 0 ? 0.0 : 1.0;
    return static_cast<double>(words.total()) / static_cast<double>(ref_word_count);
}

double ScoreReport::cer() const {
    if (ref_char_count == 0) return chars.total() == 0 ? 0.0 : 1.0;
    return static_cast<double>(chars.total()) / static_cast<double>(ref_char_count);
}

ScoreReport score_decoded(std::span<const Utterance> split,
                          std::span<const ctc::LabelSequence> hyps,
                          const std::string& mode_name) {
    if (split.size() != hyps.size()) {
        throw ContractError("score_decoded: " + std::to_string(split.size()) +
                            " references vs " + std::to_string(hyps.size()) + " hypotheses");
    }
    ScoreReport report;
    report.decode_mode = mode_name;
    report.utterance_count = split.size();
    for (std::size_t i = 0; i < split.size(); ++i) {
        const auto& ref = split[i].transcript.symbols;
        const auto& hyp = hyps[i].symbols;
        const EditCounts c = edit_distance(ref, hyp);
        report.words.substitutions += c.substitutions;
        report.words.insertions += c.insertions;
        report.words.deletions += c.deletions;
        report.ref_word_count += ref.size();
        // one grapheme per token: the character alignment coincides
        report.chars.substitutions += c.substitutions;
        report.chars.insertions += c.insertions;
        report.chars.deletions += c.deletions;
        report.ref_char_count += ref.size();
    }
    return report;
}

ScoreReport score_model(const Model& model, std::span<const Utterance> split,
                        const DecodeConfig& decode) {
    if (decode.mode == DecodeConfig::Mode::Beam && decode.lm == nullptr) {
        throw ConfigError("beam decoding requires a language model");
    }
    std::vector<ctc::LabelSequence> hyps;
    hyps.reserve(split.size());
    for (const Utterance& utt : split) {
        Tape tape;
        Tensor lp = model.forward_decode(tape, utt);
        if (decode.mode == DecodeConfig::Mode::Greedy) {
            hyps.push_back(ctc::greedy_decode(lp));
        } else {
            hyps.push_back(ctc::beam_decode(lp, decode.lm, decode.beam, decode.lm_weight));
        }
    }
    return score_decoded(split, hyps, decode.mode_name());
}

void write_score_csv(const ScoreReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open score csv for writing: " + path);
    out << "decode_mode,utterances,wer,cer,word_sub,word_ins,word_del,ref_words,ref_chars\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%d,%d,%d,%zu,%zu\n",
                  report.decode_mode.c_str(), report.utterance_count, report.wer(), report.cer(),
                  report.words.substitutions, report.words.insertions, report.words.deletions,
                  report.ref_word_count, report.ref_char_count);
    out << buf;
}

// ---------------------------------------------------------------------------
// probe

namespace {

double classifier_accuracy(const Model& probe, std::span<const Utterance> split) {
    int correct = 0;
    for (const Utterance& utt : split) {
        Tape tape;
        Tensor enc = probe.encode(tape, utt.features);
        const double z = probe.discriminator_logit(tape, enc, /*use_grl=*/false).value();
        const bool pred_cs = z > 0.0;
        if (pred_cs == (utt.task == Task::Cs)) ++correct;
    }
    return split.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(split.size());
}

std::vector<double> run_probe_arm(const Model& encoder_donor, const data::Corpus& corpus,
                                  const ProbeConfig& cfg, bool use_grl) {
    Model probe = transfer_shared(encoder_donor, ModelKind::AdvPooled, cfg.seed);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(cfg.epochs));
    std::vector<std::size_t> order(corpus.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng::Rng shuffle_rng(rng::derive(cfg.seed, 0x9000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Utterance> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(corpus.train[order[i]]);
            Tape tape;
            probe.zero_grad();
            Tensor loss = probe.adversarial_loss(tape, batch, use_grl);
            tape.backward(tape.mul_scalar(loss, 1.0 / static_cast<double>(batch.size())));
            train::sgd_step(probe.params(), cfg.learning_rate);
        }
        curve.push_back(classifier_accuracy(probe, corpus.dev));
    }
    return curve;
}

}  // namespace

ProbeResult run_probe(const Model& encoder_donor, const data::Corpus& corpus,
                      const ProbeConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("probe epochs must be >= 1");
    bool has_mono = false, has_cs = false;
    for (const Utterance& u : corpus.train) {
        has_mono = has_mono || u.task == Task::Mono;
        has_cs = has_cs || u.task == Task::Cs;
    }
    if (!has_mono || !has_cs) {
        throw ContractError("probe corpus must contain both MONO and CS utterances");
    }
    ProbeResult result;
    result.vanilla_accuracy = run_probe_arm(encoder_donor, corpus, cfg, /*use_grl=*/false);
    result.adversarial_accuracy = run_probe_arm(encoder_donor, corpus, cfg,
                                                !cfg.disable_grl_in_adversarial_arm);
    return result;
}

ProbeVerdict assess_probe(const ProbeResult& result, double vanilla_threshold, double band_lo,
                          double band_hi, int burn_in_epochs) {
    ProbeVerdict v;
    if (result.vanilla_accuracy.empty()) return v;
    v.vanilla_final = result.vanilla_accuracy.back();
    v.vanilla_reaches_high = v.vanilla_final > vanilla_threshold;
    v.adversarial_min = 1.0;
    v.adversarial_max = 0.0;
    bool any = false;
    for (std::size_t i = static_cast<std::size_t>(burn_in_epochs);
         i < result.adversarial_accuracy.size(); ++i) {
        v.adversarial_min = std::min(v.adversarial_min, result.adversarial_accuracy[i]);
        v.adversarial_max = std::max(v.adversarial_max, result.adversarial_accuracy[i]);
        any = true;
    }
    v.adversarial_stays_banded = any && v.adversarial_min >= band_lo && v.adversarial_max <= band_hi;
    return v;
}

void write_probe_csv(const ProbeResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open probe csv for writing: " + path);
    out << "epoch,vanilla_accuracy,adversarial_accuracy\n";
    char buf[96];
    for (std::size_t i = 0; i < result.vanilla_accuracy.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", i + 1, result.vanilla_accuracy[i],
                      result.adversarial_accuracy[i]);
        out << buf;
    }
}

}  // namespace csasr::eval
