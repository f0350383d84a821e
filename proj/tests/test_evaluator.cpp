#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csasr/evaluator.hpp"
#include "csasr/rng.hpp"

using namespace csasr;
using data::Task;
using data::Utterance;
using eval::EditCounts;
using rng::Rng;

namespace {

std::vector<int> random_tokens(Rng& rng, int max_len, int vocab) {
    std::vector<int> out;
    const int len = static_cast<int>(rng.range(0, max_len));
    for (int i = 0; i < len; ++i) out.push_back(static_cast<int>(rng.range(1, vocab)));
    return out;
}

Utterance ref_utt(std::vector<int> symbols, Task task = Task::Mono) {
    Utterance u;
    u.task = task;
    u.transcript = {std::move(symbols), 8};
    for (std::size_t i = 0; i < u.transcript.symbols.size(); ++i) {
        u.language_tags.push_back(data::kLang1);
    }
    return u;
}

}  // namespace

TEST_CASE("edit distance on the named cases") {
    std::vector<int> abc{1, 2, 3};
    EditCounts same = eval::edit_distance(abc, abc);
    CHECK(same.substitutions == 0);
    CHECK(same.insertions == 0);
    CHECK(same.deletions == 0);

    std::vector<int> axc{1, 7, 3};
    EditCounts sub = eval::edit_distance(abc, axc);
    CHECK(sub.substitutions == 1);
    CHECK(sub.insertions == 0);
    CHECK(sub.deletions == 0);

    EditCounts del = eval::edit_distance(abc, {});
    CHECK(del.substitutions == 0);
    CHECK(del.insertions == 0);
    CHECK(del.deletions == 3);

    EditCounts ins = eval::edit_distance({}, abc);
    CHECK(ins.insertions == 3);
}

TEST_CASE("edit distance symmetry: S symmetric, I and D swap") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed);
        const auto a = random_tokens(rng, 7, 4);
        const auto b = random_tokens(rng, 7, 4);
        const EditCounts ab = eval::edit_distance(a, b);
        const EditCounts ba = eval::edit_distance(b, a);
        CHECK(ab.substitutions == ba.substitutions);
        CHECK(ab.insertions == ba.deletions);
        CHECK(ab.deletions == ba.insertions);
    }
}

TEST_CASE("edit distance triangle inequality") {
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        Rng rng(seed * 31);
        const auto a = random_tokens(rng, 6, 4);
        const auto b = random_tokens(rng, 6, 4);
        const auto c = random_tokens(rng, 6, 4);
        CHECK(eval::edit_distance(a, c).total() <=
              eval::edit_distance(a, b).total() + eval::edit_distance(b, c).total());
    }
}

TEST_CASE("scoring: oracle hypotheses give zero, empty hypotheses give all deletions") {
    std::vector<Utterance> split{ref_utt({1, 2, 3}), ref_utt({4, 5})};
    std::vector<ctc::LabelSequence> oracle{{{1, 2, 3}, 8}, {{4, 5}, 8}};
    eval::ScoreReport perfect = eval::score_decoded(split, oracle, "greedy");
    CHECK(perfect.wer() == 0.0);
    CHECK(perfect.cer() == 0.0);

    std::vector<ctc::LabelSequence> silent{{{}, 8}, {{}, 8}};
    eval::ScoreReport blank = eval::score_decoded(split, silent, "greedy");
    CHECK(blank.wer() == 1.0);
    CHECK(blank.words.deletions == 5);
    CHECK(blank.words.insertions == 0);
    CHECK(blank.words.substitutions == 0);
}

TEST_CASE("corpus WER is token-weighted, not a mean of per-utterance rates") {
    // 1 error in 10 tokens + 1 error in 2 tokens: aggregate 2/12, mean 0.3
    std::vector<Utterance> split{ref_utt({1, 2, 3, 4, 5, 1, 2, 3, 4, 5}), ref_utt({1, 2})};
    std::vector<ctc::LabelSequence> hyps{{{1, 2, 3, 4, 5, 1, 2, 3, 4, 7}, 8}, {{1, 7}, 8}};
    eval::ScoreReport report = eval::score_decoded(split, hyps, "greedy");
    CHECK(report.wer() == doctest::Approx(2.0 / 12.0).epsilon(1e-12));
    CHECK(report.wer() != doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("probe: equal epoch axes, accuracies in range, grl-off hook equals vanilla") {
    data::SynthConfig cfg;
    cfg.seed = 31;
    cfg.n_train_per_task = 6;
    cfg.n_dev_per_task = 4;
    cfg.n_test_per_task = 2;
    cfg.feature_dim = 6;
    cfg.l1_symbols = 3;
    cfg.l2_symbols = 3;
    cfg.enc_kernel_widths = {3};
    cfg.enc_strides = {2};
    data::Corpus corpus = data::generate_corpus(cfg);

    nn::EncoderSpec spec;
    spec.layers = {{nn::LayerKind::Conv1d, 6, 6, 3, 2}, {nn::LayerKind::Blstm, 6, 4, 0, 1}};
    Model donor(ModelKind::Pooled, spec, cfg.alphabet_size(), 5);

    eval::ProbeConfig pc;
    pc.epochs = 2;
    pc.seed = 5;
    eval::ProbeResult result = eval::run_probe(donor, corpus, pc);
    REQUIRE(result.vanilla_accuracy.size() == 2);
    REQUIRE(result.adversarial_accuracy.size() == 2);
    for (double a : result.vanilla_accuracy) CHECK((a >= 0.0 && a <= 1.0));
    for (double a : result.adversarial_accuracy) CHECK((a >= 0.0 && a <= 1.0));

    pc.disable_grl_in_adversarial_arm = true;
    eval::ProbeResult ablated = eval::run_probe(donor, corpus, pc);
    CHECK(ablated.vanilla_accuracy == ablated.adversarial_accuracy);

    // corpus missing one task
    data::Corpus mono_only = corpus;
    std::erase_if(mono_only.train, [](const Utterance& u) { return u.task == Task::Cs; });
    CHECK_THROWS_AS(eval::run_probe(donor, mono_only, pc), ContractError);
}

TEST_CASE("probe verdict banding") {
    eval::ProbeResult r;
    r.vanilla_accuracy = {0.5, 0.7, 0.95};
    r.adversarial_accuracy = {0.9, 0.2, 0.5};  // epochs 1-2 are burn-in
    eval::ProbeVerdict v = eval::assess_probe(r);
    CHECK(v.vanilla_reaches_high);
    CHECK(v.adversarial_stays_banded);
    r.adversarial_accuracy = {0.5, 0.5, 0.7};
    CHECK_FALSE(eval::assess_probe(r).adversarial_stays_banded);
}
