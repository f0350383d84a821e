#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "csasr/ctc.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace csasr;
using ag::Tape;
using ag::Tensor;
using ctc::LabelSequence;
using rng::Rng;

namespace {

Tensor random_log_probs(int t, int v, Rng& rng, bool requires_grad = false) {
    Tensor logits = testutil::random_tensor({t, v}, rng, -2.0, 2.0, false);
    Tape tape;
    Tensor lp = tape.log_softmax(logits);
    return Tensor({t, v}, std::vector<double>(lp.data().begin(), lp.data().end()), requires_grad);
}

Tensor uniform_log_probs(int t, int v) {
    return Tensor::full({t, v}, std::log(1.0 / v));
}

// every label sequence over {1..v-1} with length <= max_len, lexicographic
std::vector<std::vector<int>> all_sequences(int v, int max_len) {
    std::vector<std::vector<int>> out{{}};
    std::vector<std::vector<int>> frontier{{}};
    for (int len = 1; len <= max_len; ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& p : frontier) {
            for (int s = 1; s < v; ++s) {
                auto q = p;
                q.push_back(s);
                out.push_back(q);
                next.push_back(std::move(q));
            }
        }
        frontier = std::move(next);
    }
    return out;
}

}  // namespace

TEST_CASE("single frame uniform: loss is -log 0.5") {
    Tape tape;
    Tensor lp = uniform_log_probs(1, 2);
    Tensor loss = ctc::ctc_loss(tape, lp, {{1}, 2});
    CHECK(loss.value() == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("two frames uniform: paths aa, a_, _a give -log 0.75") {
    Tape tape;
    Tensor lp = uniform_log_probs(2, 2);
    Tensor loss = ctc::ctc_loss(tape, lp, {{1}, 2});
    CHECK(loss.value() == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(ctc::ctc_brute_force(lp, {{1}, 2}) == doctest::Approx(loss.value()).epsilon(1e-12));
}

TEST_CASE("random T=3 V=3 target ab equals 27-path brute force") {
    Rng rng(21);
    Tensor lp = random_log_probs(3, 3, rng);
    Tape tape;
    Tensor loss = ctc::ctc_loss(tape, lp, {{1, 2}, 3});
    CHECK(loss.value() == doctest::Approx(ctc::ctc_brute_force(lp, {{1, 2}, 3})).epsilon(1e-12));
}

TEST_CASE("oracle equivalence on random small instances") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        Rng rng(seed);
        const int t = static_cast<int>(rng.range(1, 6));
        const int v = static_cast<int>(rng.range(2, 4));
        const int len = static_cast<int>(rng.range(0, 3));
        LabelSequence target;
        target.alphabet_size = v;
        for (int i = 0; i < len; ++i) target.symbols.push_back(static_cast<int>(rng.range(1, v - 1)));
        Tensor lp = random_log_probs(t, v, rng);
        const double brute = ctc::ctc_brute_force(lp, target);
        if (t < ctc::required_frames(target)) {
            CHECK(std::isinf(brute));
            Tape tape;
            CHECK_THROWS_AS(ctc::ctc_loss(tape, lp, target), CtcInfeasibleError);
            continue;
        }
        Tape tape;
        Tensor loss = ctc::ctc_loss(tape, lp, target);
        CHECK(std::abs(loss.value() - brute) <= 1e-9);
        ++checked;
    }
    CHECK(checked >= 30);
}

TEST_CASE("empty target: product of blank probabilities") {
    Rng rng(33);
    Tensor lp = random_log_probs(4, 3, rng);
    double blanks = 0.0;
    for (int t = 0; t < 4; ++t) blanks += lp(t, 0);
    Tape tape;
    Tensor loss = ctc::ctc_loss(tape, lp, {{}, 3});
    CHECK(loss.value() == doctest::Approx(-blanks).epsilon(1e-12));
    CHECK(ctc::ctc_brute_force(lp, {{}, 3}) == doctest::Approx(-blanks).epsilon(1e-9));
}

TEST_CASE("target longer than frames is infeasible") {
    Tensor lp = uniform_log_probs(2, 3);
    CHECK(std::isinf(ctc::ctc_brute_force(lp, {{1, 2, 1}, 3})));
    Tape tape;
    CHECK_THROWS_AS(ctc::ctc_loss(tape, lp, {{1, 2, 1}, 3}), CtcInfeasibleError);
    // repeats need a separating blank: "aa" needs 3 frames
    CHECK_THROWS_AS(ctc::ctc_loss(tape, lp, {{1, 1}, 3}), CtcInfeasibleError);
    CHECK(ctc::required_frames({{1, 1}, 3}) == 3);
}

TEST_CASE("ctc gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Rng rng(seed);
        const int t = static_cast<int>(rng.range(3, 6));
        const int v = static_cast<int>(rng.range(2, 4));
        LabelSequence target{{}, v};
        for (int i = 0; i < 2 && i < t; ++i) {
            target.symbols.push_back(static_cast<int>(rng.range(1, v - 1)));
        }
        if (t < ctc::required_frames(target)) continue;
        // raw values act as log-domain scores; no need to normalize for the check
        Tensor lp = testutil::random_tensor({t, v}, rng, -2.0, 0.0, true);
        Tape tape;
        Tensor loss = ctc::ctc_loss(tape, lp, target);
        tape.backward(loss);
        auto forward = [&]() {
            Tape ft;
            return ctc::ctc_loss(ft, lp, target).value();
        };
        std::string msg;
        CHECK_MESSAGE(gradcheck::check({lp}, forward, &msg), msg);
        lp.clear_grad();
    }
}

TEST_CASE("ctc loss is covariant under relabeling of non-blank symbols") {
    Rng rng(5);
    Tensor lp = random_log_probs(5, 4, rng);
    LabelSequence target{{1, 3, 2}, 4};
    Tape tape;
    const double base = ctc::ctc_loss(tape, lp, target).value();
    // permutation 1->2, 2->3, 3->1 of the non-blank ids
    const int perm[4] = {0, 2, 3, 1};
    std::vector<double> data(lp.numel());
    for (int t = 0; t < 5; ++t) {
        for (int j = 0; j < 4; ++j) data[static_cast<std::size_t>(t) * 4 + perm[j]] = lp(t, j);
    }
    Tensor relabeled({5, 4}, std::move(data));
    LabelSequence target2{{perm[1], perm[3], perm[2]}, 4};
    const double permuted = ctc::ctc_loss(tape, relabeled, target2).value();
    CHECK(std::abs(base - permuted) <= 1e-12);
}

TEST_CASE("appending a certain-blank frame leaves the loss unchanged") {
    Rng rng(9);
    Tensor lp = random_log_probs(4, 3, rng);
    LabelSequence target{{1, 2}, 3};
    Tape tape;
    const double base = ctc::ctc_loss(tape, lp, target).value();
    std::vector<double> data(lp.data().begin(), lp.data().end());
    data.push_back(0.0);  // log 1 for blank
    data.push_back(ctc::kLogFloor);
    data.push_back(ctc::kLogFloor);
    Tensor extended({5, 3}, std::move(data));
    const double ext = ctc::ctc_loss(tape, extended, target).value();
    CHECK(ext == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("greedy decode collapse rules") {
    auto frame = [](int v, int arg) {
        std::vector<double> row(static_cast<std::size_t>(v), -10.0);
        row[static_cast<std::size_t>(arg)] = -0.1;
        return row;
    };
    auto build = [&](std::vector<int> args, int v) {
        std::vector<double> data;
        for (int a : args) {
            auto row = frame(v, a);
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({static_cast<int>(args.size()), v}, std::move(data));
    };
    CHECK(ctc::greedy_decode(build({0, 1, 1, 0, 2}, 3)).symbols == std::vector<int>{1, 2});
    CHECK(ctc::greedy_decode(build({0, 0, 0}, 3)).symbols.empty());
    CHECK(ctc::greedy_decode(build({1, 0, 1}, 3)).symbols == std::vector<int>{1, 1});
    // ties break toward the lower symbol id
    Tensor tie({1, 3}, {-1.0, -0.5, -0.5});
    CHECK(ctc::greedy_decode(tie).symbols == std::vector<int>{1});
}

TEST_CASE("wide beam finds the exhaustive-search argmax sequence") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        Rng rng(seed);
        const int t = static_cast<int>(rng.range(2, 5));
        const int v = static_cast<int>(rng.range(2, 3));
        Tensor lp = random_log_probs(t, v, rng);

        std::vector<int> best;
        double best_score = -1e300;
        for (const auto& seq : all_sequences(v, t)) {
            const double s = ctc::log_marginal(lp, seq);
            if (s <= ctc::kLogFloor) continue;
            if (s > best_score) {
                best_score = s;
                best = seq;
            }
        }
        LabelSequence decoded = ctc::beam_decode(lp, nullptr, 1024, 0.0);
        CHECK(decoded.symbols == best);
    }
}

TEST_CASE("an LM forbidding a symbol keeps it out of the decode") {
    Rng rng(17);
    // acoustics that narrowly favor symbol 2 everywhere
    std::vector<double> data;
    for (int t = 0; t < 4; ++t) {
        data.push_back(std::log(0.30));
        data.push_back(std::log(0.32));
        data.push_back(std::log(0.38));
    }
    Tensor lp({4, 3}, std::move(data));
    std::map<std::vector<int>, std::vector<double>> table;
    // order 1, outcomes {1, 2, end}: forbid symbol 2
    table[{}] = {std::log(0.5), ctc::kLogFloor, std::log(0.5)};
    ctc::NGramLM lm = ctc::NGramLM::from_table(1, 0.0, 3, std::move(table));
    LabelSequence out = ctc::beam_decode(lp, &lm, 8, 1.0);
    for (int s : out.symbols) CHECK(s != 2);
    CHECK(ctc::greedy_decode(lp).symbols == std::vector<int>{2});
}

TEST_CASE("beam result never scores below greedy; widening never lowers the score") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        Rng rng(seed + 100);
        const int t = static_cast<int>(rng.range(2, 5));
        const int v = static_cast<int>(rng.range(2, 3));
        Tensor lp = random_log_probs(t, v, rng);
        LabelSequence greedy = ctc::greedy_decode(lp);
        const double greedy_score = ctc::combined_score(lp, greedy.symbols, nullptr, 0.0);
        double prev = -1e300;
        for (int beam : {1, 2, 4, 8, 64}) {
            LabelSequence out = ctc::beam_decode(lp, nullptr, beam, 0.0);
            const double score = ctc::combined_score(lp, out.symbols, nullptr, 0.0);
            CHECK(score >= greedy_score - 1e-12);
            CHECK(score >= prev - 1e-12);
            prev = score;
        }
    }
}

TEST_CASE("train_ngram: forced continuation, symmetry, normalization") {
    // single transcript "ab", order 2, k tiny: P(b|a) -> 1
    ctc::NGramLM lm = ctc::train_ngram({{{1, 2}, 3}}, 2, 1e-9);
    std::vector<int> ctx{1};
    CHECK(std::exp(lm.log_prob(ctx, 2)) == doctest::Approx(1.0).epsilon(1e-6));

    // uniform corpus over {a, b}: P(a|.) == P(b|.) ~ 0.5
    std::vector<LabelSequence> corpus;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        LabelSequence s{{}, 3};
        for (int i = 0; i < 6; ++i) s.symbols.push_back(static_cast<int>(rng.range(1, 2)));
        corpus.push_back(s);
    }
    ctc::NGramLM uni = ctc::train_ngram(corpus, 1, 0.5);
    const double pa = std::exp(uni.log_prob({}, 1));
    const double pb = std::exp(uni.log_prob({}, 2));
    CHECK(pa == doctest::Approx(pb).epsilon(0.15));

    // every seen context's distribution sums to 1
    ctc::NGramLM tri = ctc::train_ngram(corpus, 3, 0.1);
    CHECK(tri.context_count() > 0);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed * 7);
        std::vector<int> c{static_cast<int>(rng.range(0, 2)), static_cast<int>(rng.range(0, 2))};
        double total = 0.0;
        for (int sym = 1; sym <= 2; ++sym) total += std::exp(tri.log_prob(c, sym));
        total += std::exp(tri.log_prob(c, tri.end_id()));
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }

    CHECK_THROWS_AS(ctc::train_ngram(corpus, 0, 0.1), ConfigError);
    CHECK_THROWS_AS(ctc::train_ngram({}, 2, 0.1), ConfigError);
}

TEST_CASE("lm file round-trip preserves every query") {
    Rng rng(77);
    std::vector<LabelSequence> corpus;
    for (int i = 0; i < 30; ++i) {
        LabelSequence s{{}, 5};
        const int len = static_cast<int>(rng.range(1, 7));
        for (int j = 0; j < len; ++j) s.symbols.push_back(static_cast<int>(rng.range(1, 4)));
        corpus.push_back(s);
    }
    ctc::NGramLM lm = ctc::train_ngram(corpus, 3, 0.1);
    const std::string path = (std::filesystem::temp_directory_path() / "csasr_lm_test.txt").string();
    lm.save(path);
    ctc::NGramLM loaded = ctc::NGramLM::load(path);
    CHECK(loaded.order() == 3);
    CHECK(loaded.add_k() == doctest::Approx(0.1));
    CHECK(loaded.alphabet_size() == 5);
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng qr(seed);
        std::vector<int> ctx{static_cast<int>(qr.range(0, 4)), static_cast<int>(qr.range(0, 4))};
        const int sym = static_cast<int>(qr.range(1, 5));
        const int outcome = sym == 5 ? lm.end_id() : sym;
        CHECK(lm.log_prob(ctx, outcome) == doctest::Approx(loaded.log_prob(ctx, outcome)).epsilon(1e-12));
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(ctc::NGramLM::load("/nonexistent/lm.txt"), FormatError);
}
