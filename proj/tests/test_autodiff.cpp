#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csasr/tape.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using csasr::ag::Tape;
using csasr::ag::Tensor;
using csasr::rng::Rng;

TEST_CASE("matmul identity and hand arithmetic") {
    Tape t;
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor y = t.matmul(eye, a);
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[1] == 2.0);
    CHECK(y.data()[2] == 3.0);
    CHECK(y.data()[3] == 4.0);

    Tensor r({1, 2}, {1, 2});
    Tensor c({2, 1}, {3, 4});
    CHECK(t.matmul(r, c).value() == 11.0);
}

TEST_CASE("matmul gradient of sum(a*b) with b identity is ones") {
    Tensor a({2, 2}, {1, 2, 3, 4}, true);
    Tensor b({2, 2}, {1, 0, 0, 1});
    Tape t;
    Tensor loss = t.sum(t.matmul(a, b));
    t.backward(loss);
    for (double g : a.grad()) CHECK(g == doctest::Approx(1.0).epsilon(1e-12));

    auto forward = [&]() {
        Tape ft;
        return ft.sum(ft.matmul(a, b)).value();
    };
    std::string msg;
    CHECK_MESSAGE(gradcheck::check({a}, forward, &msg, 1e-6), msg);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    Tensor a({2, 3}, std::vector<double>(6, 0.0));
    Tensor b({2, 2}, std::vector<double>(4, 0.0));
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), csasr::DimensionError);
    try {
        t.matmul(a, b);
    } catch (const csasr::DimensionError& e) {
        CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("elementwise fixed points") {
    Tape t;
    CHECK(t.sigmoid(Tensor::scalar(0.0)).value() == 0.5);
    CHECK(t.tanh(Tensor::scalar(0.0)).value() == 0.0);
}

TEST_CASE("sigmoid derivative at zero is 0.25") {
    Tensor x = Tensor::scalar(0.0, true);
    Tape t;
    Tensor y = t.sigmoid(x);
    t.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));

    auto forward = [&]() {
        Tape ft;
        return ft.sigmoid(x).value();
    };
    std::string msg;
    CHECK_MESSAGE(gradcheck::check({x}, forward, &msg), msg);
}

TEST_CASE("log of non-positive raises numeric-domain error") {
    Tape t;
    CHECK_THROWS_AS(t.log(Tensor::scalar(0.0)), csasr::NumericDomainError);
    CHECK_THROWS_AS(t.log(Tensor::scalar(-1.0)), csasr::NumericDomainError);
}

TEST_CASE("log_softmax uniform row and stability") {
    Tape t;
    Tensor flat({1, 2}, {0.0, 0.0});
    Tensor lp = t.log_softmax(flat);
    CHECK(lp.data()[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(lp.data()[1] == doctest::Approx(std::log(0.5)).epsilon(1e-12));

    Tensor wide({1, 2}, {1000.0, 0.0});
    Tensor lw = t.log_softmax(wide);
    CHECK(std::isfinite(lw.data()[0]));
    CHECK(std::isfinite(lw.data()[1]));
    CHECK(lw.data()[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(lw.data()[1] == doctest::Approx(-1000.0).epsilon(1e-9));
}

TEST_CASE("log_softmax rows exponentiate-sum to one") {
    Rng rng(7);
    Tensor logits = testutil::random_tensor({5, 4}, rng, -3.0, 3.0, false);
    Tape t;
    Tensor lp = t.log_softmax(logits);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += std::exp(lp(i, j));
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("NLL gradient through log_softmax is softmax minus onehot") {
    Tensor logits({1, 2}, {0.0, 0.0}, true);
    Tape t;
    Tensor lp = t.log_softmax(logits);
    // NLL of class 0 = -lp[0,0]
    Tensor loss = t.neg(t.slice_cols(lp, 0, 1));
    t.backward(t.sum(loss));
    CHECK(logits.grad()[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(logits.grad()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward of sum gives ones, of sum of squares gives 2x") {
    Tensor x({3}, {1, 2, 3}, true);
    {
        Tape t;
        t.backward(t.sum(x));
        CHECK(x.grad() == std::vector<double>{1, 1, 1});
    }
    x.clear_grad();
    {
        Tape t;
        t.backward(t.sum(t.mul(x, x)));
        CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(1e-12));
    }
}

TEST_CASE("second backward without reset is an error; reset allows reuse") {
    Tensor x({2}, {1.0, 2.0}, true);
    Tape t;
    Tensor loss = t.sum(x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), csasr::ContractError);
    t.reset();
    CHECK(t.node_count() == 0);
    Tensor loss2 = t.sum(x);
    t.backward(loss2);  // no throw
}

TEST_CASE("non-scalar loss and empty tape are contract errors") {
    Tensor x({2}, {1.0, 2.0}, true);
    Tape t;
    Tensor y = t.mul(x, x);
    CHECK_THROWS_AS(t.backward(y), csasr::ContractError);
    Tape empty;
    CHECK_THROWS_AS(empty.backward(Tensor::scalar(1.0, true)), csasr::ContractError);
}

TEST_CASE("gradients accumulate additively across fan-out") {
    Tensor x = Tensor::scalar(3.0, true);
    Tape t;
    // y = x*x + 2x consumes x three times
    Tensor loss = t.add(t.mul(x, x), t.mul_scalar(x, 2.0));
    t.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("leaf not reachable from the loss reads zero gradient") {
    Tensor used = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::scalar(5.0, true);
    Tape t;
    Tensor a = t.mul(used, used);
    Tensor b = t.mul(unused, unused);  // on tape, not part of loss
    (void)b;
    t.backward(a);
    CHECK(used.grad()[0] == doctest::Approx(4.0));
    CHECK(unused.grad()[0] == 0.0);
}

TEST_CASE("scalar-with-tensor broadcasting for add and mul") {
    Tensor x({2, 2}, {1, 2, 3, 4}, true);
    Tensor s = Tensor::scalar(2.0, true);
    Tape t;
    Tensor loss = t.sum(t.mul(s, t.add(x, s)));
    t.backward(loss);
    // loss = sum(2*(x+2)) = 2*sum(x) + 16 -> dx = 2, ds = sum(x+2) + sum(2) wait:
    // d/ds [s*(x_i+s)] = (x_i+s) + s -> sum over i: sum(x)+4s+4s
    CHECK(x.grad() == std::vector<double>{2, 2, 2, 2});
    CHECK(s.grad()[0] == doctest::Approx(10.0 + 8.0 + 8.0).epsilon(1e-12));

    Tensor y({3}, {1, 2, 3});
    CHECK_THROWS_AS(t.add(x, y), csasr::DimensionError);
}

TEST_CASE("slice, concat and reshape round gradients back to the right cells") {
    Rng rng(11);
    Tensor x = testutil::random_tensor({4, 3}, rng);
    auto forward = [&]() {
        Tape ft;
        Tensor top = ft.slice_rows(x, 0, 2);
        Tensor bottom = ft.slice_rows(x, 2, 2);
        std::vector<Tensor> parts{bottom, top};
        Tensor shuffled = ft.concat_rows(parts);
        Tensor wide = ft.reshape(shuffled, {2, 6});
        Tensor left = ft.slice_cols(wide, 0, 3);
        Tensor right = ft.slice_cols(wide, 3, 3);
        return ft.sum(ft.mul(left, right)).value();
    };
    Tape t;
    Tensor top = t.slice_rows(x, 0, 2);
    Tensor bottom = t.slice_rows(x, 2, 2);
    std::vector<Tensor> parts{bottom, top};
    Tensor wide = t.reshape(t.concat_rows(parts), {2, 6});
    Tensor loss = t.sum(t.mul(t.slice_cols(wide, 0, 3), t.slice_cols(wide, 3, 3)));
    t.backward(loss);
    std::string msg;
    CHECK_MESSAGE(gradcheck::check({x}, forward, &msg), msg);
}

TEST_CASE("property: composite graphs match finite differences over random seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        Tensor a = testutil::random_tensor({3, 4}, rng);
        Tensor b = testutil::random_tensor({4, 2}, rng);
        Tensor c = testutil::random_tensor({3, 2}, rng);
        Tensor s = Tensor::scalar(rng.uniform(-2.0, 2.0), true);
        auto build = [&](Tape& t) {
            Tensor h = t.tanh(t.matmul(a, b));
            Tensor g = t.sigmoid(t.add(h, c));
            Tensor e = t.exp(t.mul_scalar(g, 0.5));
            Tensor l = t.log(t.add_scalar(e, 1.0));
            Tensor m = t.mean_rows(t.mul(l, s));
            return t.sum(t.log_softmax(t.concat_cols(m, t.neg(m))));
        };
        Tape t;
        Tensor loss = build(t);
        t.backward(loss);
        auto forward = [&]() {
            Tape ft;
            return build(ft).value();
        };
        std::string msg;
        CHECK_MESSAGE(gradcheck::check({a, b, c, s}, forward, &msg), msg);
        // forward determinism, bitwise
        CHECK(forward() == loss.value());
    }
}

TEST_CASE("bce_with_logits value and gradient") {
    Tape t;
    CHECK(t.bce_with_logits(Tensor::scalar(0.0), 1.0).value() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // saturated logits stay finite
    CHECK(std::isfinite(t.bce_with_logits(Tensor::scalar(800.0), 0.0).value()));
    CHECK(std::isfinite(t.bce_with_logits(Tensor::scalar(-800.0), 1.0).value()));

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        Tensor z = Tensor::scalar(rng.uniform(-3.0, 3.0), true);
        const double target = rng.uniform() < 0.5 ? 0.0 : 1.0;
        Tape bt;
        Tensor loss = bt.bce_with_logits(z, target);
        bt.backward(loss);
        auto forward = [&]() {
            Tape ft;
            return ft.bce_with_logits(z, target).value();
        };
        std::string msg;
        CHECK_MESSAGE(gradcheck::check({z}, forward, &msg), msg);
    }
}

TEST_CASE("grl is identity forward and sign flip backward") {
    Rng rng(3);
    Tensor x = testutil::random_tensor({2, 3}, rng);
    Tape t;
    Tensor y = t.grl(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

    // d/dx [grl(x)]^2 at x=3 -> -6
    Tensor x3 = Tensor::scalar(3.0, true);
    Tape t2;
    Tensor g = t2.grl(x3);
    t2.backward(t2.mul(g, g));
    CHECK(x3.grad()[0] == doctest::Approx(-6.0).epsilon(1e-12));
}

TEST_CASE("grl gradient equals minus the grl-free gradient for composite graphs") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        Tensor x = testutil::random_tensor({3, 3}, rng);
        auto build = [&](Tape& t, bool with_grl) {
            Tensor h = with_grl ? t.grl(x) : t.add_scalar(x, 0.0);
            return t.sum(t.sigmoid(t.mul(h, t.tanh(h))));
        };
        Tape ta;
        ta.backward(build(ta, true));
        std::vector<double> g_with = x.grad();
        x.clear_grad();
        Tape tb;
        tb.backward(build(tb, false));
        const auto& g_without = x.grad();
        for (std::size_t i = 0; i < g_with.size(); ++i) {
            CHECK(std::abs(g_with[i] + g_without[i]) <= 1e-12);
        }
        x.clear_grad();
    }
}
