#include <doctest.h>

#include <cmath>
#include <vector>

#include "fznet/rng.hpp"
#include "fznet/tensor.hpp"

using namespace fznet;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("matmul identity") {
    Tape t;
    Tensor i2 = t.constant({2, 2}, {1, 0, 0, 1});
    Tensor a = t.constant({2, 2}, {1, 2, 3, 4});
    CHECK(t.values(t.matmul(i2, a)) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul hand computation") {
    Tape t;
    Tensor a = t.constant({2, 2}, {1, 2, 3, 4});
    Tensor b = t.constant({2, 1}, {5, 6});
    Tensor c = t.matmul(a, b);
    CHECK(c.shape == Shape{2, 1});
    CHECK(t.values(c) == std::vector<double>{17, 39});
}

TEST_CASE("matmul zero annihilates") {
    Tape t;
    Tensor z = t.constant({2, 3}, std::vector<double>(6, 0.0));
    Tensor b = t.constant({3, 2}, {1, 2, 3, 4, 5, 6});
    for (double v : t.values(t.matmul(z, b))) CHECK(v == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    Tensor a = t.constant({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = t.constant({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
}

TEST_CASE("elementwise examples") {
    Tape t;
    CHECK(t.values(t.relu(t.constant({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
    CHECK(t.value0(t.sigmoid(t.constant({1}, {0}))) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.value0(t.tanh(t.constant({1}, {1}))) ==
          doctest::Approx(0.7615941559557649).epsilon(1e-14));
}

TEST_CASE("elementwise rejects non-broadcastable shapes") {
    Tape t;
    Tensor a = t.constant({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = t.constant({2}, {1, 2});
    CHECK_THROWS_AS(t.add(a, b), ShapeError);
}

TEST_CASE("softmax uniform, closed form, stability") {
    Tape t;
    for (double v : t.values(t.softmax(t.constant({3}, {0, 0, 0}))))
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    auto w = t.values(t.softmax(t.constant({3}, {std::log(1.0), std::log(2.0), std::log(3.0)})));
    CHECK(w[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

    auto s = t.values(t.softmax(t.constant({2}, {1000, 0})));
    CHECK(std::isfinite(s[0]));
    CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax empty input is a domain error") {
    Tape t;
    Tensor e = t.constant({0}, {});
    CHECK_THROWS_AS(t.softmax(e), DomainError);
}

TEST_CASE("softmax shift invariance and normalization") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(5);
        for (auto& v : x) v = rng.normal();
        std::vector<double> shifted = x;
        for (auto& v : shifted) v += 3.7;
        Tape t;
        auto a = t.values(t.softmax(t.constant({5}, x)));
        auto b = t.values(t.softmax(t.constant({5}, shifted)));
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i] > 0.0);
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
            total += a[i];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("concat examples") {
    Tape t;
    Tensor a = t.constant({1, 2}, {1, 2});
    Tensor b = t.constant({1, 1}, {3});
    Tensor c = t.concat({a, b}, 1);
    CHECK(c.shape == Shape{1, 3});
    CHECK(t.values(c) == std::vector<double>{1, 2, 3});

    CHECK(t.values(t.concat({a}, 1)) == t.values(a));

    Tensor bad = t.constant({2, 1}, {3, 4});
    CHECK_THROWS_AS(t.concat({a, bad}, 1), ShapeError);
}

TEST_CASE("gradient of concat then sum is ones per part") {
    Tape t;
    Tensor a = t.leaf({2}, {1.5, -0.5}, true);
    Tensor b = t.leaf({3}, {2, 3, 4}, true);
    t.backward(t.sum(t.concat({a, b}, 0)));
    CHECK(t.grad(a) == std::vector<double>{1, 1});
    CHECK(t.grad(b) == std::vector<double>{1, 1, 1});
}

TEST_CASE("max_over_time values and tie gradient") {
    Tape t;
    Tensor h = t.constant({2, 2}, {1, 5, 3, 2});
    CHECK(t.values(t.max_over_time(h)) == std::vector<double>{3, 5});

    Tensor one = t.constant({1, 3}, {7, 8, 9});
    CHECK(t.values(t.max_over_time(one)) == std::vector<double>{7, 8, 9});

    // equal rows: gradient goes to the first row only
    Tensor eq = t.leaf({2, 2}, {4, 4, 4, 4}, true);
    t.backward(t.sum(t.max_over_time(eq)));
    CHECK(t.grad(eq) == std::vector<double>{1, 1, 0, 0});

    Tensor empty = t.constant({0, 2}, {});
    CHECK_THROWS_AS(t.max_over_time(empty), DomainError);
}

TEST_CASE("max_over_time dominates every row") {
    Rng rng(5);
    std::vector<double> v(4 * 3);
    for (auto& x : v) x = rng.normal();
    Tape t;
    Tensor h = t.constant({4, 3}, v);
    auto m = t.values(t.max_over_time(h));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) CHECK(m[static_cast<std::size_t>(c)] >= v[static_cast<std::size_t>(r * 3 + c)]);
}

TEST_CASE("backward basics") {
    {
        Tape t;
        Tensor w = t.leaf({2, 2}, {1, 2, 3, 4}, true);
        t.backward(t.sum(w));
        CHECK(t.grad(w) == std::vector<double>{1, 1, 1, 1});
    }
    {
        Tape t;
        Tensor x = t.leaf({1}, {3}, true);
        t.backward(t.mul(x, x));
        CHECK(t.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-14));
    }
    {
        Tape t;
        Tensor x = t.leaf({2}, {1, 2}, true);
        CHECK_THROWS_AS(t.backward(t.add(x, x)), ShapeError);  // non-scalar loss
    }
}

TEST_CASE("fan-out accumulation: f(x)=x+x^2 has gradient 1+2x") {
    for (double x0 : {-1.5, 0.0, 0.7, 2.0}) {
        Tape t;
        Tensor x = t.leaf({1}, {x0}, true);
        t.backward(t.add(x, t.mul(x, x)));
        CHECK(t.grad(x)[0] == doctest::Approx(1.0 + 2.0 * x0).epsilon(1e-13));
    }
}

TEST_CASE("random 3-layer MLP matches finite differences") {
    Rng rng(17);
    auto rp = [&](Shape s) {
        GradCheckParam p;
        p.shape = s;
        p.values.resize(shape_numel(s));
        for (auto& v : p.values) v = rng.normal();
        return p;
    };
    std::vector<GradCheckParam> params = {rp({4, 3}), rp({4}), rp({3, 4}),
                                          rp({3}), rp({1, 3}), rp({1}), rp({3})};
    auto f = [](Tape& t, const std::vector<Tensor>& p) {
        Tensor h1 = t.tanh(t.add(t.matvec(p[0], p[6]), p[1]));
        Tensor h2 = t.relu(t.add(t.matvec(p[2], h1), p[3]));
        return t.sum(t.add(t.matvec(p[4], h2), p[5]));
    };
    CHECK(grad_check(f, params) < 1e-4);
}

TEST_CASE("primitive ops match finite differences over 10 seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(mix_seed(seed, 0x1234));
        auto rp = [&](Shape s) {
            GradCheckParam p;
            p.shape = s;
            p.values.resize(shape_numel(s));
            for (auto& v : p.values) v = rng.normal();
            return p;
        };
        auto f = [](Tape& t, const std::vector<Tensor>& p) {
            Tensor m = t.matmul(p[0], p[1]);               // [2,2]
            Tensor s = t.softmax(t.reshape(m, {4}));       // [4]
            Tensor u = t.mul(t.tanh(s), t.sigmoid(p[2]));  // [4]
            Tensor w = t.max_over_time(t.reshape(t.concat({u, p[2]}, 0), {4, 2}));
            return t.sum(t.add(w, t.scale(t.relu(t.slice(p[2], 0, 2)), 0.5)));
        };
        CHECK(grad_check(f, {rp({2, 3}), rp({3, 2}), rp({4})}) < 1e-4);
    }
}

TEST_CASE("grad_check trivial quadratic") {
    auto f = [](Tape& t, const std::vector<Tensor>& p) { return t.mul(p[0], p[0]); };
    CHECK(grad_check(f, {GradCheckParam{{1}, {2.0}}}) < 1e-8);
}

TEST_CASE("mse_loss value and gradient") {
    Tape t;
    Tensor p = t.leaf({2}, {0.0, 1.0}, true);
    Tensor l = t.mse_loss(p, {3.0, 1.0});
    CHECK(t.value0(l) == doctest::Approx(4.5).epsilon(1e-14));
    t.backward(l);
    CHECK(t.grad(p)[0] == doctest::Approx(2.0 * (0.0 - 3.0) / 2.0).epsilon(1e-13));
    CHECK(t.grad(p)[1] == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("div_scalar and broadcast add") {
    Tape t;
    Tensor a = t.constant({3}, {2, 4, 6});
    Tensor s = t.constant({1}, {2});
    CHECK(t.values(t.div_scalar(a, s)) == std::vector<double>{1, 2, 3});

    Tensor m = t.constant({2, 2}, {1, 2, 3, 4});
    Tensor v = t.constant({2}, {10, 20});
    CHECK(t.values(t.add(m, v)) == std::vector<double>{11, 22, 13, 24});
}

TEST_SUITE_END();
