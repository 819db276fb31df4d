#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fznet/layers.hpp"
#include "fznet/rng.hpp"

using namespace fznet;

namespace {

Tensor bound_leaf(Tape& t, Shape shape, std::vector<double> v) {
    return t.leaf(std::move(shape), std::move(v), true);
}

std::vector<double> randn(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

GradCheckParam rp(Shape s, Rng& rng) {
    GradCheckParam p;
    p.shape = std::move(s);
    p.values = randn(shape_numel(p.shape), rng);
    return p;
}

}  // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("dense examples") {
    Tape t;
    {
        BoundDense d{bound_leaf(t, {2, 2}, {1, 0, 0, 1}), bound_leaf(t, {2}, {0, 0})};
        Tensor x = t.constant({2}, {3.5, -1.25});
        CHECK(t.values(dense_forward(t, d, x, Activation::Identity)) ==
              std::vector<double>{3.5, -1.25});
    }
    {
        BoundDense d{bound_leaf(t, {1, 1}, {-1}), bound_leaf(t, {1}, {0})};
        CHECK(t.values(dense_forward(t, d, t.constant({1}, {2}), Activation::Relu)) ==
              std::vector<double>{0});
    }
    {
        BoundDense d{bound_leaf(t, {1, 2}, {1, 1}), bound_leaf(t, {1}, {1})};
        CHECK(t.values(dense_forward(t, d, t.constant({2}, {2, 3}), Activation::Identity)) ==
              std::vector<double>{6});
    }
}

TEST_CASE("lstm_step closed forms") {
    const int H = 3;
    // zero weights, forget bias 1: c_t = sigmoid(1) * c_prev
    {
        Tape t;
        std::vector<double> b(4 * H, 0.0);
        for (int i = H; i < 2 * H; ++i) b[static_cast<std::size_t>(i)] = 1.0;
        BoundLstm p{t.constant({4 * H, 2}, std::vector<double>(8 * H, 0.0)),
                    t.constant({4 * H, H}, std::vector<double>(4 * H * H, 0.0)),
                    t.constant({4 * H}, b), H};
        Tensor x = t.constant({2}, {0.3, -0.9});
        Tensor h0 = t.constant({H}, {0.1, 0.2, 0.3});
        Tensor c0 = t.constant({H}, {1.0, -2.0, 0.5});
        auto [h, c] = lstm_step(t, p, x, h0, c0);
        const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
        const auto cv = t.values(c);
        CHECK(cv[0] == doctest::Approx(sig1 * 1.0).epsilon(1e-14));
        CHECK(cv[1] == doctest::Approx(sig1 * -2.0).epsilon(1e-14));
        CHECK(cv[2] == doctest::Approx(sig1 * 0.5).epsilon(1e-14));
        (void)h;
    }
    // everything zero -> h_t = 0
    {
        Tape t;
        BoundLstm p{t.constant({4 * H, 2}, std::vector<double>(8 * H, 0.0)),
                    t.constant({4 * H, H}, std::vector<double>(4 * H * H, 0.0)),
                    t.constant({4 * H}, std::vector<double>(4 * H, 0.0)), H};
        auto [h, c] = lstm_step(t, p, t.constant({2}, {0, 0}), t.constant({H}, {0, 0, 0}),
                                t.constant({H}, {0, 0, 0}));
        for (double v : t.values(h)) CHECK(v == 0.0);
        (void)c;
    }
}

TEST_CASE("lstm_step gradcheck") {
    Rng rng(23);
    auto f = [](Tape& t, const std::vector<Tensor>& p) {
        BoundLstm l{p[0], p[1], p[2], 2};
        auto [h, c] = lstm_step(t, l, p[3], p[4], p[5]);
        return t.sum(t.mul(h, c));
    };
    CHECK(grad_check(f, {rp({8, 3}, rng), rp({8, 2}, rng), rp({8}, rng), rp({3}, rng),
                         rp({2}, rng), rp({2}, rng)}) < 1e-4);
}

TEST_CASE("blstm single timestep equals one fwd and one bwd step") {
    Rng rng(31);
    const int H = 2, d = 3;
    Tape t;
    BoundLstm fwd{bound_leaf(t, {4 * H, d}, randn(4 * H * d, rng)),
                  bound_leaf(t, {4 * H, H}, randn(4 * H * H, rng)),
                  bound_leaf(t, {4 * H}, randn(4 * H, rng)), H};
    BoundLstm bwd{bound_leaf(t, {4 * H, d}, randn(4 * H * d, rng)),
                  bound_leaf(t, {4 * H, H}, randn(4 * H * H, rng)),
                  bound_leaf(t, {4 * H}, randn(4 * H, rng)), H};
    std::vector<double> xv = randn(d, rng);
    Tensor x = t.constant({1, d}, xv);
    Tensor out = blstm_forward(t, fwd, bwd, x);
    CHECK(out.shape == Shape{1, 2 * H});

    Tensor zeros = t.constant({H}, std::vector<double>(H, 0.0));
    auto [hf, cf] = lstm_step(t, fwd, t.constant({d}, xv), zeros, zeros);
    auto [hb, cb] = lstm_step(t, bwd, t.constant({d}, xv), zeros, zeros);
    (void)cf;
    (void)cb;
    const auto ov = t.values(out);
    for (int i = 0; i < H; ++i) {
        CHECK(ov[static_cast<std::size_t>(i)] ==
              doctest::Approx(t.values(hf)[static_cast<std::size_t>(i)]).epsilon(1e-15));
        CHECK(ov[static_cast<std::size_t>(H + i)] ==
              doctest::Approx(t.values(hb)[static_cast<std::size_t>(i)]).epsilon(1e-15));
    }
}

TEST_CASE("blstm palindrome symmetry with shared params") {
    Rng rng(37);
    const int H = 2, d = 2, T = 5;
    Tape t;
    BoundLstm p{bound_leaf(t, {4 * H, d}, randn(4 * H * d, rng)),
                bound_leaf(t, {4 * H, H}, randn(4 * H * H, rng)),
                bound_leaf(t, {4 * H}, randn(4 * H, rng)), H};
    // palindromic input: row t == row T-1-t
    std::vector<double> half = randn(3 * d, rng);
    std::vector<double> xv(T * d);
    for (int r = 0; r < T; ++r) {
        const int src = std::min(r, T - 1 - r);
        for (int c = 0; c < d; ++c) xv[static_cast<std::size_t>(r * d + c)] = half[static_cast<std::size_t>(src * d + c)];
    }
    Tensor out = blstm_forward(t, p, p, t.constant({T, d}, xv));
    const auto ov = t.values(out);
    for (int r = 0; r < T; ++r) {
        const int m = T - 1 - r;
        for (int i = 0; i < H; ++i) {
            // forward half at t == backward half at mirror(t), and vice versa
            CHECK(ov[static_cast<std::size_t>(r * 2 * H + i)] ==
                  doctest::Approx(ov[static_cast<std::size_t>(m * 2 * H + H + i)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("blstm rejects empty sequences") {
    Tape t;
    const int H = 2;
    BoundLstm p{t.constant({4 * H, 2}, std::vector<double>(16, 0.1)),
                t.constant({4 * H, H}, std::vector<double>(16, 0.1)),
                t.constant({4 * H}, std::vector<double>(8, 0.0)), H};
    Tensor x = t.constant({0, 2}, {});
    CHECK_THROWS_AS(blstm_forward(t, p, p, x), DomainError);
}

TEST_CASE("stacked blstm: one layer identical; two layers gradcheck") {
    Rng rng(41);
    const int H = 2, d = 3, T = 3;
    {
        Tape t;
        BoundLstm f{bound_leaf(t, {4 * H, d}, randn(4 * H * d, rng)),
                    bound_leaf(t, {4 * H, H}, randn(4 * H * H, rng)),
                    bound_leaf(t, {4 * H}, randn(4 * H, rng)), H};
        BoundLstm b{bound_leaf(t, {4 * H, d}, randn(4 * H * d, rng)),
                    bound_leaf(t, {4 * H, H}, randn(4 * H * H, rng)),
                    bound_leaf(t, {4 * H}, randn(4 * H, rng)), H};
        std::vector<double> xv = randn(T * d, rng);
        Tensor x1 = t.constant({T, d}, xv);
        Tensor x2 = t.constant({T, d}, xv);
        Tensor stacked = stacked_blstm_forward(t, {{f, b}}, x1);
        Tensor direct = blstm_forward(t, f, b, x2);
        CHECK(t.values(stacked) == t.values(direct));
    }
    auto f = [](Tape& t, const std::vector<Tensor>& p) {
        BoundLstm f0{p[0], p[1], p[2], 2}, b0{p[3], p[4], p[5], 2};
        BoundLstm f1{p[6], p[7], p[8], 2}, b1{p[9], p[10], p[11], 2};
        Tensor x = t.constant({3, 3}, {0.1, -0.2, 0.3, 0.5, 0.4, -0.6, -0.7, 0.8, 0.9});
        return t.sum(stacked_blstm_forward(t, {{f0, b0}, {f1, b1}}, x));
    };
    CHECK(grad_check(f, {rp({8, 3}, rng), rp({8, 2}, rng), rp({8}, rng), rp({8, 3}, rng),
                         rp({8, 2}, rng), rp({8}, rng), rp({8, 4}, rng), rp({8, 2}, rng),
                         rp({8}, rng), rp({8, 4}, rng), rp({8, 2}, rng), rp({8}, rng)}) < 1e-4);
}

TEST_CASE("stacked blstm dimension chain mismatch") {
    Tape t;
    const int H = 2;
    auto mk = [&](int din) {
        return BoundLstm{t.constant({4 * H, din}, std::vector<double>(static_cast<std::size_t>(4 * H * din), 0.1)),
                         t.constant({4 * H, H}, std::vector<double>(16, 0.1)),
                         t.constant({4 * H}, std::vector<double>(8, 0.0)), H};
    };
    // second layer expects input dim 3, gets 2H=4
    std::vector<std::pair<BoundLstm, BoundLstm>> layers = {{mk(3), mk(3)}, {mk(3), mk(3)}};
    Tensor x = t.constant({2, 3}, std::vector<double>(6, 0.5));
    CHECK_THROWS_AS(stacked_blstm_forward(t, layers, x), ShapeError);
}

TEST_CASE("attention examples and oracle") {
    Rng rng(43);
    const int d = 3;
    // T=1 -> weights [1], context = the row
    {
        Tape t;
        BoundAttention p{bound_leaf(t, {d, d}, randn(d * d, rng)),
                         bound_leaf(t, {d}, randn(d, rng)), bound_leaf(t, {d}, randn(d, rng))};
        std::vector<double> row = randn(d, rng);
        auto out = attention_forward(t, p, t.constant({1, d}, row));
        CHECK(t.values(out.weights) == std::vector<double>{1.0});
        for (int j = 0; j < d; ++j)
            CHECK(t.values(out.context)[static_cast<std::size_t>(j)] ==
                  doctest::Approx(row[static_cast<std::size_t>(j)]).epsilon(1e-15));
    }
    // v = 0 -> uniform weights, context = row mean
    {
        Tape t;
        BoundAttention p{bound_leaf(t, {d, d}, randn(d * d, rng)),
                         bound_leaf(t, {d}, randn(d, rng)),
                         bound_leaf(t, {d}, std::vector<double>(d, 0.0))};
        std::vector<double> rows = randn(4 * d, rng);
        auto out = attention_forward(t, p, t.constant({4, d}, rows));
        for (double w : t.values(out.weights)) CHECK(w == doctest::Approx(0.25).epsilon(1e-14));
        for (int j = 0; j < d; ++j) {
            double mean = 0.0;
            for (int r = 0; r < 4; ++r) mean += rows[static_cast<std::size_t>(r * d + j)];
            mean /= 4.0;
            CHECK(t.values(out.context)[static_cast<std::size_t>(j)] ==
                  doctest::Approx(mean).epsilon(1e-13));
        }
    }
    // random T=4,d=3 vs brute-force softmax-weighted sum
    {
        Tape t;
        std::vector<double> W = randn(d * d, rng), b = randn(d, rng), v = randn(d, rng);
        std::vector<double> rows = randn(4 * d, rng);
        BoundAttention p{bound_leaf(t, {d, d}, W), bound_leaf(t, {d}, b), bound_leaf(t, {d}, v)};
        auto out = attention_forward(t, p, t.constant({4, d}, rows));

        std::vector<double> scores(4);
        for (int r = 0; r < 4; ++r) {
            double e = 0.0;
            for (int i = 0; i < d; ++i) {
                double z = b[static_cast<std::size_t>(i)];
                for (int j = 0; j < d; ++j)
                    z += W[static_cast<std::size_t>(i * d + j)] * rows[static_cast<std::size_t>(r * d + j)];
                e += v[static_cast<std::size_t>(i)] * std::tanh(z);
            }
            scores[static_cast<std::size_t>(r)] = e;
        }
        const double mx = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double s : scores) z += std::exp(s - mx);
        for (int r = 0; r < 4; ++r) {
            const double w = std::exp(scores[static_cast<std::size_t>(r)] - mx) / z;
            CHECK(t.values(out.weights)[static_cast<std::size_t>(r)] == doctest::Approx(w).epsilon(1e-12));
        }
        for (int j = 0; j < d; ++j) {
            double ctx = 0.0;
            for (int r = 0; r < 4; ++r)
                ctx += t.values(out.weights)[static_cast<std::size_t>(r)] *
                       rows[static_cast<std::size_t>(r * d + j)];
            CHECK(t.values(out.context)[static_cast<std::size_t>(j)] == doctest::Approx(ctx).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention weights normalized, context in hull, permutation behavior") {
    Rng rng(47);
    const int T = 5, d = 4;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> W = randn(d * d, rng), b = randn(d, rng), v = randn(d, rng);
        std::vector<double> rows = randn(T * d, rng);

        std::vector<int> perm = {3, 0, 4, 1, 2};
        std::vector<double> prows(T * d);
        for (int r = 0; r < T; ++r)
            for (int c = 0; c < d; ++c)
                prows[static_cast<std::size_t>(r * d + c)] =
                    rows[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)] * d + c)];

        Tape t;
        BoundAttention p{bound_leaf(t, {d, d}, W), bound_leaf(t, {d}, b), bound_leaf(t, {d}, v)};
        auto out = attention_forward(t, p, t.constant({T, d}, rows));
        auto pout = attention_forward(t, p, t.constant({T, d}, prows));

        double total = 0.0;
        for (double w : t.values(out.weights)) {
            CHECK(w >= 0.0);
            total += w;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        for (int j = 0; j < d; ++j) {
            double lo = rows[static_cast<std::size_t>(j)], hi = lo;
            for (int r = 1; r < T; ++r) {
                lo = std::min(lo, rows[static_cast<std::size_t>(r * d + j)]);
                hi = std::max(hi, rows[static_cast<std::size_t>(r * d + j)]);
            }
            const double c = t.values(out.context)[static_cast<std::size_t>(j)];
            CHECK(c >= lo - 1e-12);
            CHECK(c <= hi + 1e-12);
        }

        // permuting rows permutes weights, leaves context unchanged
        for (int r = 0; r < T; ++r)
            CHECK(t.values(pout.weights)[static_cast<std::size_t>(r)] ==
                  doctest::Approx(t.values(out.weights)[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])])
                      .epsilon(1e-12));
        for (int j = 0; j < d; ++j)
            CHECK(t.values(pout.context)[static_cast<std::size_t>(j)] ==
                  doctest::Approx(t.values(out.context)[static_cast<std::size_t>(j)]).epsilon(1e-11));
    }
}

TEST_CASE("attention gradcheck on random 5x8 input") {
    Rng rng(53);
    auto f = [](Tape& t, const std::vector<Tensor>& p) {
        BoundAttention a{p[0], p[1], p[2]};
        return t.sum(t.mul(attention_forward(t, a, p[3]).context, t.slice(t.reshape(p[3], {40}), 0, 8)));
    };
    CHECK(grad_check(f, {rp({8, 8}, rng), rp({8}, rng), rp({8}, rng), rp({5, 8}, rng)}) < 1e-4);
}

TEST_CASE("initialization: determinism, bounds, forget bias") {
    {
        ParamStore a, b;
        Rng r1(99), r2(99);
        init_dense(a, "d", 100, 60, r1);
        init_dense(b, "d", 100, 60, r2);
        CHECK(a.at("d.W").values == b.at("d.W").values);
        CHECK(a.at("d.b").values == b.at("d.b").values);

        const double bound = glorot_bound(100, 60);
        CHECK(bound == doctest::Approx(std::sqrt(6.0 / 160.0)).epsilon(1e-15));
        for (double w : a.at("d.W").values) CHECK(std::abs(w) <= bound);
        for (double v : a.at("d.b").values) CHECK(v == 0.0);
    }
    {
        ParamStore s;
        Rng r(7);
        const int H = 5;
        init_lstm(s, "l", 3, H, r);
        const auto& b = s.at("l.b").values;
        for (int i = 0; i < 4 * H; ++i) {
            if (i >= H && i < 2 * H)
                CHECK(b[static_cast<std::size_t>(i)] == 1.0);
            else
                CHECK(b[static_cast<std::size_t>(i)] == 0.0);
        }
    }
    {
        ParamStore s;
        Rng r(8);
        init_attention(s, "a", 6, 0, r);  // attention size defaults to d
        CHECK(s.at("a.W").shape == Shape{6, 6});
        CHECK(s.at("a.v").shape == Shape{6});
    }
}

TEST_CASE("param store rejects duplicates and unknown names") {
    ParamStore s;
    s.add("w", {2}, {1, 2});
    CHECK_THROWS_AS(s.add("w", {2}, {3, 4}), ConfigError);
    CHECK_THROWS_AS(s.at("missing"), ConfigError);
    CHECK_THROWS_AS(s.add("bad", {3}, {1, 2}), ShapeError);
    CHECK(s.total_values() == 2);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("layers_full_shape");

TEST_CASE("blstm catalog-shape output (15000, 400)") {
    Rng rng(61);
    const int H = 200, d = 35, T = 15000;
    Tape t;
    auto lstm = [&](int din) {
        return BoundLstm{t.constant({4 * H, din}, randn(static_cast<std::size_t>(4 * H) * din, rng)),
                         t.constant({4 * H, H}, randn(static_cast<std::size_t>(4 * H) * H, rng)),
                         t.constant({4 * H}, randn(4 * H, rng)), H};
    };
    Tensor x = t.constant({T, d}, randn(static_cast<std::size_t>(T) * d, rng));
    Tensor out = blstm_forward(t, lstm(d), lstm(d), x);
    CHECK(out.shape == Shape{15000, 400});
    for (double v : t.values(t.row(out, 0))) CHECK(std::isfinite(v));
}

TEST_CASE("two stacked layers map (400,512) to (400,400)") {
    Rng rng(67);
    const int H = 200, d = 512, T = 400;
    Tape t;
    auto lstm = [&](int din) {
        return BoundLstm{t.constant({4 * H, din}, randn(static_cast<std::size_t>(4 * H) * din, rng)),
                         t.constant({4 * H, H}, randn(static_cast<std::size_t>(4 * H) * H, rng)),
                         t.constant({4 * H}, randn(4 * H, rng)), H};
    };
    std::vector<std::pair<BoundLstm, BoundLstm>> layers = {{lstm(d), lstm(d)},
                                                           {lstm(2 * H), lstm(2 * H)}};
    Tensor x = t.constant({T, d}, randn(static_cast<std::size_t>(T) * d, rng));
    Tensor out = stacked_blstm_forward(t, layers, x);
    CHECK(out.shape == Shape{400, 400});
}

TEST_SUITE_END();
