#include <cmath>
#include <random>

#include "doctest.h"
#include "probemb/error.hpp"
#include "probemb/optim.hpp"

using namespace probemb;

TEST_CASE("zero gradient leaves parameters unchanged") {
    auto state = AdamState::create(3, 0.1);
    std::vector<double> p{1.0, -2.0, 3.5};
    const auto before = p;
    const std::vector<double> g(3, 0.0);
    for (int i = 0; i < 5; ++i) adam_update(state, p, g);
    CHECK(p == before);
}

TEST_CASE("first step moves by about lr") {
    auto state = AdamState::create(1, 0.1);
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    adam_update(state, p, g);
    // m_hat = 1, v_hat = 1 at t = 1.
    CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(state.step == 1);
}

TEST_CASE("matches a hand-rolled bias-corrected Adam") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    auto state = AdamState::create(4, 0.01);
    std::vector<double> p{0.3, -0.2, 1.0, 0.0}, ref = p, m(4), v(4);
    for (int t = 1; t <= 30; ++t) {
        std::vector<double> g(4);
        for (double& x : g) x = n(rng);
        adam_update(state, p, g);
        for (std::size_t i = 0; i < 4; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("identical runs are bit-identical") {
    auto run = [] {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> n(0, 1);
        std::vector<double> p(6, 0.5);
        auto state = AdamState::create(6, 0.05);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> g(6);
            for (double& x : g) x = n(rng);
            adam_update(state, p, g);
        }
        return p;
    };
    CHECK(run() == run());
}

TEST_CASE("adam_step is the pure form of adam_update") {
    auto state = AdamState::create(2, 0.1);
    std::vector<double> p{1, 2};
    const std::vector<double> g{0.5, -1};
    const auto [next, q] = adam_step(state, p, g);
    adam_update(state, p, g);
    CHECK(q == p);
    CHECK(next.m == state.m);
    CHECK(next.step == state.step);
}

TEST_CASE("gradient scaling keeps the step-1 direction") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> n(0, 1);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> g(5);
        for (double& x : g) x = n(rng);
        const double c = std::exp(n(rng) * 3);
        std::vector<double> scaled = g;
        for (double& x : scaled) x *= c;
        std::vector<double> p1(5, 0.0), p2(5, 0.0);
        auto s1 = AdamState::create(5, 0.01);
        auto s2 = AdamState::create(5, 0.01);
        adam_update(s1, p1, g);
        adam_update(s2, p2, scaled);
        for (std::size_t i = 0; i < 5; ++i) CHECK(std::signbit(p1[i]) == std::signbit(p2[i]));
    }
}

TEST_CASE("loss decreases on a convex quadratic") {
    std::vector<double> p{1.0, -2.0, 0.5};
    auto loss = [](const std::vector<double>& x) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
    };
    auto state = AdamState::create(3, 0.01);
    double prev = loss(p);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> g(3);
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * p[i];
        adam_update(state, p, g);
        const double cur = loss(p);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("lazy update touches only active coordinates") {
    auto lazy = AdamState::create(4, 0.1);
    auto dense = AdamState::create(2, 0.1);
    std::vector<double> p{1, 2, 3, 4};
    std::vector<double> q{2, 4};
    const std::vector<double> g{9, 0.5, 9, -1};
    const std::vector<std::size_t> active{1, 3};
    for (int t = 0; t < 3; ++t) {
        adam_update_lazy(lazy, p, g, active);
        adam_update(dense, q, std::vector<double>{0.5, -1});
    }
    CHECK(p[0] == 1);
    CHECK(p[2] == 3);
    CHECK(lazy.m[0] == 0);
    CHECK(lazy.v[2] == 0);
    CHECK(p[1] == q[0]);
    CHECK(p[3] == q[1]);
    CHECK(lazy.step == 3);

    const std::vector<std::size_t> bad{4};
    CHECK_THROWS_AS(adam_update_lazy(lazy, p, g, bad), Error);
}

TEST_CASE("adam rejects bad input") {
    auto state = AdamState::create(2, 0.1);
    std::vector<double> p{0, 0};
    auto code_of = [&](std::vector<double> g) {
        try {
            adam_update(state, p, g);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    CHECK(code_of({1}) == ErrorCode::LengthMismatch);
    CHECK(code_of({1, std::nan("")}) == ErrorCode::NonFiniteGradient);
    CHECK(code_of({INFINITY, 0}) == ErrorCode::NonFiniteGradient);
    CHECK(state.step == 0);
    CHECK(p == std::vector<double>{0, 0});
}

TEST_CASE("finite difference checker") {
    const LossFn quad = [](std::span<const double> x) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
    };
    const std::vector<double> p{0.3, -1.2, 2.5, 0.01};
    std::vector<double> g(4);
    for (std::size_t i = 0; i < 4; ++i) g[i] = 2 * p[i];
    CHECK(finite_diff_check(quad, p, g) < 1e-8);

    std::vector<double> wrong = g;
    for (double& x : wrong) x *= 2;
    CHECK(finite_diff_check(quad, p, wrong) == doctest::Approx(0.5).epsilon(1e-3));

    const LossFn bad = [](std::span<const double>) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_check(bad, p, g), Error);
}
