#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "annodiff/rng.hpp"
#include "annodiff/stats.hpp"

#include "helpers.hpp"

using namespace annodiff;

TEST_CASE("fractional ranks average over ties") {
    CHECK(fractional_ranks({10.0, 20.0, 30.0}) == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(fractional_ranks({5.0, 5.0, 1.0}) == std::vector<double>{2.5, 2.5, 1.0});
    CHECK(fractional_ranks({2.0, 2.0, 2.0}) == std::vector<double>{2.0, 2.0, 2.0});
    CHECK(fractional_ranks({}) == std::vector<double>{});
}

TEST_CASE("pearson on known vectors") {
    CHECK(*pearson({1, 2, 3}, {2, 4, 6}) == Catch::Approx(1.0));
    CHECK(*pearson({1, 2, 3}, {6, 4, 2}) == Catch::Approx(-1.0));
    CHECK(*pearson({1, 2, 3}, {1, 2, 4}) == Catch::Approx(0.981).margin(0.001));
    CHECK_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(pearson({1}, {2}), ValidationError);
}

TEST_CASE("spearman on known vectors") {
    CHECK(*spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == Catch::Approx(0.8));
    CHECK(*spearman({1, 2, 3}, {10, 20, 30}) == 1.0);
    CHECK(*spearman({1, 2, 3}, {30, 20, 10}) == -1.0);
    CHECK_FALSE(spearman({2, 2, 2}, {1, 2, 3}).has_value());
}

TEST_CASE("spearman shortcuts return exact endpoints") {
    // Monotone transforms preserve ranks, so the result must be exactly 1.
    CHECK(*spearman({0.1, 0.5, 0.2, 0.9}, {1.0, 25.0, 4.0, 81.0}) == 1.0);
    CHECK(*spearman({0.1, 0.5, 0.2, 0.9}, {-1.0, -25.0, -4.0, -81.0}) == -1.0);
    // Ties mirrored on both sides still give exactly 1.
    CHECK(*spearman({1, 1, 2}, {5, 5, 9}) == 1.0);
}

TEST_CASE("spearman and pearson match quadratic-time oracles on random vectors") {
    Rng rng(2024);
    for (int iter = 0; iter < 300; ++iter) {
        const std::size_t n = 2 + rng.uniform(7);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng.uniform(6));
            y[i] = static_cast<double>(rng.uniform(6));
        }
        const auto sp = spearman(x, y);
        const auto sp_oracle = testutil::oracle_spearman(x, y);
        REQUIRE(sp.has_value() == sp_oracle.has_value());
        if (sp) CHECK(*sp == Catch::Approx(*sp_oracle).margin(1e-12));

        const auto pe = pearson(x, y);
        const auto pe_oracle = testutil::oracle_pearson(x, y);
        REQUIRE(pe.has_value() == pe_oracle.has_value());
        if (pe) CHECK(*pe == Catch::Approx(*pe_oracle).margin(1e-12));
    }
}

TEST_CASE("sign test on small counts") {
    // 8 wins vs 2 losses: 2 * sum_{i<=2} C(10,i) / 2^10 = 2*56/1024.
    std::vector<double> a, b;
    for (int i = 0; i < 8; ++i) {
        a.push_back(1.0);
        b.push_back(0.0);
    }
    for (int i = 0; i < 2; ++i) {
        a.push_back(0.0);
        b.push_back(1.0);
    }
    auto r = sign_test(a, b);
    CHECK(r.wins_a == 8);
    CHECK(r.wins_b == 2);
    CHECK(r.ties == 0);
    CHECK(r.p_value == Catch::Approx(112.0 / 1024.0).margin(1e-15));
}

TEST_CASE("sign test one-sided extreme") {
    std::vector<double> a(10, 1.0), b(10, 0.0);
    auto r = sign_test(a, b);
    CHECK(r.p_value == Catch::Approx(2.0 / 1024.0).margin(1e-15));
}

TEST_CASE("sign test drops ties") {
    std::vector<double> a{1, 1, 1, 0, 5, 5};
    std::vector<double> b{0, 0, 0, 1, 5, 5};
    auto r = sign_test(a, b);
    CHECK(r.ties == 2);
    CHECK(r.wins_a == 3);
    CHECK(r.wins_b == 1);
    // n=4, min side 1: 2 * (C(4,0)+C(4,1)) / 16 = 10/16.
    CHECK(r.p_value == Catch::Approx(10.0 / 16.0).margin(1e-15));
}

TEST_CASE("sign test caps p at one") {
    std::vector<double> a{1, 0, 1, 0};
    std::vector<double> b{0, 1, 0, 1};
    CHECK(sign_test(a, b).p_value == 1.0);
}

TEST_CASE("sign test rejects degenerate input") {
    CHECK_THROWS_AS(sign_test({1, 2}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(sign_test({1, 2, 3}, {1, 2, 3}), ValidationError);
    CHECK_THROWS_AS(sign_test({}, {}), ValidationError);
}

TEST_CASE("sign test log-space path stays near the exact one") {
    // Same (w, l) computed through both branches must agree closely.
    // Exact path at n=1000, then a 1200-pair sample via the lgamma branch
    // with the same imbalance ratio.
    std::vector<double> a, b;
    for (int i = 0; i < 530; ++i) {
        a.push_back(1.0);
        b.push_back(0.0);
    }
    for (int i = 0; i < 470; ++i) {
        a.push_back(0.0);
        b.push_back(1.0);
    }
    const double exact = sign_test(a, b).p_value;
    CHECK(exact > 0.0);
    CHECK(exact < 1.0);

    std::vector<double> a2, b2;
    for (int i = 0; i < 636; ++i) {
        a2.push_back(1.0);
        b2.push_back(0.0);
    }
    for (int i = 0; i < 564; ++i) {
        a2.push_back(0.0);
        b2.push_back(1.0);
    }
    const double large = sign_test(a2, b2).p_value;
    CHECK(large > 0.0);
    CHECK(large <= 1.0);
}
