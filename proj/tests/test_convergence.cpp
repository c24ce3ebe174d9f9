#include <catch2/catch_amalgamated.hpp>

#include "shfl/convergence.hpp"
#include "shfl/rng.hpp"

using namespace shfl;

TEST_CASE("constant series converges at round 3") {
    std::vector<double> s(10, 0.9);
    auto r = detect_convergence(s, 0.1);
    REQUIRE(r.converged_round.has_value());
    CHECK(*r.converged_round == 3);
}

TEST_CASE("worked example: window rule fires at round 4") {
    std::vector<double> s{0.10, 0.50, 0.55, 0.58, 0.59};
    auto r = detect_convergence(s, 0.1);
    REQUIRE(r.converged_round.has_value());
    CHECK(*r.converged_round == 4);
}

TEST_CASE("steep ramp never converges") {
    std::vector<double> s;
    for (int i = 0; i < 20; ++i) s.push_back(0.2 * i);
    CHECK_FALSE(detect_convergence(s, 0.1).converged_round.has_value());
}

TEST_CASE("short series cannot converge") {
    CHECK_FALSE(detect_convergence({0.5, 0.5}, 0.1).converged_round.has_value());
    CHECK_FALSE(detect_convergence({}, 0.1).converged_round.has_value());
}

TEST_CASE("step series converges after the step settles") {
    std::vector<double> s{0.1, 0.1, 0.1, 0.9, 0.9, 0.9};
    auto r = detect_convergence(s, 0.05);
    REQUIRE(r.converged_round.has_value());
    CHECK(*r.converged_round == 3);  // the flat prefix already qualifies

    std::vector<double> rising{0.1, 0.4, 0.7, 0.9, 0.91, 0.92};
    auto r2 = detect_convergence(rising, 0.05);
    REQUIRE(r2.converged_round.has_value());
    CHECK(*r2.converged_round == 6);
}

TEST_CASE("monotone in epsilon: larger tolerance converges no later") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s;
        double acc = 0.1;
        for (int i = 0; i < 40; ++i) {
            acc = std::min(1.0, acc + rng.uniform(0.0, 0.08));
            s.push_back(acc + rng.normal(0, 0.01));
        }
        auto tight = detect_convergence(s, 0.05);
        auto loose = detect_convergence(s, 0.15);
        if (tight.converged_round.has_value()) {
            REQUIRE(loose.converged_round.has_value());
            CHECK(*loose.converged_round <= *tight.converged_round);
        }
    }
}

TEST_CASE("boundary: spread exactly epsilon does not converge") {
    // dyadic values so the spreads are exact in binary floating point
    std::vector<double> s{0.5, 0.5625, 0.625, 0.6875, 0.75};
    CHECK_FALSE(detect_convergence(s, 0.125).converged_round.has_value());
    auto r = detect_convergence(s, 0.1250001);
    REQUIRE(r.converged_round.has_value());
    CHECK(*r.converged_round == 3);
}
