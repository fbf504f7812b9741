#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqdiff/schedule.hpp"

using namespace seqdiff;

TEST_CASE("parse and names") {
    CHECK(NoiseSchedule::parse("linear").kind == NoiseSchedule::Kind::linear);
    CHECK(NoiseSchedule::parse("sqrt").kind == NoiseSchedule::Kind::sqrt);
    CHECK_THROWS_AS(NoiseSchedule::parse("cosine"), std::invalid_argument);
    CHECK(std::string(NoiseSchedule{NoiseSchedule::Kind::sqrt}.name()) == "sqrt");
}

TEST_CASE("alpha^2 + sigma^2 = 1 on a dense grid") {
    for (auto kind : {NoiseSchedule::Kind::linear, NoiseSchedule::Kind::sqrt}) {
        NoiseSchedule sch{kind};
        for (int i = 0; i <= 10000; ++i) {
            double t = i / 10000.0;
            double a = sch.alpha(t), s = sch.sigma(t);
            CHECK(std::abs(a * a + s * s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("sigma_inverse round-trips") {
    for (auto kind : {NoiseSchedule::Kind::linear, NoiseSchedule::Kind::sqrt}) {
        NoiseSchedule sch{kind};
        for (int i = 0; i <= 1000; ++i) {
            double t = i / 1000.0;
            CHECK(std::abs(sch.sigma_inverse(sch.sigma(t)) - t) <= 1e-10);
            CHECK(std::abs(sch.sigma(sch.sigma_inverse(t)) - t) <= 1e-10);
        }
    }
}

TEST_CASE("sigma is strictly increasing and hits the endpoints") {
    for (auto kind : {NoiseSchedule::Kind::linear, NoiseSchedule::Kind::sqrt}) {
        NoiseSchedule sch{kind};
        CHECK(sch.sigma(0.0) == 0.0);
        CHECK(sch.sigma(1.0) == 1.0);
        double prev = 0.0;
        for (int i = 1; i <= 500; ++i) {
            double s = sch.sigma(i / 500.0);
            CHECK(s > prev);
            prev = s;
        }
    }
    CHECK_THROWS_AS(NoiseSchedule{}.sigma(-0.1), std::domain_error);
    CHECK_THROWS_AS(NoiseSchedule{}.sigma(1.1), std::domain_error);
}

TEST_CASE("sqrt schedule reaches sigma 0.99 at t near 0.9606") {
    NoiseSchedule sch{NoiseSchedule::Kind::sqrt};
    CHECK(std::abs(sch.sigma(0.9606) - 0.99) < 1e-3);
    CHECK(std::abs(sch.sigma_inverse(0.99) - 0.96059601) < 1e-8);
}

TEST_CASE("sigma_prime and beta") {
    NoiseSchedule lin{NoiseSchedule::Kind::linear};
    NoiseSchedule sq{NoiseSchedule::Kind::sqrt};
    CHECK(lin.sigma_prime(0.3) == 1.0);
    CHECK(std::abs(sq.sigma_prime(0.5) - 0.25 * std::pow(0.5, -0.75)) < 1e-14);
    CHECK_THROWS_AS(sq.sigma_prime(0.0), std::domain_error);

    // beta = 2 sigma sigma' / (1 - sigma^2), and finite-difference consistency
    // with -2 d log alpha / dt.
    for (double t : {0.2, 0.5, 0.8}) {
        double h = 1e-6;
        double fd = -2.0 * (std::log(lin.alpha(t + h)) - std::log(lin.alpha(t - h))) /
                    (2.0 * h);
        CHECK(std::abs(lin.beta(t) - fd) < 1e-5 * (1.0 + std::abs(fd)));
    }
    CHECK_THROWS_AS(lin.beta(1.0), std::domain_error);
}

TEST_CASE("effective_weight") {
    NoiseSchedule lin{NoiseSchedule::Kind::linear};
    NoiseSchedule sq{NoiseSchedule::Kind::sqrt};
    CHECK(effective_weight(lin, lin, 0.3) == doctest::Approx(1.0).epsilon(1e-12));
    // dt/dsigma under sqrt is 4 sigma^3.
    CHECK(effective_weight(sq, lin, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    for (double s : {0.1, 0.4, 0.9}) {
        CHECK(effective_weight(sq, lin, s) ==
              doctest::Approx(4.0 * s * s * s).epsilon(1e-12));
        // Inverse direction is the reciprocal.
        CHECK(effective_weight(lin, sq, s) * effective_weight(sq, lin, s) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(effective_weight(sq, lin, 0.0), std::domain_error);
    CHECK_THROWS_AS(effective_weight(sq, lin, 1.0), std::domain_error);
}

TEST_CASE("clipped time sampler stays above t_min and is deterministic") {
    NoiseSchedule lin{NoiseSchedule::Kind::linear};
    ClippedTimeSampler a(lin, 42, 0.6), b(lin, 42, 0.6);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double t = a.sample();
        CHECK(t >= 0.6);
        CHECK(t <= 1.0);
        CHECK(t == b.sample());
        sum += t;
    }
    // mean of U(0.6, 1) is 0.8, sd = 0.4 / sqrt(12)
    double se = 0.4 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / n - 0.8) < 3.0 * se);

    ClippedTimeSampler c(lin, 7);
    sum = 0.0;
    for (int i = 0; i < n; ++i) sum += c.sample();
    se = 1.0 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / n - 0.5) < 3.0 * se);

    CHECK_THROWS_AS(c.set_t_min(1.0), std::domain_error);
    CHECK_THROWS_AS(c.set_t_min(-0.1), std::domain_error);
    c.set_t_min(0.25);
    CHECK(c.t_min() == 0.25);
}
