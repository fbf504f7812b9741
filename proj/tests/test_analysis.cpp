#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "seqdiff/analysis.hpp"

using namespace seqdiff;
using ad::Matrix;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("nn recovery: perfect at sigma 0, deterministic, monotone") {
    std::vector<double> grid = {0.0, 0.2, 0.4, 0.6, 0.8, 0.95};
    auto rows = nn_recovery_experiment(60, 8, grid, 4000, 11);
    auto again = nn_recovery_experiment(60, 8, grid, 4000, 11);
    REQUIRE(rows.size() == grid.size());
    CHECK(rows[0].accuracy == 1.0);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].accuracy == again[i].accuracy);
        if (i > 0) CHECK(rows[i].accuracy <= rows[i - 1].accuracy + 0.02);
    }
    CHECK_THROWS_AS(nn_recovery_experiment(1, 4, grid, 10, 0), std::invalid_argument);
}

TEST_CASE("nn recovery: V=2 analytic table matches the closed form") {
    const int D = 6;
    Matrix table = Matrix::Zero(2, D);
    table(0, 0) = 1.0;
    table(1, 0) = -1.0;
    const int n = 20000;
    for (double sigma : {0.3, 0.6, 0.9}) {
        auto rows = nn_recovery_experiment(table, {sigma}, n, 21);
        double p = phi(std::sqrt(1.0 - sigma * sigma) / sigma);
        double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(rows[0].accuracy - p) < 3.0 * se);
    }
}

TEST_CASE("nn recovery: higher dimension helps at fixed V and sigma") {
    auto lo = nn_recovery_experiment(100, 4, {0.7}, 6000, 5);
    auto hi = nn_recovery_experiment(100, 64, {0.7}, 6000, 5);
    CHECK(hi[0].accuracy > lo[0].accuracy);
}

TEST_CASE("schedule equivalence: identity weighting is exact, sqrt close") {
    NoiseSchedule lin{NoiseSchedule::Kind::linear};
    NoiseSchedule sq{NoiseSchedule::Kind::sqrt};
    FrozenLinearModel model(32, 8, 3);
    auto loss = [&](double sigma, Rng& rng) { return model.loss(sigma, rng); };

    auto same = schedule_equivalence_check(lin, lin, loss, 2000, 9);
    CHECK(same.relative_gap < 1e-12);

    auto cross = schedule_equivalence_check(sq, lin, loss, 40000, 9);
    CHECK(cross.lhs > 0.0);
    CHECK(cross.relative_gap < 0.05);

    // Monte-Carlo scaling: more samples should not blow the gap up.
    auto fewer = schedule_equivalence_check(sq, lin, loss, 5000, 9);
    CHECK(std::isfinite(fewer.relative_gap));
    CHECK_THROWS_AS(schedule_equivalence_check(sq, lin, loss, 0, 9),
                    std::invalid_argument);
}

TEST_CASE("frozen linear model is deterministic") {
    FrozenLinearModel a(16, 4, 7), b(16, 4, 7);
    Rng r1(1), r2(1);
    for (int i = 0; i < 10; ++i) CHECK(a.loss(0.5, r1) == b.loss(0.5, r2));
}

TEST_CASE("loss profile on an untrained model: finite, deterministic") {
    Rng init(2);
    DenoiserConfig dcfg;
    dcfg.vocab_size = 12;
    dcfg.embed_dim = 4;
    dcfg.width = 8;
    dcfg.layers = 1;
    dcfg.heads = 2;
    dcfg.ffn_width = 16;
    EmbeddingTable table(12, 4, init);
    Denoiser den(dcfg, init);
    NoiseSchedule lin{NoiseSchedule::Kind::linear};

    std::vector<SeqPair> data = {{{4, 5, 6}, {6, 5, 4}}, {{7, 8}, {8, 7}}};
    std::vector<double> grid = {0.2, 0.5, 0.8};
    auto rows = loss_vs_sigma_profile(den, table, data, grid, lin, 13, 8);
    auto again = loss_vs_sigma_profile(den, table, data, grid, lin, 13, 8);
    REQUIRE(rows.size() == 3);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(std::isfinite(rows[i].mean_loss));
        CHECK(rows[i].mean_loss > 0.0);
        CHECK(rows[i].mean_loss == again[i].mean_loss);
    }
    CHECK_THROWS_AS(loss_vs_sigma_profile(den, table, {}, grid, lin, 13, 8),
                    std::invalid_argument);
}

TEST_CASE("condition reliance probe: shapes and negative-pair requirement") {
    Rng init(3);
    DenoiserConfig dcfg;
    dcfg.vocab_size = 12;
    dcfg.embed_dim = 4;
    dcfg.width = 8;
    dcfg.layers = 1;
    dcfg.heads = 2;
    dcfg.ffn_width = 16;
    EmbeddingTable table(12, 4, init);
    Denoiser den(dcfg, init);
    NoiseSchedule lin{NoiseSchedule::Kind::linear};

    std::vector<SeqPair> data = {{{4, 5}, {6, 7, 8}}, {{5, 4}, {9, 10, 11}},
                                 {{6, 6}, {4, 4, 4}}};
    auto rows = condition_reliance_probe(den, table, data, {0.3, 0.6}, lin, 0.995, 5, 8);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.mse_truth_tau_t));
        CHECK(std::isfinite(r.mse_neg_tau_t));
        CHECK(std::isfinite(r.mse_truth_tau_fixed));
        CHECK(std::isfinite(r.mse_neg_tau_fixed));
    }

    // All targets have distinct lengths: no equal-length negative exists.
    std::vector<SeqPair> odd = {{{4}, {5}}, {{4, 4}, {5, 6}}, {{4, 4, 4}, {5, 6, 7}}};
    odd[1].tgt = {5, 6, 7, 8};
    odd[2].tgt = {5};
    odd[2].tgt = {5, 6, 7, 8, 9};
    odd[0].tgt = {5, 6, 7};
    CHECK_THROWS_AS(
        condition_reliance_probe(den, table, odd, {0.5}, lin, 0.995, 5, 8),
        std::invalid_argument);
}

TEST_CASE("svg writer emits a plot") {
    std::string path = "test_plot.svg";
    write_line_plot_svg(path, {0.0, 0.5, 1.0}, {{1.0, 0.5, 0.25}, {0.0, 0.5, 1.0}},
                        {"a", "b"}, "demo");
    std::ifstream f(path);
    REQUIRE(f.good());
    std::string all((std::istreambuf_iterator<char>(f)), {});
    CHECK(all.find("<svg") != std::string::npos);
    CHECK(all.find("polyline") != std::string::npos);
    f.close();
    std::remove(path.c_str());
    CHECK_THROWS_AS(write_line_plot_svg(path, {}, {}, {}, "x"), std::invalid_argument);
}
