#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "seqdiff/autodiff.hpp"
#include "seqdiff/rng.hpp"

using namespace seqdiff;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
    return m;
}

// Central-difference check of d(scalar)/d(leaf) for every leaf entry.
void check_gradients(const std::vector<Var>& leaves,
                     const std::function<Var(Tape&)>& scalar_fn,
                     double h = 1e-6, double tol = 5e-6) {
    for (const auto& l : leaves) l->zero_grad();
    {
        Tape tape;
        Var out = scalar_fn(tape);
        REQUIRE(out->value.rows() == 1);
        REQUIRE(out->value.cols() == 1);
        tape.backward(out);
    }
    auto eval = [&]() {
        Tape tape;
        return scalar_fn(tape)->value(0, 0);
    };
    for (const auto& l : leaves) {
        for (Eigen::Index i = 0; i < l->value.size(); ++i) {
            double orig = l->value(i);
            l->value(i) = orig + h;
            double up = eval();
            l->value(i) = orig - h;
            double down = eval();
            l->value(i) = orig;
            double fd = (up - down) / (2.0 * h);
            double got = l->grad(i);
            double denom = std::max(1.0, std::abs(fd) + std::abs(got));
            CHECK(std::abs(fd - got) / denom <= tol);
        }
    }
}

}  // namespace

TEST_CASE("value sanity: softmax, layernorm, gelu") {
    Rng rng(1);
    Tape tape;
    Var x = tape.constant(randn(3, 5, rng));
    Var s = ad::softmax_rows(tape, x, nullptr);
    for (int i = 0; i < 3; ++i) {
        CHECK(s->value.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s->value.row(i).minCoeff() > 0.0);
    }

    Matrix mask = Matrix::Zero(3, 5);
    mask.col(4).setConstant(-1e9);
    Var sm = ad::softmax_rows(tape, x, &mask);
    CHECK(sm->value.col(4).maxCoeff() < 1e-12);

    Var g = tape.constant(Matrix::Ones(1, 5));
    Var b = tape.constant(Matrix::Zero(1, 5));
    Var ln = ad::layernorm_rows(tape, x, g, b);
    for (int i = 0; i < 3; ++i) {
        CHECK(ln->value.row(i).mean() == doctest::Approx(0.0).epsilon(1e-10));
        double var = ln->value.row(i).squaredNorm() / 5.0;
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    Var zero = tape.constant(Matrix::Zero(1, 1));
    CHECK(ad::gelu(tape, zero)->value(0, 0) == 0.0);
    Var big = tape.constant(Matrix::Constant(1, 1, 10.0));
    CHECK(ad::gelu(tape, big)->value(0, 0) == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("gradients: linear algebra ops") {
    Rng rng(2);
    Var a = ad::leaf(randn(3, 4, rng));
    Var b = ad::leaf(randn(4, 5, rng));
    Var c = ad::leaf(randn(3, 5, rng));
    Matrix w = randn(3, 5, rng);

    check_gradients({a, b, c}, [&](Tape& t) {
        Var prod = ad::matmul(t, a, b);
        Var mixed = ad::add(t, prod, c);
        mixed = ad::sub(t, mixed, ad::scale(t, c, 0.3));
        mixed = ad::cmul(t, mixed, t.constant(w));
        return ad::sum_all(t, mixed);
    });

    Var d = ad::leaf(randn(5, 4, rng));
    check_gradients({a, d}, [&](Tape& t) {
        return ad::sum_all(t, ad::cmul(t, ad::matmul_nt(t, a, d), t.constant(w.topRows(3))));
    });
}

TEST_CASE("gradients: broadcast, slice, concat") {
    Rng rng(3);
    Var a = ad::leaf(randn(4, 6, rng));
    Var row = ad::leaf(randn(1, 6, rng));
    Matrix w = randn(4, 6, rng);

    check_gradients({a, row}, [&](Tape& t) {
        Var x = ad::add_rowvec(t, a, row);
        x = ad::add_const(t, x, w);
        Var br = ad::broadcast_row(t, row, 4);
        x = ad::add(t, x, br);
        Var left = ad::slice_cols(t, x, 0, 3);
        Var right = ad::slice_cols(t, x, 3, 3);
        Var back = ad::concat_cols(t, {right, left});
        return ad::sum_all(t, ad::cmul(t, back, t.constant(w)));
    });
}

TEST_CASE("gradients: gelu, softmax, layernorm") {
    Rng rng(4);
    Var a = ad::leaf(randn(3, 6, rng));
    Var g = ad::leaf(Matrix::Ones(1, 6) + 0.1 * randn(1, 6, rng));
    Var b = ad::leaf(0.1 * randn(1, 6, rng));
    Matrix w = randn(3, 6, rng);
    Matrix mask = Matrix::Zero(3, 6);
    mask.col(5).setConstant(-1e9);

    check_gradients({a, g, b}, [&](Tape& t) {
        Var x = ad::gelu(t, a);
        x = ad::layernorm_rows(t, x, g, b);
        x = ad::softmax_rows(t, x, &mask);
        return ad::sum_all(t, ad::cmul(t, x, t.constant(w)));
    });
}

TEST_CASE("gradients: gather, neg_sqdist, losses") {
    Rng rng(5);
    Var table = ad::leaf(randn(7, 4, rng));
    Var z = ad::leaf(randn(3, 4, rng));
    std::vector<int> ids = {2, 0, 5};
    Eigen::VectorXd wts(3);
    wts << 0.5, 1.0, 2.0;
    Matrix w = randn(3, 7, rng);

    check_gradients({table, z}, [&](Tape& t) {
        Var rows = ad::gather_rows(t, table, ids);
        Var logits = ad::neg_sqdist_logits(t, z, table);
        Var ce = ad::cross_entropy_rows(t, logits, ids, wts);
        Var se = ad::weighted_sq_error(t, z, rows, wts);
        Var pooled = ad::weighted_mean_rows(t, logits, wts);
        Var ps = ad::sum_all(t, ad::cmul(t, pooled, t.constant(w.topRows(1))));
        return ad::add(t, ad::add(t, ce, se), ps);
    });
}

TEST_CASE("gather repeats accumulate; leaf grads persist across tapes") {
    Rng rng(6);
    Var table = ad::leaf(randn(4, 2, rng));
    std::vector<int> ids = {1, 1, 1};
    table->zero_grad();
    {
        Tape t;
        Var g = ad::gather_rows(t, table, ids);
        Var s = ad::sum_all(t, g);
        t.backward(s);
    }
    CHECK(table->grad(1, 0) == doctest::Approx(3.0));
    CHECK(table->grad(0, 0) == 0.0);
    {
        Tape t;
        Var g = ad::gather_rows(t, table, {0});
        t.backward(ad::sum_all(t, g));
    }
    // Accumulation across tapes until zeroed.
    CHECK(table->grad(1, 0) == doctest::Approx(3.0));
    CHECK(table->grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("cross entropy matches a direct logsumexp evaluation") {
    Rng rng(7);
    Matrix logits = randn(2, 5, rng);
    Var l = ad::leaf(logits);
    Eigen::VectorXd wts = Eigen::VectorXd::Ones(2);
    Tape t;
    double got = ad::cross_entropy_rows(t, l, {3, 0}, wts)->value(0, 0);
    double want = 0.0;
    for (int i = 0; i < 2; ++i) {
        double m = logits.row(i).maxCoeff();
        double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        want += lse - logits(i, i == 0 ? 3 : 0);
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}
