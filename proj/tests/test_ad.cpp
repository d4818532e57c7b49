#include <doctest.h>

#include <random>

#include "tfield/ad.hpp"

using namespace tfield;
using ad::Var;

namespace {

// numerical gradient of a scalar-valued function of one matrix leaf
Eigen::MatrixXd numeric_grad(const std::function<double(const Eigen::MatrixXd&)>& f,
                             Eigen::MatrixXd x, double h = 1e-6) {
    Eigen::MatrixXd g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double keep = x(i);
        x(i) = keep + h;
        double up = f(x);
        x(i) = keep - h;
        double down = f(x);
        x(i) = keep;
        g(i) = (up - down) / (2 * h);
    }
    return g;
}

void check_grad(const std::function<Var(const Var&)>& build, const Eigen::MatrixXd& x0,
                double tol = 1e-6) {
    Var x = ad::leaf(x0);
    Var y = build(x);
    REQUIRE(ad::val(y).size() == 1);
    ad::GradMap grads = ad::backward(y, false);
    Eigen::MatrixXd analytic = ad::val(grads.at(x));
    Eigen::MatrixXd numeric = numeric_grad(
        [&](const Eigen::MatrixXd& v) {
            ad::NoGradGuard guard;
            return ad::val(build(ad::constant(v)))(0, 0);
        },
        x0);
    CHECK((analytic - numeric).cwiseAbs().maxCoeff() < tol);
}

}  // namespace

TEST_CASE("first-order gradients match finite differences") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd x(3, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng) + 0.1;

    check_grad([](const Var& v) { return ad::sum_all(ad::square(v)); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::sin(v)); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::cos(v)); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::exp(v)); }, x, 1e-5);
    check_grad([](const Var& v) { return ad::sum_all(ad::softplus(v)); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::sigmoid(v)); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::sqrt(ad::square(v))); }, x, 1e-5);
    check_grad([](const Var& v) { return ad::sum_all(ad::mul(v, v)); }, x);
    check_grad(
        [](const Var& v) {
            return ad::sum_all(ad::div(ad::constant(Eigen::MatrixXd::Ones(3, 4)), v));
        },
        (x.cwiseAbs() + Eigen::MatrixXd::Constant(3, 4, 0.5)).eval(), 1e-5);
    check_grad([](const Var& v) { return ad::sum_all(ad::neg(ad::sub(v, v))); }, x);

    Eigen::MatrixXd w(4, 3);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = n(rng);
    check_grad(
        [&](const Var& v) { return ad::sum_all(ad::square(ad::matmul(ad::constant(w), v))); },
        x, 1e-5);
    check_grad([&](const Var& v) { return ad::sum_all(ad::square(ad::transpose(v))); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::square(ad::rowsum(v))); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::square(ad::colsum(v))); }, x);
    check_grad([](const Var& v) { return ad::sum_all(ad::square(ad::rowmax(v))); }, x);
    check_grad(
        [](const Var& v) { return ad::sum_all(ad::square(ad::slice_rows(v, 1, 2))); }, x);
    check_grad(
        [](const Var& v) {
            return ad::sum_all(ad::square(ad::concat_rows(v, ad::square(v))));
        },
        x);
    check_grad(
        [](const Var& v) {
            return ad::sum_all(ad::square(ad::cwise_max(v, ad::scalar_mul(v, -1.0))));
        },
        x, 1e-5);
    check_grad(
        [](const Var& v) {
            return ad::sum_all(ad::mul_rows(ad::square(v), ad::colsum(v)));
        },
        x, 1e-5);
    Eigen::MatrixXd bias(3, 1);
    bias << 0.3, -0.2, 0.5;
    check_grad(
        [&](const Var& v) {
            return ad::sum_all(ad::square(ad::add_col(v, ad::constant(bias))));
        },
        x);
    Eigen::MatrixXd col(3, 1);
    col << 1.0, -0.5, 0.25;
    check_grad([&](const Var& v) { return ad::sum_all(ad::square(ad::tile_cols(v, 5))); },
               col);
    Eigen::MatrixXd row(1, 4);
    row << 1.0, -0.5, 0.25, 2.0;
    check_grad([&](const Var& v) { return ad::sum_all(ad::square(ad::tile_rows(v, 5))); },
               row);
}

TEST_CASE("wrap has unit derivative") {
    Eigen::MatrixXd x(1, 3);
    x << 0.5, 4.0, -4.0;
    Var v = ad::leaf(x);
    Var y = ad::sum_all(ad::wrap(v));
    auto grads = ad::backward(y, false);
    CHECK((ad::val(grads.at(v)) - Eigen::MatrixXd::Ones(1, 3)).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("rowmax backward routes gradient to the first maximum only") {
    Eigen::MatrixXd x(2, 3);
    x << 1, 3, 3, 2, 2, 1;
    Var v = ad::leaf(x);
    auto grads = ad::backward(ad::sum_all(ad::rowmax(v)), false);
    Eigen::MatrixXd g = ad::val(grads.at(v));
    Eigen::MatrixXd expect(2, 3);
    expect << 0, 1, 0, 1, 0, 0;
    CHECK((g - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("second and third order differentiation through the tape") {
    // f(x) = sum(x^3): f' = 3x^2, f'' = 6x, f''' = 6
    Eigen::MatrixXd x0(1, 2);
    x0 << 1.5, -0.7;
    Var x = ad::leaf(x0);
    Var f = ad::sum_all(ad::mul(ad::mul(x, x), x));

    auto g1 = ad::backward(f, true);
    Var df = g1.at(x);
    CHECK((ad::val(df) - 3.0 * x0.cwiseProduct(x0)).cwiseAbs().maxCoeff() < 1e-12);

    auto g2 = ad::backward(ad::sum_all(df), true);
    Var d2f = g2.at(x);
    CHECK((ad::val(d2f) - 6.0 * x0).cwiseAbs().maxCoeff() < 1e-12);

    auto g3 = ad::backward(ad::sum_all(d2f), false);
    CHECK((ad::val(g3.at(x)) - Eigen::MatrixXd::Constant(1, 2, 6.0)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("second order through softplus matches finite differences") {
    Eigen::MatrixXd x0(1, 3);
    x0 << 0.3, -1.2, 2.0;

    auto d_first = [](const Eigen::MatrixXd& v) {
        Var x = ad::leaf(v);
        Var f = ad::sum_all(ad::square(ad::softplus(x)));
        auto g = ad::backward(f, true);
        return ad::val(g.at(x));
    };

    Var x = ad::leaf(x0);
    Var f = ad::sum_all(ad::square(ad::softplus(x)));
    auto g1 = ad::backward(f, true);
    auto g2 = ad::backward(ad::sum_all(g1.at(x)), false);
    Eigen::MatrixXd analytic = ad::val(g2.at(x));

    double h = 1e-5;
    for (int i = 0; i < 3; ++i) {
        Eigen::MatrixXd up = x0, dn = x0;
        up(0, i) += h;
        dn(0, i) -= h;
        double second = (d_first(up).sum() - d_first(dn).sum()) / (2 * h);
        CHECK(analytic(0, i) == doctest::Approx(second).epsilon(1e-5));
    }
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    Eigen::MatrixXd x0 = Eigen::MatrixXd::Ones(2, 2);
    ad::NoGradGuard guard;
    Var x = ad::leaf(x0);
    Var y = ad::square(x);
    CHECK_FALSE(y->tracked);
    CHECK(y->parents.empty());
}

TEST_CASE("gradients accumulate across shared subexpressions") {
    Eigen::MatrixXd x0(1, 1);
    x0 << 2.0;
    Var x = ad::leaf(x0);
    Var y = ad::add(ad::mul(x, x), x);  // x^2 + x, dy = 2x + 1 = 5
    auto g = ad::backward(y, false);
    CHECK(ad::val(g.at(x))(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("GradMap returns zeros for uninvolved leaves") {
    Var x = ad::leaf(Eigen::MatrixXd::Ones(2, 2));
    Var z = ad::leaf(Eigen::MatrixXd::Ones(3, 1));
    auto g = ad::backward(ad::sum_all(ad::square(x)), false);
    CHECK(ad::val(g.at(z)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ad::val(g.at(z)).rows() == 3);
}
