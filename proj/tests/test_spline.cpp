#include <doctest.h>

#include <cmath>
#include <random>

#include "treefuse/spline.hpp"

using namespace treefuse;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] =
            a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("basis construction dimensions") {
    auto x = linspace(0, 1, 50);
    SplineBasis b = build_spline_basis(x, 10);
    CHECK(b.dim == 10);
    CHECK(b.ncols() == 9);
    CHECK(b.knots.size() == 14);
    CHECK(b.knots.front() == 0.0);
    CHECK(b.knots.back() == 1.0);
    CHECK(b.penalty.rows() == 9);
    // penalty is symmetric PSD
    CHECK((b.penalty - b.penalty.transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.penalty);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
}

TEST_CASE("too few distinct values is an error") {
    CHECK_THROWS_AS(build_spline_basis({1, 2, 3, 1, 2, 3}, 4), FitError);
    CHECK_THROWS_AS(build_spline_basis(linspace(0, 1, 9), 10), FitError);
}

TEST_CASE("raw rows sum to one (partition of unity)") {
    auto x = linspace(-2, 3, 40);
    SplineBasis b = build_spline_basis(x, 10);
    for (double q : linspace(-2, 3, 17))
        CHECK(b.raw_row(q, 0).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constrained block is centered over the sample") {
    auto x = linspace(0, 10, 60);
    SplineBasis b = build_spline_basis(x, 10);
    Eigen::MatrixXd B = b.evaluate(to_vec(x));
    CHECK(B.colwise().mean().lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("the penalty annihilates affine functions") {
    auto x = linspace(0, 1, 50);
    SplineBasis b = build_spline_basis(x, 10);
    Eigen::MatrixXd B = b.evaluate(to_vec(x));
    // centered line is exactly representable by a cubic spline basis
    Eigen::VectorXd target(to_vec(x));
    target.array() -= target.mean();
    Eigen::VectorXd c = B.colPivHouseholderQr().solve(target);
    CHECK((B * c - target).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK(c.dot(b.penalty * c) <= 1e-12);
}

TEST_CASE("lambda grid shape") {
    auto g = lambda_grid();
    REQUIRE(g.size() == 40);
    CHECK(g.front() == doctest::Approx(1e-4));
    CHECK(g.back() == doctest::Approx(1e6));
    CHECK(std::is_sorted(g.begin(), g.end()));
}

TEST_CASE("effective df decreases in lambda") {
    auto x = linspace(0, 1, 80);
    SplineBasis b = build_spline_basis(x, 10);
    Eigen::MatrixXd B = b.evaluate(to_vec(x));
    Eigen::MatrixXd X(80, 1 + B.cols());
    X << Eigen::VectorXd::Ones(80), B;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::VectorXd y(80);
    for (int i = 0; i < 80; ++i)
        y[i] = std::sin(6.0 * x[static_cast<std::size_t>(i)]) + 0.2 * g(rng);
    double prev = 1e300;
    for (double lambda : lambda_grid()) {
        GlmFit fit = fit_glm(X, y, Family{FamilyKind::Gaussian},
                             {PenaltyBlock{1, lambda, b.penalty}});
        CHECK(fit.edf <= prev + 1e-8);
        prev = fit.edf;
    }
}

TEST_CASE("gcv picks heavy smoothing for straight-line data") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> noise(0.0, 0.01);
    auto x = linspace(0, 1, 100);
    Eigen::VectorXd xv = to_vec(x);
    Eigen::VectorXd y(100);
    for (int i = 0; i < 100; ++i) y[i] = 1.0 + 2.0 * xv[i] + noise(rng);
    SplineBasis b = build_spline_basis(x, 10);
    Eigen::MatrixXd fixed = Eigen::MatrixXd::Ones(100, 1);
    Eigen::MatrixXd B = b.evaluate(xv);
    double lambda = select_smoothing(fixed, B, b.penalty, y, Family{FamilyKind::Gaussian});
    CHECK(lambda >= 1.0);

    // joint fit at the selected lambda stays close to the least-squares line
    Eigen::MatrixXd X(100, 1 + B.cols());
    X << fixed, B;
    GlmFit fit = fit_glm(X, y, Family{FamilyKind::Gaussian},
                         {PenaltyBlock{1, lambda, b.penalty}});
    Eigen::MatrixXd L(100, 2);
    L << Eigen::VectorXd::Ones(100), xv;
    Eigen::VectorXd lsq = (L.transpose() * L).ldlt().solve(L.transpose() * y);
    double rmse = std::sqrt((X * fit.coef - L * lsq).squaredNorm() / 100.0);
    CHECK(rmse <= 1e-3);
}

TEST_CASE("gcv smooths a sine without flattening it") {
    std::mt19937_64 rng(3);
    const double sd = 0.3;
    std::normal_distribution<double> noise(0.0, sd);
    auto x = linspace(0, 1, 200);
    Eigen::VectorXd xv = to_vec(x);
    Eigen::VectorXd truth(200), y(200);
    for (int i = 0; i < 200; ++i) {
        truth[i] = std::sin(4.0 * M_PI * xv[i]);
        y[i] = truth[i] + noise(rng);
    }
    SplineBasis b = build_spline_basis(x, 10);
    Eigen::MatrixXd fixed = Eigen::MatrixXd::Ones(200, 1);
    Eigen::MatrixXd B = b.evaluate(xv);
    double lambda = select_smoothing(fixed, B, b.penalty, y, Family{FamilyKind::Gaussian});
    CHECK(lambda < kLambdaGridMax);
    Eigen::MatrixXd X(200, 1 + B.cols());
    X << fixed, B;
    GlmFit fit = fit_glm(X, y, Family{FamilyKind::Gaussian},
                         {PenaltyBlock{1, lambda, b.penalty}});
    double rmse = std::sqrt((X * fit.coef - truth).squaredNorm() / 200.0);
    CHECK(rmse < 1.2 * sd);
}

TEST_CASE("flat gcv profile resolves to the smallest grid value") {
    auto x = linspace(0, 1, 50);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(50, 3.0);
    SplineBasis b = build_spline_basis(x, 10);
    double lambda = select_smoothing(Eigen::MatrixXd::Ones(50, 1), b.evaluate(to_vec(x)),
                                     b.penalty, y, Family{FamilyKind::Gaussian});
    CHECK(lambda == doctest::Approx(kLambdaGridMin));
}

TEST_CASE("smooth term fit reproduces values from coefficients") {
    auto x = linspace(0, 1, 50);
    SplineBasis b = build_spline_basis(x, 10);
    SmoothTermFit s;
    s.variable = "x";
    s.basis = b;
    s.coef = Eigen::VectorXd::LinSpaced(9, -1, 1);
    for (double q : {0.0, 0.25, 0.7, 1.0})
        CHECK(s.value(q) == doctest::Approx(b.row(q).dot(s.coef)));
}
