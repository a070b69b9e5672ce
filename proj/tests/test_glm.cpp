#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "treefuse/glm.hpp"

using namespace treefuse;

namespace {

Family gaussian() { return Family{FamilyKind::Gaussian}; }
Family binomial() { return Family{FamilyKind::Binomial}; }

}  // namespace

TEST_CASE("gaussian intercept-only fit is the mean") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y(3);
    y << 1, 2, 3;
    GlmFit fit = fit_glm(X, y, gaussian());
    CHECK(fit.coef[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.deviance == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.converged);
    CHECK(fit.edf == doctest::Approx(1.0));
}

TEST_CASE("binomial intercept-only fit on balanced data") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd y(4);
    y << 0, 1, 0, 1;
    GlmFit fit = fit_glm(X, y, binomial());
    CHECK(fit.coef[0] == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(fit.deviance == doctest::Approx(8.0 * std::log(2.0)).epsilon(1e-8));
    CHECK(fit.converged);
    CHECK(fit.dispersion == 1.0);
}

TEST_CASE("gaussian fit matches the normal-equations solution on 100 designs") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 30 + static_cast<int>(rng() % 50);
        Eigen::MatrixXd X(n, 4);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            X(i, 0) = 1.0;
            for (int j = 1; j < 4; ++j) X(i, j) = g(rng);
            y[i] = g(rng) + 2.0 * X(i, 1);
        }
        GlmFit fit = fit_glm(X, y, gaussian());
        // independent oracle: solve X'X b = X'y directly
        Eigen::VectorXd oracle =
            (X.transpose() * X).ldlt().solve(X.transpose() * y);
        CHECK((fit.coef - oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
        double rss = (y - X * oracle).squaredNorm();
        CHECK(fit.deviance == doctest::Approx(rss).epsilon(1e-10));
    }
}

TEST_CASE("a zero column is rejected with its name") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(5, 2);
    X.col(1).setZero();
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, 0, 1);
    try {
        fit_glm(X, y, gaussian(), {}, {"(intercept)", "dead"});
        FAIL("expected SingularDesignError");
    } catch (const SingularDesignError& e) {
        REQUIRE(e.columns.size() == 1);
        CHECK(e.columns[0] == "dead");
    }
}

TEST_CASE("duplicated columns are rejected") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 1, 1, 1, 0, 0, 0, 0;
    Eigen::VectorXd y(4);
    y << 0, 1, 2, 3;
    CHECK_THROWS_AS(fit_glm(X, y, gaussian()), SingularDesignError);
}

TEST_CASE("lr test of identical models") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 4;
    GlmFit fit = fit_glm(X, y, gaussian());
    TestResult t = lr_test(fit, fit, 0);
    CHECK(t.statistic == 0.0);
    CHECK(t.p_value == 1.0);
}

TEST_CASE("chi-square tail probability reference values") {
    // classical 5% critical value of chi^2 with 1 df
    CHECK(chi_squared_sf(3.8415, 1) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(chi_squared_sf(5.9915, 2) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(chi_squared_sf(0.0, 1) == 1.0);
    CHECK(chi_squared_sf(10.0, 0) == 1.0);
}

TEST_CASE("gaussian lr statistic equals the dispersion-scaled deviance drop") {
    // two groups: (0,1) and (5,6)
    Eigen::VectorXd y(4);
    y << 0, 1, 5, 6;
    Eigen::MatrixXd X1 = Eigen::MatrixXd::Ones(4, 1);
    Eigen::MatrixXd X2(4, 2);
    X2 << 1, 0, 1, 0, 1, 1, 1, 1;
    GlmFit reduced = fit_glm(X1, y, gaussian());
    GlmFit full = fit_glm(X2, y, gaussian());
    // hand computation: dev_reduced = 26, dev_full = 1, phi = 1/(4-2) = 0.5
    CHECK(reduced.deviance == doctest::Approx(26.0));
    CHECK(full.deviance == doctest::Approx(1.0));
    CHECK(full.dispersion == doctest::Approx(0.5));
    TestResult t = lr_test(full, reduced);
    CHECK(t.df == 1);
    CHECK(t.statistic == doctest::Approx(50.0).epsilon(1e-10));
    CHECK(t.p_value == doctest::Approx(chi_squared_sf(50.0, 1)));
}

TEST_CASE("lr test rejects a non-nested pair") {
    Eigen::VectorXd y(4);
    y << 0, 1, 5, 6;
    Eigen::MatrixXd X1 = Eigen::MatrixXd::Ones(4, 1);
    Eigen::MatrixXd X2(4, 2);
    X2 << 1, 0, 1, 0, 1, 1, 1, 1;
    GlmFit small = fit_glm(X1, y, gaussian());
    GlmFit large = fit_glm(X2, y, gaussian());
    CHECK_THROWS_AS(lr_test(small, large), FitError);
}

TEST_CASE("nested deviance monotonicity on random data") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 60;
        Eigen::MatrixXd X(n, 3);
        Eigen::VectorXd yg(n), yb(n);
        for (int i = 0; i < n; ++i) {
            X(i, 0) = 1.0;
            X(i, 1) = g(rng);
            X(i, 2) = g(rng);
            yg[i] = g(rng);
            yb[i] = coin(rng) ? 1.0 : 0.0;
        }
        for (const Family& fam : {gaussian(), binomial()}) {
            const Eigen::VectorXd& y = fam.kind == FamilyKind::Gaussian ? yg : yb;
            GlmFit sub = fit_glm(X.leftCols(2), y, fam);
            GlmFit full = fit_glm(X, y, fam);
            CHECK(full.deviance <= sub.deviance + 1e-8);
        }
    }
}

TEST_CASE("row permutation leaves coefficients unchanged") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n = 50;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = g(rng);
        X(i, 2) = g(rng);
        y[i] = g(rng);
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd Xp(n, 3);
    Eigen::VectorXd yp(n);
    for (int i = 0; i < n; ++i) {
        Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
        yp[i] = y[perm[static_cast<std::size_t>(i)]];
    }
    GlmFit a = fit_glm(X, y, gaussian());
    GlmFit b = fit_glm(Xp, yp, gaussian());
    CHECK((a.coef - b.coef).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("prediction applies the response function") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y(3);
    y << 1, 2, 3;
    GlmFit fit = fit_glm(X, y, gaussian());
    Eigen::VectorXd eta, mu;
    predict_response(fit, gaussian(), Eigen::MatrixXd::Ones(5, 1), eta, mu);
    CHECK(mu.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(mu[i] == doctest::Approx(2.0));

    SUBCASE("binomial inverse link at zero") {
        CHECK(binomial().mean(0.0) == doctest::Approx(0.5));
    }
    SUBCASE("binomial means are clamped") {
        CHECK(binomial().mean(-1e6) >= kMuClamp);
        CHECK(binomial().mean(1e6) <= 1.0 - kMuClamp);
    }
    SUBCASE("column mismatch is an error") {
        Eigen::VectorXd e2, m2;
        CHECK_THROWS_AS(
            predict_response(fit, gaussian(), Eigen::MatrixXd::Ones(2, 3), e2, m2),
            FitError);
    }
}

TEST_CASE("gaussian predictive deviance is the holdout sum of squares") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(3, 1);
    Eigen::VectorXd y(3);
    y << 1, 2, 3;  // fit mean 2
    GlmFit fit = fit_glm(X, y, gaussian());
    Eigen::MatrixXd Xh = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd yh(2);
    yh << 0, 5;
    CHECK(predictive_deviance(fit, gaussian(), Xh, yh) ==
          doctest::Approx(4.0 + 9.0));
}

TEST_CASE("binomial deviance of near-perfect predictions is near zero") {
    Family fam = binomial();
    Eigen::VectorXd y(2), mu(2);
    y << 0, 1;
    mu << kMuClamp, 1.0 - kMuClamp;
    CHECK(fam.deviance(y, mu) <= 2.0 * (-2.0 * std::log(1.0 - 1e-10)) + 1e-12);
}

TEST_CASE("binomial response outside [0,1] is rejected") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(2, 1);
    Eigen::VectorXd y(2);
    y << 0, 2;
    CHECK_THROWS_AS(fit_glm(X, y, binomial()), FitError);
}

TEST_CASE("wald test flags a strong coefficient") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.1);
    const int n = 100;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = i % 2;
        y[i] = 3.0 * X(i, 1) + g(rng);
    }
    GlmFit fit = fit_glm(X, y, gaussian());
    TestResult t = wald_test(fit, 1);
    CHECK(t.kind == "Wald");
    CHECK(t.statistic > 100.0);
    CHECK(t.p_value < 1e-6);
}

TEST_CASE("a heavy quadratic penalty shrinks the penalized block") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n = 80;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = g(rng);
        X(i, 2) = g(rng);
        y[i] = 1.0 + X(i, 1) + X(i, 2) + g(rng);
    }
    PenaltyBlock pen{1, 1e10, Eigen::MatrixXd::Identity(2, 2)};
    GlmFit fit = fit_glm(X, y, gaussian(), {pen});
    CHECK(std::abs(fit.coef[1]) < 1e-6);
    CHECK(std::abs(fit.coef[2]) < 1e-6);
    CHECK(fit.edf < 1.5);           // only the intercept remains effective
    CHECK(fit.edf_by_col.sum() == doctest::Approx(fit.edf));
    CHECK(fit.edf_by_col[0] == doctest::Approx(1.0).epsilon(1e-6));
}
