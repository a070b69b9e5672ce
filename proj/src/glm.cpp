#include "treefuse/glm.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <sstream>

namespace treefuse {

namespace {

std::string join(const std::vector<std::string>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

}  // namespace

SingularDesignError::SingularDesignError(std::vector<std::string> cols)
    : FitError("singular design, offending columns: " + join(cols)),
      columns(std::move(cols)) {}

std::string to_string(FamilyKind f) {
    return f == FamilyKind::Gaussian ? "gaussian" : "binomial";
}

FamilyKind family_from_string(const std::string& s) {
    if (s == "gaussian") return FamilyKind::Gaussian;
    if (s == "binomial") return FamilyKind::Binomial;
    throw FitError("unknown family: '" + s + "'");
}

double Family::mean(double eta) const {
    if (kind == FamilyKind::Gaussian) return eta;
    double mu = 1.0 / (1.0 + std::exp(-eta));
    return std::min(1.0 - kMuClamp, std::max(kMuClamp, mu));
}

double Family::link(double mu) const {
    if (kind == FamilyKind::Gaussian) return mu;
    return std::log(mu / (1.0 - mu));
}

double Family::variance(double mu) const {
    if (kind == FamilyKind::Gaussian) return 1.0;
    return mu * (1.0 - mu);
}

double Family::deviance_unit(double y, double mu) const {
    if (kind == FamilyKind::Gaussian) {
        double r = y - mu;
        return r * r;
    }
    return 2.0 * (xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu)));
}

double Family::deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const {
    double d = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) d += deviance_unit(y[i], mu[i]);
    return d;
}

void Family::check_response(const Eigen::VectorXd& y) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i])) throw FitError("non-finite response");
        if (kind == FamilyKind::Binomial && (y[i] < 0.0 || y[i] > 1.0))
            throw FitError("binomial response outside [0,1] at row " +
                           std::to_string(i));
    }
}

double chi_squared_sf(double statistic, int df) {
    if (df <= 0) return 1.0;
    if (statistic <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, statistic / 2.0);
}

namespace {

// Symmetric square roots of the lambda-scaled penalty blocks, stacked into
// augmentation rows so that a weighted least-squares solve of the augmented
// system minimizes ||sqrt(W)(z - X c)||^2 + sum lambda c'Pc.
Eigen::MatrixXd penalty_augmentation(Eigen::Index p,
                                     const std::vector<PenaltyBlock>& penalties) {
    Eigen::Index total = 0;
    for (const auto& b : penalties) total += b.matrix.rows();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(total, p);
    Eigen::Index row = 0;
    for (const auto& b : penalties) {
        const Eigen::Index d = b.matrix.rows();
        if (b.offset < 0 || b.offset + d > p)
            throw FitError("penalty block out of range");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.lambda * b.matrix);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        aug.block(row, b.offset, d, d) =
            ev.asDiagonal() * es.eigenvectors().transpose();
        row += d;
    }
    return aug;
}

Eigen::MatrixXd penalty_matrix(Eigen::Index p,
                               const std::vector<PenaltyBlock>& penalties) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    for (const auto& b : penalties)
        S.block(b.offset, b.offset, b.matrix.rows(), b.matrix.cols()) +=
            b.lambda * b.matrix;
    return S;
}

[[noreturn]] void throw_singular(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                                 const std::vector<std::string>& colnames,
                                 Eigen::Index p) {
    std::vector<std::string> bad;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < p; ++i) {
        Eigen::Index col = perm[i];
        bad.push_back(col < static_cast<Eigen::Index>(colnames.size())
                          ? colnames[static_cast<std::size_t>(col)]
                          : "col" + std::to_string(col));
    }
    throw SingularDesignError(std::move(bad));
}

}  // namespace

GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const Family& fam, const std::vector<PenaltyBlock>& penalties,
               const std::vector<std::string>& colnames) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (y.size() != n) throw FitError("response length mismatch");
    if (p == 0) throw FitError("empty design matrix");
    fam.check_response(y);

    const bool penalized = !penalties.empty();
    const Eigen::MatrixXd aug = penalized ? penalty_augmentation(p, penalties)
                                          : Eigen::MatrixXd(0, p);

    GlmFit fit;
    fit.colnames = colnames;

    Eigen::VectorXd mu(n), eta(n), w(n), z(n);
    if (fam.kind == FamilyKind::Gaussian) {
        for (Eigen::Index i = 0; i < n; ++i) mu[i] = y[i];
    } else {
        for (Eigen::Index i = 0; i < n; ++i) mu[i] = (y[i] + 0.5) / 2.0;
    }
    for (Eigen::Index i = 0; i < n; ++i) eta[i] = fam.link(mu[i]);

    Eigen::MatrixXd A(n + aug.rows(), p);
    Eigen::VectorXd b(n + aug.rows());
    if (aug.rows() > 0) {
        A.bottomRows(aug.rows()) = aug;
        b.tail(aug.rows()).setZero();
    }

    double dev_prev = std::numeric_limits<double>::infinity();
    const int max_iter = fam.kind == FamilyKind::Gaussian ? 1 : kIrlsMaxIter;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (fam.kind == FamilyKind::Gaussian) {
            w.setOnes();
            z = y;
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                w[i] = fam.variance(mu[i]);
                z[i] = eta[i] + (y[i] - mu[i]) / w[i];
            }
        }
        Eigen::VectorXd sw = w.cwiseSqrt();
        A.topRows(n) = sw.asDiagonal() * X;
        b.head(n) = sw.cwiseProduct(z);
        qr.compute(A);
        if (qr.rank() < p) throw_singular(qr, colnames, p);
        fit.coef = qr.solve(b);
        eta = X * fit.coef;
        for (Eigen::Index i = 0; i < n; ++i) mu[i] = fam.mean(eta[i]);
        fit.deviance = fam.deviance(y, mu);
        fit.iterations = iter + 1;
        if (std::abs(dev_prev - fit.deviance) <
            kIrlsTol * (std::abs(fit.deviance) + 0.1)) {
            fit.converged = true;
            break;
        }
        dev_prev = fit.deviance;
    }
    if (fam.kind == FamilyKind::Gaussian) fit.converged = true;

    // edf and covariance from the converged working problem
    Eigen::MatrixXd G = X.transpose() * w.asDiagonal() * X;
    Eigen::MatrixXd M = G;
    if (penalized) M += penalty_matrix(p, penalties);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    Eigen::MatrixXd Minv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    fit.edf_by_col =
        penalized ? (Minv * G).diagonal().eval() : Eigen::VectorXd::Ones(p).eval();
    fit.edf = fit.edf_by_col.sum();

    if (fam.kind == FamilyKind::Gaussian) {
        double pearson = (y - mu).squaredNorm();
        double denom = static_cast<double>(n) - fit.edf;
        fit.dispersion = denom > 0 ? pearson / denom : 1.0;
        double sigma2 = std::max(fit.deviance / static_cast<double>(n), 1e-300);
        fit.loglik = -0.5 * static_cast<double>(n) *
                     (std::log(2.0 * M_PI * sigma2) + 1.0);
    } else {
        fit.dispersion = 1.0;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            ll += xlogy(y[i], mu[i]) + xlogy(1.0 - y[i], 1.0 - mu[i]);
        fit.loglik = ll;
    }
    fit.cov = fit.dispersion * Minv;
    return fit;
}

TestResult lr_test(const GlmFit& fit_full, const GlmFit& fit_reduced,
                   std::optional<int> df) {
    const double drop = fit_reduced.deviance - fit_full.deviance;
    const double tol = 1e-8 * (1.0 + std::abs(fit_full.deviance));
    if (drop < -tol)
        throw FitError("lr_test: reduced model has smaller deviance; models not nested");
    TestResult t;
    t.kind = "LR";
    t.df = df.value_or(static_cast<int>(fit_full.ncols() - fit_reduced.ncols()));
    t.statistic = std::max(0.0, drop) / fit_full.dispersion;
    t.p_value = chi_squared_sf(t.statistic, t.df);
    return t;
}

TestResult wald_test(const GlmFit& fit, Eigen::Index coef_index) {
    TestResult t;
    t.kind = "Wald";
    t.df = 1;
    double v = fit.cov(coef_index, coef_index);
    t.statistic = v > 0 ? fit.coef[coef_index] * fit.coef[coef_index] / v : 0.0;
    t.p_value = chi_squared_sf(t.statistic, 1);
    return t;
}

void predict_response(const GlmFit& fit, const Family& fam,
                      const Eigen::MatrixXd& X_new, Eigen::VectorXd& eta,
                      Eigen::VectorXd& mu) {
    if (X_new.cols() != fit.ncols())
        throw FitError("predict_response: column count mismatch");
    eta = X_new * fit.coef;
    mu.resize(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = fam.mean(eta[i]);
}

double predictive_deviance(const GlmFit& fit, const Family& fam,
                           const Eigen::MatrixXd& X_new,
                           const Eigen::VectorXd& y_new) {
    Eigen::VectorXd eta, mu;
    predict_response(fit, fam, X_new, eta, mu);
    return fam.deviance(y_new, mu);
}

}  // namespace treefuse
