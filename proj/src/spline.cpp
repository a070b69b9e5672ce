#include "treefuse/spline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace treefuse {

namespace {

// Order-k B-spline values at x over the full knot vector (count = nknots - k).
// Half-open intervals; x at the right boundary is evaluated on the last
// non-degenerate span.
std::vector<double> bspline_order(const std::vector<double>& t, int k, double x) {
    const int n1 = static_cast<int>(t.size()) - 1;  // order-1 count
    std::vector<double> N(static_cast<std::size_t>(n1), 0.0);
    const double lo = t.front();
    const double hi = t.back();
    double xc = std::min(std::max(x, lo), hi);
    // locate span
    int span = -1;
    for (int i = 0; i < n1; ++i) {
        if (t[static_cast<std::size_t>(i)] <= xc &&
            xc < t[static_cast<std::size_t>(i) + 1])
            span = i;
    }
    if (span < 0) {  // x == hi: last span with positive length
        for (int i = n1 - 1; i >= 0; --i)
            if (t[static_cast<std::size_t>(i) + 1] > t[static_cast<std::size_t>(i)]) {
                span = i;
                break;
            }
    }
    N[static_cast<std::size_t>(span)] = 1.0;
    for (int ord = 2; ord <= k; ++ord) {
        const int cnt = static_cast<int>(t.size()) - ord;
        std::vector<double> M(static_cast<std::size_t>(cnt), 0.0);
        for (int i = 0; i < cnt; ++i) {
            double left = 0.0, right = 0.0;
            double d1 = t[static_cast<std::size_t>(i + ord - 1)] - t[static_cast<std::size_t>(i)];
            double d2 = t[static_cast<std::size_t>(i + ord)] - t[static_cast<std::size_t>(i + 1)];
            if (d1 > 0.0) left = (xc - t[static_cast<std::size_t>(i)]) / d1 * N[static_cast<std::size_t>(i)];
            if (d2 > 0.0)
                right = (t[static_cast<std::size_t>(i + ord)] - xc) / d2 * N[static_cast<std::size_t>(i) + 1];
            M[static_cast<std::size_t>(i)] = left + right;
        }
        N = std::move(M);
    }
    return N;
}

// First derivative of order-k values from order-(k-1) values.
std::vector<double> bspline_derivative(const std::vector<double>& t, int k,
                                       const std::vector<double>& lower) {
    const int cnt = static_cast<int>(t.size()) - k;
    std::vector<double> D(static_cast<std::size_t>(cnt), 0.0);
    for (int i = 0; i < cnt; ++i) {
        double a = 0.0, b = 0.0;
        double d1 = t[static_cast<std::size_t>(i + k - 1)] - t[static_cast<std::size_t>(i)];
        double d2 = t[static_cast<std::size_t>(i + k)] - t[static_cast<std::size_t>(i + 1)];
        if (d1 > 0.0) a = lower[static_cast<std::size_t>(i)] / d1;
        if (d2 > 0.0) b = lower[static_cast<std::size_t>(i) + 1] / d2;
        D[static_cast<std::size_t>(i)] = static_cast<double>(k - 1) * (a - b);
    }
    return D;
}

}  // namespace

Eigen::VectorXd SplineBasis::raw_row(double x, int deriv) const {
    const auto& t = knots;
    if (deriv == 0) {
        auto v = bspline_order(t, 4, x);
        return Eigen::Map<Eigen::VectorXd>(v.data(), dim);
    }
    if (deriv == 1) {
        auto n3 = bspline_order(t, 3, x);
        auto d = bspline_derivative(t, 4, n3);
        return Eigen::Map<Eigen::VectorXd>(d.data(), dim);
    }
    // second derivative: differentiate order-3 values, then the order-4 rule
    auto n2 = bspline_order(t, 2, x);
    auto d3 = bspline_derivative(t, 3, n2);
    auto d4 = bspline_derivative(t, 4, d3);
    return Eigen::Map<Eigen::VectorXd>(d4.data(), dim);
}

Eigen::RowVectorXd SplineBasis::row(double x) const {
    return raw_row(x, 0).transpose() * constraint;
}

Eigen::MatrixXd SplineBasis::evaluate(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd B(x.size(), ncols());
    for (Eigen::Index i = 0; i < x.size(); ++i) B.row(i) = row(x[i]);
    return B;
}

SplineBasis build_spline_basis(const std::vector<double>& x, int dim) {
    if (dim < 4) throw FitError("spline basis dimension must be >= 4");
    std::set<double> distinct(x.begin(), x.end());
    if (static_cast<int>(distinct.size()) < dim)
        throw FitError("too few distinct values (" +
                       std::to_string(distinct.size()) + ") for basis dimension " +
                       std::to_string(dim));
    std::vector<double> u(distinct.begin(), distinct.end());

    SplineBasis b;
    b.dim = dim;
    b.knots.assign(4, u.front());
    const int interior = dim - 4;
    for (int i = 1; i <= interior; ++i) {
        // evenly spaced quantiles of the distinct values
        double q = static_cast<double>(i) / static_cast<double>(interior + 1);
        double pos = q * static_cast<double>(u.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        double frac = pos - std::floor(pos);
        double val = lo + 1 < u.size() ? (1.0 - frac) * u[lo] + frac * u[lo + 1]
                                       : u[lo];
        b.knots.push_back(val);
    }
    b.knots.insert(b.knots.end(), 4, u.back());

    // integrated squared second derivative, exact via Simpson per span
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(dim, dim);
    for (int l = 3; l <= dim - 1; ++l) {
        double a = b.knots[static_cast<std::size_t>(l)];
        double c = b.knots[static_cast<std::size_t>(l) + 1];
        if (c <= a) continue;
        double m = 0.5 * (a + c);
        Eigen::VectorXd da = b.raw_row(a, 2), dm = b.raw_row(m, 2), dc = b.raw_row(std::nextafter(c, a), 2);
        P += (c - a) / 6.0 *
             (da * da.transpose() + 4.0 * (dm * dm.transpose()) + dc * dc.transpose());
    }

    // sum-to-zero constraint over the observed sample
    Eigen::VectorXd colmean = Eigen::VectorXd::Zero(dim);
    for (double xi : x) colmean += b.raw_row(xi, 0);
    colmean /= static_cast<double>(x.size());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(colmean);
    Eigen::MatrixXd Q = qr.householderQ();
    b.constraint = Q.rightCols(dim - 1);
    b.penalty = b.constraint.transpose() * P * b.constraint;
    b.penalty = 0.5 * (b.penalty + b.penalty.transpose());
    return b;
}

std::vector<double> lambda_grid() {
    std::vector<double> g(kLambdaGridSize);
    const double l0 = std::log10(kLambdaGridMin);
    const double l1 = std::log10(kLambdaGridMax);
    for (int i = 0; i < kLambdaGridSize; ++i)
        g[static_cast<std::size_t>(i)] =
            std::pow(10.0, l0 + (l1 - l0) * static_cast<double>(i) /
                               static_cast<double>(kLambdaGridSize - 1));
    return g;
}

double select_smoothing(const Eigen::MatrixXd& X_fixed,
                        const Eigen::MatrixXd& basis_block,
                        const Eigen::MatrixXd& basis_penalty,
                        const Eigen::VectorXd& y, const Family& fam) {
    const Eigen::Index n = y.size();
    Eigen::MatrixXd X(n, X_fixed.cols() + basis_block.cols());
    X << X_fixed, basis_block;
    double best_lambda = kLambdaGridMin;
    double best_gcv = std::numeric_limits<double>::infinity();
    for (double lambda : lambda_grid()) {
        PenaltyBlock pen{X_fixed.cols(), lambda, basis_penalty};
        GlmFit fit = fit_glm(X, y, fam, {pen});
        double denom = static_cast<double>(n) - fit.edf;
        if (denom <= 0) continue;
        double gcv = static_cast<double>(n) * fit.deviance / (denom * denom);
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

double SmoothTermFit::value(double x) const {
    return basis.row(x).dot(coef);
}

}  // namespace treefuse
