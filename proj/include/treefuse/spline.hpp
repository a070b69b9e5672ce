#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "treefuse/glm.hpp"

namespace treefuse {

/// Cubic regression spline basis with knots at quantiles of the distinct
/// covariate values and an integrated squared second derivative penalty.
/// The raw basis is reduced by a sum-to-zero constraint (matrix Z) so the
/// design block is identifiable next to an intercept; the penalty null
/// space then contains the linear trend.
struct SplineBasis {
    int dim = 10;                       // raw basis functions
    std::vector<double> knots;          // full knot vector, length dim + 4
    Eigen::MatrixXd constraint;         // Z: dim x (dim-1)
    Eigen::MatrixXd penalty;            // Z' P Z, (dim-1) x (dim-1)

    Eigen::Index ncols() const { return dim - 1; }

    /// Constrained basis row at a single point.
    Eigen::RowVectorXd row(double x) const;
    /// Constrained basis block for a vector of points.
    Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;

    /// Raw (unconstrained) basis values / second derivatives at x.
    Eigen::VectorXd raw_row(double x, int deriv = 0) const;
};

/// Builds the basis from the observed covariate values. Requires at least
/// `dim` distinct values.
SplineBasis build_spline_basis(const std::vector<double>& x, int dim = 10);

inline constexpr int kLambdaGridSize = 40;
inline constexpr double kLambdaGridMin = 1e-4;
inline constexpr double kLambdaGridMax = 1e6;

std::vector<double> lambda_grid();

/// Selects the smoothing parameter by generalized cross-validation over the
/// log-spaced grid, fitting [X_fixed | basis block] jointly. Ties and flat
/// profiles resolve to the smallest grid value.
double select_smoothing(const Eigen::MatrixXd& X_fixed,
                        const Eigen::MatrixXd& basis_block,
                        const Eigen::MatrixXd& basis_penalty,
                        const Eigen::VectorXd& y, const Family& fam);

/// One fitted smooth term of the final model.
struct SmoothTermFit {
    std::string variable;
    SplineBasis basis;
    Eigen::VectorXd coef;               // constrained coefficients
    double lambda = 0.0;
    double edf = 0.0;

    /// Centered fitted value f(x); sums to ~0 over the training sample.
    double value(double x) const;
};

}  // namespace treefuse
