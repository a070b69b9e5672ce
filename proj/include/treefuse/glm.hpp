#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace treefuse {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Design matrix is rank deficient; `columns` names an offending subset.
struct SingularDesignError : FitError {
    explicit SingularDesignError(std::vector<std::string> cols);
    std::vector<std::string> columns;
};

enum class FamilyKind { Gaussian, Binomial };

std::string to_string(FamilyKind f);
FamilyKind family_from_string(const std::string& s);

/// Exponential family with response function h and link g = h^-1.
struct Family {
    FamilyKind kind = FamilyKind::Gaussian;

    double mean(double eta) const;          // h(eta), binomial mean clamped
    double link(double mu) const;           // g(mu)
    double variance(double mu) const;
    double deviance_unit(double y, double mu) const;
    double deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) const;
    void check_response(const Eigen::VectorXd& y) const;
};

/// Quadratic penalty lambda * c' P c on one contiguous coefficient block.
struct PenaltyBlock {
    Eigen::Index offset = 0;     // first penalized column
    double lambda = 0.0;
    Eigen::MatrixXd matrix;      // symmetric PSD, dim = block width
};

/// Result of one (penalized) IRLS fit.
struct GlmFit {
    Eigen::VectorXd coef;
    double deviance = 0.0;
    double loglik = 0.0;
    double dispersion = 1.0;     // phi-hat: 1 for binomial, Pearson for gaussian
    Eigen::MatrixXd cov;         // phi-hat * (X'WX + S)^-1
    double edf = 0.0;            // tr((X'WX+S)^-1 X'WX); = ncols if unpenalized
    Eigen::VectorXd edf_by_col;  // diagonal of the hat-trace, sums to edf
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> colnames;

    Eigen::Index ncols() const { return coef.size(); }
};

inline constexpr double kIrlsTol = 1e-8;
inline constexpr int kIrlsMaxIter = 25;
inline constexpr double kMuClamp = 1e-10;

/// Maximizes the (penalized) log-likelihood by IRLS with a rank-revealing
/// solve of the weighted normal equations.
GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
               const Family& fam,
               const std::vector<PenaltyBlock>& penalties = {},
               const std::vector<std::string>& colnames = {});

struct TestResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    std::string kind = "LR";     // "LR" or "Wald"
};

/// Likelihood-ratio test of a nested pair; `df` defaults to the column-count
/// difference. Gaussian statistics are scaled by the full model's Pearson
/// dispersion.
TestResult lr_test(const GlmFit& fit_full, const GlmFit& fit_reduced,
                   std::optional<int> df = std::nullopt);

TestResult wald_test(const GlmFit& fit, Eigen::Index coef_index);

/// eta = X * coef, mu = h(eta).
void predict_response(const GlmFit& fit, const Family& fam,
                      const Eigen::MatrixXd& X_new,
                      Eigen::VectorXd& eta, Eigen::VectorXd& mu);

/// Sum of holdout deviance contributions at the fitted means.
double predictive_deviance(const GlmFit& fit, const Family& fam,
                           const Eigen::MatrixXd& X_new,
                           const Eigen::VectorXd& y_new);

/// Upper-tail chi-square probability.
double chi_squared_sf(double statistic, int df);

}  // namespace treefuse
