#pragma once

#include <array>
#include <map>

#include "treefuse/tree.hpp"

namespace treefuse {

/// Truth for one generated tree predictor: full level-effect vector with the
/// first category fixed at zero.
struct TruthTerm {
    std::string name;
    Kind kind = Kind::Ordinal;
    std::vector<double> effects;  // length k
    int k() const { return static_cast<int>(effects.size()); }
    int true_splits() const;
};

struct SimTruth {
    std::vector<TruthTerm> terms;       // 4 ordinal then 4 nominal
    Eigen::VectorXd beta;               // linear coefficients
};

struct SimConfig {
    std::size_t n = 2000;
    int replicates = 100;
    std::uint64_t seed = 1;
    double noise_sd = 1.0;
    double cov_offdiag = 0.3;
};

SimTruth default_truth();

/// Uniform category draws, correlated normal covariates, gaussian noise.
std::pair<Dataset, SimTruth> generate_dataset(const SimConfig& cfg,
                                              std::uint64_t seed);

struct SimMetrics {
    double mse_alpha_ordinal = 0.0;
    double mse_alpha_nominal = 0.0;
    double mse_beta = 0.0;
    double fpr_ordinal = 0.0;
    double fpr_nominal = 0.0;
    double fnr_ordinal = 0.0;
    double fnr_nominal = 0.0;
    int splits_ordinal = 0;
    int splits_nominal = 0;
    int splits_total = 0;
};

SimMetrics evaluate_fit(const TreeStructuredModel& model, const SimTruth& truth);

struct RuleSummary {
    std::string rule;
    std::vector<SimMetrics> metrics;              // one per replicate
    std::map<int, int> split_count_histogram;     // total splits -> count
};

struct StudyReport {
    SimConfig config;
    std::vector<RuleSummary> rules;
    std::vector<std::string> failures;
};

StudyReport run_study(const SimConfig& cfg, const std::vector<StopRule>& rules);

double median(std::vector<double> v);
std::array<double, 3> quartiles(std::vector<double> v);

}  // namespace treefuse
