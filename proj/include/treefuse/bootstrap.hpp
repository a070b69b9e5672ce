#pragma once

#include <optional>

#include "treefuse/tree.hpp"

namespace treefuse {

struct BootstrapResult {
    int B = 0;
    std::uint64_t seed = 0;
    std::vector<std::optional<TreeStructuredModel>> replicates;  // size B
    std::vector<std::string> failures;                           // reason per failed replicate

    int n_success() const;
    double failure_rate() const;
};

/// B with-replacement resamples of size n, each fitted with the identical
/// pipeline (nominal re-ordering included). Per-replicate RNG streams are
/// derived from `seed`; replicate failures are recorded, never fatal.
/// `resample = false` fits the original rows (test hook).
BootstrapResult run_bootstrap(const Dataset& d, const ModelSpec& spec,
                              const StopRule& rule, int B, std::uint64_t seed,
                              int max_splits = -1, bool resample = true);

/// Per-replicate level effects of `var`, re-expressed against the original
/// sample's reference level and indexed by original level codes. Failed
/// replicates are skipped.
struct AlignedEffects {
    std::string variable;
    int reference_level = 1;
    Eigen::MatrixXd effects;   // n_success x k
    int n_skipped = 0;
};

AlignedEffects align_effects(const BootstrapResult& result,
                             const TreeStructuredModel& original,
                             const std::string& var);

struct IntervalRow {
    std::string parameter;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Type-7 (linear interpolation) percentile interval of each column.
std::vector<std::pair<double, double>> percentile_intervals(
    const Eigen::MatrixXd& samples, double level);

/// Percentile CIs for the linear coefficients across replicates.
std::vector<IntervalRow> linear_confidence_intervals(
    const BootstrapResult& result, const TreeStructuredModel& original,
    double level);

/// Percentile CIs for the cumulative level effects of one tree variable.
std::vector<IntervalRow> effect_confidence_intervals(
    const BootstrapResult& result, const TreeStructuredModel& original,
    const std::string& var, double level);

struct SimilarityMatrix {
    std::string variable;
    Eigen::MatrixXd s;   // k x k, symmetric, unit diagonal
};

struct ClusterStability {
    std::vector<std::vector<int>> cells;  // original partition
    std::vector<double> stability;        // mean within-cell similarity
};

/// s_ij = n_ij / B where n_ij counts replicates co-clustering levels i and j.
SimilarityMatrix similarity_matrix(const BootstrapResult& result,
                                   const std::string& var, int k);

/// Similarity from explicit per-replicate cell assignments (index per level);
/// denominator is `B` regardless of the assignment count.
SimilarityMatrix similarity_from_assignments(
    const std::string& var, const std::vector<std::vector<int>>& assignments,
    int k, int B);

std::pair<SimilarityMatrix, ClusterStability> similarity_and_stability(
    const BootstrapResult& result, const TreeStructuredModel& original,
    const std::string& var);

}  // namespace treefuse
