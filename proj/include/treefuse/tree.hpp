#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treefuse/data.hpp"
#include "treefuse/glm.hpp"
#include "treefuse/spline.hpp"

namespace treefuse {

struct ModelSpec {
    Family family;
    int spline_dim = 10;
};

/// One selected split: indicator I(z > threshold), on outcome-mean ranks for
/// nominal variables.
struct Split {
    std::string variable;
    double threshold = 0.0;
    int step = 0;              // 1-based selection step
    double effect = 0.0;       // refitted alpha in the final model
};

struct StepRecord {
    Split split;
    double deviance = 0.0;
    double p_value = 1.0;
    double edf = 0.0;
    Eigen::VectorXd coef;                 // full snapshot after this split
    std::vector<std::string> coef_names;
    std::vector<double> lambdas;          // smoothing parameters used
};

struct SplitTrace {
    double null_deviance = 0.0;
    double null_edf = 0.0;
    Eigen::VectorXd null_coef;
    std::vector<std::string> null_coef_names;
    std::vector<double> null_lambdas;
    std::vector<StepRecord> steps;
    std::size_t m_total = 0;              // total candidate count
    std::string truncation_reason;        // non-empty if the path ended early

    int length() const { return static_cast<int>(steps.size()); }
    double deviance_at(int l) const {
        return l == 0 ? null_deviance : steps[static_cast<std::size_t>(l) - 1].deviance;
    }
    double edf_at(int l) const {
        return l == 0 ? null_edf : steps[static_cast<std::size_t>(l) - 1].edf;
    }
};

struct StopRule {
    enum class Type { PValue, AIC, BIC, KFoldCV };
    Type type = Type::PValue;
    double alpha = 0.05;       // PValue
    int k = 5;                 // KFoldCV
    std::uint64_t seed = 1;    // KFoldCV fold assignment

    static StopRule pvalue(double alpha);
    static StopRule aic();
    static StopRule bic();
    static StopRule kfold(int k, std::uint64_t seed);
    static StopRule parse(const std::string& s, std::uint64_t seed);
    std::string name() const;
};

/// Partition of one categorical variable's level codes into fused clusters,
/// one effect per cell (reference cell effect 0).
struct ClusterSet {
    std::string variable;
    std::vector<std::vector<int>> cells;  // disjoint cover of 1..k
    std::vector<double> effects;
};

/// Selected-split step function for one tree variable; cum_effects[i] is the
/// effect of the i-th cell in threshold order (cum_effects[0] == 0).
struct StepFunction {
    std::string variable;
    Kind kind = Kind::Ordinal;
    int levels = 0;                 // k, 0 for metric
    std::vector<double> thresholds; // sorted ascending
    std::vector<double> cum_effects;
    CategoryOrder order;            // nominal only

    double value(double z) const;   // z: raw value / level code
    int cell_index(double z) const;
};

/// Builds design matrices for a fixed row view of a dataset: intercept,
/// split indicators in selection order, linear covariates in schema order,
/// centered spline blocks last.
class FitContext {
public:
    FitContext(const Dataset& d, const ModelSpec& spec,
               std::vector<std::size_t> rows, bool strict = true);
    FitContext(const Dataset& d, const ModelSpec& spec);

    const Dataset& data() const { return *data_; }
    const ModelSpec& spec() const { return spec_; }
    const std::vector<std::size_t>& rows() const { return rows_; }
    const Eigen::VectorXd& response() const { return y_; }
    const std::vector<SplitSet>& split_sets() const { return split_sets_; }
    const std::vector<std::string>& linear_names() const { return linear_names_; }
    std::size_t n_smooth() const { return smooth_names_.size(); }
    const std::vector<std::string>& smooth_names() const { return smooth_names_; }
    const SplineBasis& smooth_basis(std::size_t j) const { return bases_[j]; }
    std::size_t m_total() const;

    /// Candidate indicator for (variable, threshold) on the context rows.
    Eigen::VectorXd indicator(const std::string& var, double threshold) const;
    /// Same indicator evaluated on arbitrary rows of the dataset.
    Eigen::VectorXd indicator_for(const std::string& var, double threshold,
                                  const std::vector<std::size_t>& rows) const;

    Eigen::MatrixXd design(const std::vector<Split>& splits) const;
    Eigen::MatrixXd design_for(const std::vector<Split>& splits,
                               const std::vector<std::size_t>& rows) const;
    std::vector<std::string> design_names(const std::vector<Split>& splits) const;
    std::vector<PenaltyBlock> penalties(std::size_t n_splits,
                                        const std::vector<double>& lambdas) const;

    /// GCV smoothing parameters with the given splits as fixed columns.
    std::vector<double> select_lambdas(const std::vector<Split>& splits) const;

    GlmFit fit(const std::vector<Split>& splits,
               const std::vector<double>& lambdas) const;

private:
    void refine_nominal_orderings();

    const Dataset* data_;
    ModelSpec spec_;
    std::vector<std::size_t> rows_;
    Eigen::VectorXd y_;
    std::vector<SplitSet> split_sets_;
    std::vector<std::string> linear_names_;
    Eigen::MatrixXd linear_block_;
    std::vector<std::string> smooth_names_;
    std::vector<SplineBasis> bases_;
    std::vector<Eigen::MatrixXd> smooth_blocks_;  // zero-mean over context rows
};

struct ForwardStepResult {
    bool found = false;
    Split split;
    GlmFit fit;
    double p_value = 1.0;
    std::vector<double> lambdas;
};

/// One forward-selection step: fits every unselected candidate over all
/// context rows and returns the minimal-deviance model. Ties break by schema
/// variable order, then ascending threshold; collinear candidates are
/// skipped for this step only.
ForwardStepResult forward_step(const FitContext& ctx,
                               const std::vector<Split>& selected,
                               const GlmFit& prefix_fit,
                               const std::vector<double>& prefix_lambdas);

/// Grows the full split path, re-selecting smoothing parameters and
/// refitting the complete model at every step. An optional Bonferroni level
/// stops growth at the first threshold violation (the violating step is
/// still recorded).
SplitTrace fit_path(const FitContext& ctx, int max_splits,
                    std::optional<double> bonferroni_alpha = std::nullopt);

struct TreeStructuredModel {
    FamilyKind family = FamilyKind::Gaussian;
    double intercept = 0.0;
    std::vector<StepFunction> tree_terms;
    std::vector<std::string> linear_names;
    Eigen::VectorXd linear_coef;
    std::vector<SmoothTermFit> smooth_terms;
    GlmFit final_fit;
    SplitTrace trace;
    int n_splits = 0;
    StopRule rule;

    double eta_row(const Dataset& d, std::size_t row) const;
    Eigen::VectorXd eta(const Dataset& d) const;
    const StepFunction& tree_term(const std::string& var) const;
};

/// Applies a stopping rule to a grown trace and refits the final model with
/// exactly the chosen first L splits.
std::pair<int, TreeStructuredModel> apply_stop_rule(const FitContext& ctx,
                                                    const SplitTrace& trace,
                                                    const StopRule& rule);

/// Full pipeline: grow the path and stop. p-value rules grow lazily; AIC,
/// BIC and CV rules grow to max_splits (default: all candidates).
TreeStructuredModel fit_tree_model(const Dataset& d, const ModelSpec& spec,
                                   const StopRule& rule, int max_splits = -1);
TreeStructuredModel fit_tree_model(const FitContext& ctx, const StopRule& rule,
                                   int max_splits = -1);

/// Fused level partition of one tree variable in the final model.
ClusterSet extract_partitions(const TreeStructuredModel& model,
                              const std::string& var);

struct CoefficientPathRow {
    int step;
    std::string parameter;
    double value;
};

/// Long-format coefficient paths over the trace; parameters not yet entered
/// are reported as 0.
std::vector<CoefficientPathRow> coefficient_paths(const SplitTrace& trace);

/// Deterministic per-index substream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                          std::uint64_t stream = 0);

}  // namespace treefuse
