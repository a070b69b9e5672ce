#include "treefuse/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace treefuse {

int BootstrapResult::n_success() const {
    int c = 0;
    for (const auto& m : replicates)
        if (m) ++c;
    return c;
}

double BootstrapResult::failure_rate() const {
    return B == 0 ? 0.0 : 1.0 - static_cast<double>(n_success()) / static_cast<double>(B);
}

BootstrapResult run_bootstrap(const Dataset& d, const ModelSpec& spec,
                              const StopRule& rule, int B, std::uint64_t seed,
                              int max_splits, bool resample) {
    if (B < 1) throw FitError("bootstrap: B must be >= 1");
    BootstrapResult result;
    result.B = B;
    result.seed = seed;
    result.replicates.resize(static_cast<std::size_t>(B));

    const std::size_t n = d.n();
    for (int r = 0; r < B; ++r) {
        std::vector<std::size_t> rows;
        if (resample) {
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r), 0));
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            rows.resize(n);
            for (std::size_t i = 0; i < n; ++i) rows[i] = pick(rng);
        } else {
            rows = all_rows(d);
        }
        StopRule rep_rule = rule;
        if (rule.type == StopRule::Type::KFoldCV)
            rep_rule.seed = derive_seed(seed, static_cast<std::uint64_t>(r), 1);
        try {
            FitContext ctx(d, spec, rows, /*strict=*/true);
            result.replicates[static_cast<std::size_t>(r)] =
                fit_tree_model(ctx, rep_rule, max_splits);
        } catch (const std::exception& e) {
            result.failures.push_back("replicate " + std::to_string(r) + ": " + e.what());
        }
    }
    return result;
}

namespace {

int reference_level(const TreeStructuredModel& model, const std::string& var) {
    const StepFunction& sf = model.tree_term(var);
    if (sf.kind == Kind::Nominal) return sf.order.level_at[0];
    return 1;
}

// Level effects (code 1..k) of one replicate, shifted so that `ref_code`
// has effect zero.
Eigen::VectorXd level_effects(const TreeStructuredModel& model,
                              const std::string& var, int k, int ref_code) {
    const StepFunction& sf = model.tree_term(var);
    Eigen::VectorXd e(k);
    for (int code = 1; code <= k; ++code)
        e[code - 1] = sf.value(static_cast<double>(code));
    e.array() -= e[ref_code - 1];
    return e;
}

}  // namespace

AlignedEffects align_effects(const BootstrapResult& result,
                             const TreeStructuredModel& original,
                             const std::string& var) {
    const StepFunction& sf = original.tree_term(var);
    if (sf.kind == Kind::Metric)
        throw FitError("align_effects: categorical variables only");
    const int k = sf.kind == Kind::Binary ? 2 : sf.levels;

    AlignedEffects out;
    out.variable = var;
    out.reference_level = reference_level(original, var);
    out.effects.resize(result.n_success(), k);
    Eigen::Index row = 0;
    for (const auto& rep : result.replicates) {
        if (!rep) {
            ++out.n_skipped;
            continue;
        }
        out.effects.row(row++) =
            level_effects(*rep, var, k, out.reference_level).transpose();
    }
    return out;
}

std::vector<std::pair<double, double>> percentile_intervals(
    const Eigen::MatrixXd& samples, double level) {
    if (samples.rows() < 2)
        throw FitError("percentile_intervals: need >= 2 replicates");
    if (!(level > 0.0 && level < 1.0))
        throw FitError("percentile_intervals: level must be in (0,1)");
    auto quantile = [](std::vector<double>& v, double q) {
        std::sort(v.begin(), v.end());
        double pos = q * static_cast<double>(v.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        double frac = pos - std::floor(pos);
        return lo + 1 < v.size() ? (1.0 - frac) * v[lo] + frac * v[lo + 1] : v[lo];
    };
    std::vector<std::pair<double, double>> ci;
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        std::vector<double> v(samples.col(j).data(),
                              samples.col(j).data() + samples.rows());
        double tail = (1.0 - level) / 2.0;
        double lo = quantile(v, tail);
        double hi = quantile(v, 1.0 - tail);
        ci.emplace_back(lo, hi);
    }
    return ci;
}

std::vector<IntervalRow> linear_confidence_intervals(
    const BootstrapResult& result, const TreeStructuredModel& original,
    double level) {
    const auto p = static_cast<Eigen::Index>(original.linear_names.size());
    Eigen::MatrixXd samples(result.n_success(), p);
    Eigen::Index row = 0;
    for (const auto& rep : result.replicates)
        if (rep) samples.row(row++) = rep->linear_coef.transpose();
    auto ci = percentile_intervals(samples, level);
    std::vector<IntervalRow> rows;
    for (Eigen::Index j = 0; j < p; ++j)
        rows.push_back(IntervalRow{original.linear_names[static_cast<std::size_t>(j)],
                                   original.linear_coef[j], ci[static_cast<std::size_t>(j)].first,
                                   ci[static_cast<std::size_t>(j)].second});
    return rows;
}

std::vector<IntervalRow> effect_confidence_intervals(
    const BootstrapResult& result, const TreeStructuredModel& original,
    const std::string& var, double level) {
    AlignedEffects aligned = align_effects(result, original, var);
    auto ci = percentile_intervals(aligned.effects, level);
    Eigen::VectorXd orig = level_effects(original, var,
                                         static_cast<int>(ci.size()),
                                         aligned.reference_level);
    std::vector<IntervalRow> rows;
    for (std::size_t s = 0; s < ci.size(); ++s) {
        rows.push_back(IntervalRow{var + ":level" + std::to_string(s + 1),
                                   orig[static_cast<Eigen::Index>(s)],
                                   ci[s].first, ci[s].second});
    }
    return rows;
}

SimilarityMatrix similarity_from_assignments(
    const std::string& var, const std::vector<std::vector<int>>& assignments,
    int k, int B) {
    SimilarityMatrix sim;
    sim.variable = var;
    sim.s = Eigen::MatrixXd::Zero(k, k);
    for (const auto& cell_of : assignments) {
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (cell_of[static_cast<std::size_t>(i)] ==
                    cell_of[static_cast<std::size_t>(j)]) {
                    sim.s(i, j) += 1.0;
                    sim.s(j, i) += 1.0;
                }
    }
    sim.s /= static_cast<double>(B);
    sim.s.diagonal().setOnes();
    return sim;
}

SimilarityMatrix similarity_matrix(const BootstrapResult& result,
                                   const std::string& var, int k) {
    std::vector<std::vector<int>> assignments;
    for (const auto& rep : result.replicates) {
        if (!rep) continue;
        const StepFunction& sf = rep->tree_term(var);
        std::vector<int> cell_of(static_cast<std::size_t>(k));
        for (int code = 1; code <= k; ++code) {
            double z = sf.kind == Kind::Binary ? static_cast<double>(code - 1)
                                               : static_cast<double>(code);
            cell_of[static_cast<std::size_t>(code) - 1] = sf.cell_index(z);
        }
        assignments.push_back(std::move(cell_of));
    }
    return similarity_from_assignments(var, assignments, k, result.B);
}

std::pair<SimilarityMatrix, ClusterStability> similarity_and_stability(
    const BootstrapResult& result, const TreeStructuredModel& original,
    const std::string& var) {
    ClusterSet cs = extract_partitions(original, var);
    const StepFunction& sf = original.tree_term(var);
    const int k = sf.kind == Kind::Binary ? 2 : sf.levels;
    SimilarityMatrix sim = similarity_matrix(result, var, k);

    ClusterStability stab;
    stab.cells = cs.cells;
    for (const auto& cell : cs.cells) {
        if (cell.size() <= 1) {
            stab.stability.push_back(1.0);
            continue;
        }
        double sum = 0.0;
        int pairs = 0;
        for (std::size_t a = 0; a < cell.size(); ++a)
            for (std::size_t b = a + 1; b < cell.size(); ++b) {
                sum += sim.s(cell[a] - 1, cell[b] - 1);
                ++pairs;
            }
        stab.stability.push_back(sum / static_cast<double>(pairs));
    }
    return {std::move(sim), std::move(stab)};
}

}  // namespace treefuse
