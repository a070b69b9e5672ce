#include "treefuse/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace treefuse {

int TruthTerm::true_splits() const {
    if (kind == Kind::Ordinal) {
        int c = 0;
        for (std::size_t j = 0; j + 1 < effects.size(); ++j)
            if (effects[j] != effects[j + 1]) ++c;
        return c;
    }
    std::set<double> distinct(effects.begin(), effects.end());
    return static_cast<int>(distinct.size()) - 1;
}

SimTruth default_truth() {
    SimTruth t;
    auto term = [](std::string name, Kind kind, std::vector<double> e) {
        TruthTerm tt;
        tt.name = std::move(name);
        tt.kind = kind;
        tt.effects = std::move(e);
        return tt;
    };
    t.terms = {
        term("ord1", Kind::Ordinal, {0, 0, 1, 1, 2, 2, 3, 3, 4, 4}),
        term("ord2", Kind::Ordinal, {0, 0, 0, 0, 0, 2, 2, 2, 2, 2}),
        term("ord3", Kind::Ordinal, {0, 1, 1, 2, 2}),
        term("ord4", Kind::Ordinal, {0, 0, 0, 0, 0}),
        term("nom1", Kind::Nominal, {0, 0, 0.5, 0.5, -0.5, -0.5, 1.5, 1.5, -1.5, -1.5}),
        term("nom2", Kind::Nominal, {0, 0, 0, 0, 0, -2, -2, -2, -2, -2}),
        term("nom3", Kind::Nominal, {0, 1, 1, -1, -1}),
        term("nom4", Kind::Nominal, {0, 0, 0, 0, 0}),
    };
    t.beta = Eigen::VectorXd(5);
    t.beta << -2, 1, -1, 3, 2;
    return t;
}

std::pair<Dataset, SimTruth> generate_dataset(const SimConfig& cfg,
                                              std::uint64_t seed) {
    SimTruth truth = default_truth();
    const std::size_t n = cfg.n;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Column> columns;
    std::vector<double> eta(n, 0.0);
    for (const TruthTerm& t : truth.terms) {
        std::uniform_int_distribution<int> pick(1, t.k());
        Column c;
        c.name = t.name;
        c.kind = t.kind;
        c.role = Role::Tree;
        c.levels = t.k();
        c.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            int code = pick(rng);
            c.values[i] = code;
            eta[i] += t.effects[static_cast<std::size_t>(code) - 1];
        }
        columns.push_back(std::move(c));
    }

    const Eigen::Index q = truth.beta.size();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(q, q, cfg.cov_offdiag);
    sigma.diagonal().setOnes();
    Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
    std::vector<Column> xcols(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) {
        xcols[static_cast<std::size_t>(j)].name = "x" + std::to_string(j + 1);
        xcols[static_cast<std::size_t>(j)].kind = Kind::Metric;
        xcols[static_cast<std::size_t>(j)].role = Role::Linear;
        xcols[static_cast<std::size_t>(j)].values.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd u(q);
        for (Eigen::Index j = 0; j < q; ++j) u[j] = gauss(rng);
        Eigen::VectorXd x = chol * u;
        for (Eigen::Index j = 0; j < q; ++j)
            xcols[static_cast<std::size_t>(j)].values[i] = x[j];
        eta[i] += x.dot(truth.beta);
    }
    for (auto& c : xcols) columns.push_back(std::move(c));

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = eta[i] + cfg.noise_sd * gauss(rng);

    return {Dataset("y", std::move(y), std::move(columns)), std::move(truth)};
}

namespace {

struct PairRates {
    double fpr = 0.0;
    double fnr = 0.0;
};

PairRates pair_rates(const StepFunction& sf, const TruthTerm& t) {
    const int k = t.k();
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 1);
    if (t.kind == Kind::Nominal) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            double ea = t.effects[static_cast<std::size_t>(a) - 1];
            double eb = t.effects[static_cast<std::size_t>(b) - 1];
            if (ea != eb) return ea < eb;
            return a < b;
        });
    }
    int fp = 0, fn = 0, zero = 0, nonzero = 0;
    for (int j = 0; j + 1 < k; ++j) {
        int a = order[static_cast<std::size_t>(j)];
        int b = order[static_cast<std::size_t>(j) + 1];
        bool truly_zero = t.effects[static_cast<std::size_t>(a) - 1] ==
                          t.effects[static_cast<std::size_t>(b) - 1];
        bool est_zero = sf.cell_index(a) == sf.cell_index(b);
        if (truly_zero) {
            ++zero;
            if (!est_zero) ++fp;
        } else {
            ++nonzero;
            if (est_zero) ++fn;
        }
    }
    PairRates r;
    r.fpr = zero > 0 ? static_cast<double>(fp) / zero : 0.0;
    r.fnr = nonzero > 0 ? static_cast<double>(fn) / nonzero : 0.0;
    return r;
}

}  // namespace

SimMetrics evaluate_fit(const TreeStructuredModel& model, const SimTruth& truth) {
    SimMetrics m;
    int n_ord = 0, n_nom = 0;
    for (const TruthTerm& t : truth.terms) {
        const StepFunction& sf = model.tree_term(t.name);
        const int k = t.k();
        double ref = sf.value(1.0);
        double sse = 0.0;
        for (int s = 2; s <= k; ++s) {
            double est = sf.value(static_cast<double>(s)) - ref;
            double err = est - t.effects[static_cast<std::size_t>(s) - 1];
            sse += err * err;
        }
        double mse = sse / static_cast<double>(k - 1);
        PairRates pr = pair_rates(sf, t);
        int splits = static_cast<int>(sf.thresholds.size());
        if (t.kind == Kind::Ordinal) {
            m.mse_alpha_ordinal += mse;
            m.fpr_ordinal += pr.fpr;
            m.fnr_ordinal += pr.fnr;
            m.splits_ordinal += splits;
            ++n_ord;
        } else {
            m.mse_alpha_nominal += mse;
            m.fpr_nominal += pr.fpr;
            m.fnr_nominal += pr.fnr;
            m.splits_nominal += splits;
            ++n_nom;
        }
    }
    if (n_ord > 0) {
        m.mse_alpha_ordinal /= n_ord;
        m.fpr_ordinal /= n_ord;
        m.fnr_ordinal /= n_ord;
    }
    if (n_nom > 0) {
        m.mse_alpha_nominal /= n_nom;
        m.fpr_nominal /= n_nom;
        m.fnr_nominal /= n_nom;
    }
    m.splits_total = m.splits_ordinal + m.splits_nominal;
    m.mse_beta = (model.linear_coef - truth.beta).squaredNorm() /
                 static_cast<double>(truth.beta.size());
    return m;
}

StudyReport run_study(const SimConfig& cfg, const std::vector<StopRule>& rules) {
    StudyReport report;
    report.config = cfg;
    for (const StopRule& r : rules)
        report.rules.push_back(RuleSummary{r.name(), {}, {}});

    ModelSpec spec;
    spec.family.kind = FamilyKind::Gaussian;

    for (int rep = 0; rep < cfg.replicates; ++rep) {
        std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep), 10);
        try {
            auto [data, truth] = generate_dataset(cfg, rep_seed);
            FitContext ctx(data, spec);
            SplitTrace trace = fit_path(ctx, -1);
            for (std::size_t ri = 0; ri < rules.size(); ++ri) {
                StopRule rule = rules[ri];
                if (rule.type == StopRule::Type::KFoldCV)
                    rule.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep),
                                            100 + static_cast<std::uint64_t>(rule.k));
                auto [L, model] = apply_stop_rule(ctx, trace, rule);
                SimMetrics metrics = evaluate_fit(model, truth);
                report.rules[ri].metrics.push_back(metrics);
                report.rules[ri].split_count_histogram[metrics.splits_total] += 1;
            }
        } catch (const std::exception& e) {
            report.failures.push_back("replicate " + std::to_string(rep) +
                                      " (seed " + std::to_string(rep_seed) + "): " + e.what());
        }
    }
    return report;
}

double median(std::vector<double> v) {
    return quartiles(std::move(v))[1];
}

std::array<double, 3> quartiles(std::vector<double> v) {
    if (v.empty()) return {0.0, 0.0, 0.0};
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        double pos = p * static_cast<double>(v.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        double frac = pos - std::floor(pos);
        return lo + 1 < v.size() ? (1.0 - frac) * v[lo] + frac * v[lo + 1] : v[lo];
    };
    return {q(0.25), q(0.5), q(0.75)};
}

}  // namespace treefuse
