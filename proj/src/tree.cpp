#include "treefuse/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace treefuse {

namespace {

std::string split_name(const std::string& var, double threshold, Kind kind) {
    std::ostringstream os;
    os << "I(" << var << (kind == Kind::Nominal ? ".rank" : "") << ">"
       << threshold << ")";
    return os.str();
}

}  // namespace

StopRule StopRule::pvalue(double alpha) {
    StopRule r;
    r.type = Type::PValue;
    r.alpha = alpha;
    if (!(alpha > 0.0 && alpha < 1.0))
        throw FitError("p-value stop rule: alpha must be in (0,1)");
    return r;
}

StopRule StopRule::aic() {
    StopRule r;
    r.type = Type::AIC;
    return r;
}

StopRule StopRule::bic() {
    StopRule r;
    r.type = Type::BIC;
    return r;
}

StopRule StopRule::kfold(int k, std::uint64_t seed) {
    StopRule r;
    r.type = Type::KFoldCV;
    if (k < 2 || k > 20) throw FitError("cv stop rule: k must be in 2..20");
    r.k = k;
    r.seed = seed;
    return r;
}

StopRule StopRule::parse(const std::string& s, std::uint64_t seed) {
    if (s == "aic") return aic();
    if (s == "bic") return bic();
    if (s.rfind("pvalue:", 0) == 0) return pvalue(std::stod(s.substr(7)));
    if (s.rfind("cv:", 0) == 0) return kfold(std::stoi(s.substr(3)), seed);
    throw FitError("unknown stop rule '" + s +
                   "' (expected pvalue:<alpha>, aic, bic or cv:<k>)");
}

std::string StopRule::name() const {
    switch (type) {
        case Type::PValue: {
            std::ostringstream os;
            os << "p(" << alpha << ")";
            return os.str();
        }
        case Type::AIC: return "AIC";
        case Type::BIC: return "BIC";
        case Type::KFoldCV: return "cv(" + std::to_string(k) + ")";
    }
    return "?";
}

int StepFunction::cell_index(double z) const {
    double pos = z;
    if (kind == Kind::Nominal)
        pos = order.rank_of[static_cast<std::size_t>(z) - 1];
    int idx = 0;
    for (double t : thresholds)
        if (pos > t) ++idx;
    return idx;
}

double StepFunction::value(double z) const {
    return cum_effects[static_cast<std::size_t>(cell_index(z))];
}

FitContext::FitContext(const Dataset& d, const ModelSpec& spec,
                       std::vector<std::size_t> rows, bool strict)
    : data_(&d), spec_(spec), rows_(std::move(rows)) {
    if (rows_.empty()) throw FitError("empty row set");
    y_.resize(static_cast<Eigen::Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i)
        y_[static_cast<Eigen::Index>(i)] = d.response()[rows_[i]];
    spec_.family.check_response(y_);

    const Eigen::Index n = y_.size();
    std::vector<Eigen::VectorXd> lin_cols;
    for (const Column& c : d.columns()) {
        if (c.role == Role::Tree) {
            split_sets_.push_back(candidate_splits(d, c.name, rows_, strict));
        } else if (c.role == Role::Linear) {
            Eigen::VectorXd v(n);
            for (std::size_t i = 0; i < rows_.size(); ++i)
                v[static_cast<Eigen::Index>(i)] = c.values[rows_[i]];
            linear_names_.push_back(c.name);
            lin_cols.push_back(std::move(v));
        } else {
            std::vector<double> x(rows_.size());
            for (std::size_t i = 0; i < rows_.size(); ++i) x[i] = c.values[rows_[i]];
            SplineBasis basis = build_spline_basis(x, spec_.spline_dim);
            Eigen::VectorXd xv = Eigen::Map<Eigen::VectorXd>(x.data(),
                                                             static_cast<Eigen::Index>(x.size()));
            smooth_names_.push_back(c.name);
            smooth_blocks_.push_back(basis.evaluate(xv));
            bases_.push_back(std::move(basis));
        }
    }
    linear_block_.resize(n, static_cast<Eigen::Index>(lin_cols.size()));
    for (std::size_t j = 0; j < lin_cols.size(); ++j)
        linear_block_.col(static_cast<Eigen::Index>(j)) = lin_cols[j];

    refine_nominal_orderings();
}

// Nominal levels are linearized by sorting them on per-level outcome means,
// so that subset search reduces to threshold search. Raw means are a noisy
// sorting key when the parametric part of the model carries most of the
// response variance, so the key is adjusted for it: the outcome is first
// regressed on intercept + linear covariates + smooth-term bases, and levels
// are ordered by their mean residual. Tree terms are deliberately left out of
// the adjustment — sorting a variable's levels by the same estimates the
// split test will examine would inflate spurious splits on uninformative
// predictors. Falls back to the raw-mean ordering when the parametric design
// is rank deficient. Unobserved levels stay last; exact ties keep the
// lowest-code-first convention.
void FitContext::refine_nominal_orderings() {
    bool any_nominal = false;
    for (const auto& s : split_sets_)
        if (!s.order.level_at.empty()) any_nominal = true;
    if (!any_nominal) return;

    Eigen::Index p = 1 + linear_block_.cols();
    for (const auto& blk : smooth_blocks_) p += blk.cols();
    if (p == 1) return;  // nothing to adjust for: raw means already apply

    const auto n = static_cast<Eigen::Index>(rows_.size());
    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    Eigen::Index col = 1;
    X.middleCols(col, linear_block_.cols()) = linear_block_;
    col += linear_block_.cols();
    for (const auto& blk : smooth_blocks_) {
        X.middleCols(col, blk.cols()) = blk;
        col += blk.cols();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) return;  // keep the raw-mean orderings
    Eigen::VectorXd resid = y_ - X * qr.solve(y_);

    for (auto& set : split_sets_) {
        CategoryOrder& ord = set.order;
        if (ord.level_at.empty()) continue;
        const Column& c = data_->column(set.variable);
        std::vector<double> sum(ord.level_means.size(), 0.0);
        std::vector<std::size_t> count(ord.level_means.size(), 0);
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            auto code = static_cast<std::size_t>(c.values[rows_[i]]) - 1;
            sum[code] += resid[static_cast<Eigen::Index>(i)];
            ++count[code];
        }
        for (std::size_t l = 0; l < ord.level_means.size(); ++l)
            ord.level_means[l] =
                count[l] == 0 ? std::numeric_limits<double>::infinity()
                              : sum[l] / static_cast<double>(count[l]);
        std::stable_sort(ord.level_at.begin(), ord.level_at.end(),
                         [&](int a, int b) {
                             double ma = ord.level_means[static_cast<std::size_t>(a) - 1];
                             double mb = ord.level_means[static_cast<std::size_t>(b) - 1];
                             if (ma != mb) return ma < mb;
                             return a < b;
                         });
        for (std::size_t r = 0; r < ord.level_at.size(); ++r)
            ord.rank_of[static_cast<std::size_t>(ord.level_at[r]) - 1] =
                static_cast<int>(r) + 1;
    }
}

FitContext::FitContext(const Dataset& d, const ModelSpec& spec)
    : FitContext(d, spec, all_rows(d)) {}

std::size_t FitContext::m_total() const {
    std::size_t m = 0;
    for (const auto& s : split_sets_) m += s.size();
    return m;
}

Eigen::VectorXd FitContext::indicator_for(const std::string& var, double threshold,
                                          const std::vector<std::size_t>& rows) const {
    const Column& c = data_->column(var);
    const SplitSet* set = nullptr;
    for (const auto& s : split_sets_)
        if (s.variable == var) set = &s;
    if (set == nullptr) throw FitError("no split set for variable '" + var + "'");
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    if (c.kind == Kind::Nominal) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            int rank = set->order.rank_of[static_cast<std::size_t>(c.values[rows[i]]) - 1];
            v[static_cast<Eigen::Index>(i)] = rank > threshold ? 1.0 : 0.0;
        }
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i)
            v[static_cast<Eigen::Index>(i)] = c.values[rows[i]] > threshold ? 1.0 : 0.0;
    }
    return v;
}

Eigen::VectorXd FitContext::indicator(const std::string& var, double threshold) const {
    return indicator_for(var, threshold, rows_);
}

Eigen::MatrixXd FitContext::design_for(const std::vector<Split>& splits,
                                       const std::vector<std::size_t>& rows) const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::Index p = 1 + static_cast<Eigen::Index>(splits.size()) + linear_block_.cols();
    for (const auto& b : bases_) p += b.ncols();
    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    Eigen::Index col = 1;
    for (const Split& s : splits) {
        // duplicate (variable, threshold) pairs would be exactly collinear
        for (const Split& t : splits)
            if (&t != &s && t.variable == s.variable && t.threshold == s.threshold)
                throw FitError("duplicate split " + s.variable);
        X.col(col++) = indicator_for(s.variable, s.threshold, rows);
    }
    if (&rows == &rows_) {
        X.middleCols(col, linear_block_.cols()) = linear_block_;
        col += linear_block_.cols();
        for (const auto& blk : smooth_blocks_) {
            X.middleCols(col, blk.cols()) = blk;
            col += blk.cols();
        }
    } else {
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(linear_names_.size()); ++j) {
            const Column& c = data_->column(linear_names_[static_cast<std::size_t>(j)]);
            for (std::size_t i = 0; i < rows.size(); ++i)
                X(static_cast<Eigen::Index>(i), col) = c.values[rows[i]];
            ++col;
        }
        for (std::size_t j = 0; j < bases_.size(); ++j) {
            const Column& c = data_->column(smooth_names_[j]);
            for (std::size_t i = 0; i < rows.size(); ++i)
                X.block(static_cast<Eigen::Index>(i), col, 1, bases_[j].ncols()) =
                    bases_[j].row(c.values[rows[i]]);
            col += bases_[j].ncols();
        }
    }
    return X;
}

Eigen::MatrixXd FitContext::design(const std::vector<Split>& splits) const {
    return design_for(splits, rows_);
}

std::vector<std::string> FitContext::design_names(const std::vector<Split>& splits) const {
    std::vector<std::string> names;
    names.emplace_back("(intercept)");
    for (const Split& s : splits)
        names.push_back(split_name(s.variable, s.threshold,
                                   data_->column(s.variable).kind));
    for (const auto& l : linear_names_) names.push_back(l);
    for (std::size_t j = 0; j < smooth_names_.size(); ++j)
        for (Eigen::Index b = 0; b < bases_[j].ncols(); ++b)
            names.push_back("s(" + smooth_names_[j] + ")." + std::to_string(b + 1));
    return names;
}

std::vector<PenaltyBlock> FitContext::penalties(std::size_t n_splits,
                                                const std::vector<double>& lambdas) const {
    if (lambdas.size() != bases_.size())
        throw FitError("smoothing parameter count mismatch");
    std::vector<PenaltyBlock> pens;
    Eigen::Index offset = 1 + static_cast<Eigen::Index>(n_splits) + linear_block_.cols();
    for (std::size_t j = 0; j < bases_.size(); ++j) {
        pens.push_back(PenaltyBlock{offset, lambdas[j], bases_[j].penalty});
        offset += bases_[j].ncols();
    }
    return pens;
}

std::vector<double> FitContext::select_lambdas(const std::vector<Split>& splits) const {
    std::vector<double> lambdas;
    if (bases_.empty()) return lambdas;
    Eigen::MatrixXd full = design(splits);
    Eigen::Index smooth_start = full.cols();
    for (const auto& b : bases_) smooth_start -= b.ncols();
    for (std::size_t j = 0; j < bases_.size(); ++j) {
        // fixed columns: everything except this smooth's block
        Eigen::Index off = smooth_start;
        for (std::size_t i = 0; i < j; ++i) off += bases_[i].ncols();
        Eigen::MatrixXd fixed(full.rows(), full.cols() - bases_[j].ncols());
        fixed << full.leftCols(off),
            full.rightCols(full.cols() - off - bases_[j].ncols());
        lambdas.push_back(select_smoothing(fixed, smooth_blocks_[j],
                                           bases_[j].penalty, y_, spec_.family));
    }
    return lambdas;
}

GlmFit FitContext::fit(const std::vector<Split>& splits,
                       const std::vector<double>& lambdas) const {
    return fit_glm(design(splits), y_, spec_.family,
                   penalties(splits.size(), lambdas), design_names(splits));
}

ForwardStepResult forward_step(const FitContext& ctx,
                               const std::vector<Split>& selected,
                               const GlmFit& prefix_fit,
                               const std::vector<double>& prefix_lambdas) {
    ForwardStepResult result;
    result.lambdas = prefix_lambdas;
    auto is_selected = [&](const std::string& var, double thr) {
        for (const Split& s : selected)
            if (s.variable == var && s.threshold == thr) return true;
        return false;
    };

    const bool fast = ctx.spec().family.kind == FamilyKind::Gaussian &&
                      ctx.n_smooth() == 0;
    double best_dev = std::numeric_limits<double>::infinity();
    std::string best_var;
    double best_thr = 0.0;
    GlmFit best_fit;

    if (fast) {
        Eigen::MatrixXd X = ctx.design(selected);
        const Eigen::Index n = X.rows(), p = X.cols();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
        Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
        const Eigen::VectorXd& y = ctx.response();
        Eigen::VectorXd Qty = Q.transpose() * y;
        const double rss = prefix_fit.deviance;
        for (const SplitSet& set : ctx.split_sets()) {
            for (double thr : set.candidates) {
                if (is_selected(set.variable, thr)) continue;
                Eigen::VectorXd a = ctx.indicator(set.variable, thr);
                double ata = a.squaredNorm();
                if (ata == 0.0) continue;
                Eigen::VectorXd t = Q.transpose() * a;
                double perp = ata - t.squaredNorm();
                if (perp <= 1e-9 * ata) continue;  // collinear with prefix
                double num = a.dot(y) - t.dot(Qty);
                double dev = rss - num * num / perp;
                if (dev < best_dev) {
                    best_dev = dev;
                    best_var = set.variable;
                    best_thr = thr;
                }
            }
        }
        if (best_var.empty()) return result;
        std::vector<Split> trial = selected;
        trial.push_back(Split{best_var, best_thr, 0, 0.0});
        best_fit = ctx.fit(trial, prefix_lambdas);
    } else {
        for (const SplitSet& set : ctx.split_sets()) {
            for (double thr : set.candidates) {
                if (is_selected(set.variable, thr)) continue;
                std::vector<Split> trial = selected;
                trial.push_back(Split{set.variable, thr, 0, 0.0});
                GlmFit fit;
                try {
                    fit = ctx.fit(trial, prefix_lambdas);
                } catch (const SingularDesignError&) {
                    continue;
                }
                if (fit.deviance < best_dev) {
                    best_dev = fit.deviance;
                    best_var = set.variable;
                    best_thr = thr;
                    best_fit = std::move(fit);
                }
            }
        }
        if (best_var.empty()) return result;
    }

    result.found = true;
    result.split = Split{best_var, best_thr, static_cast<int>(selected.size()) + 1,
                         best_fit.coef[static_cast<Eigen::Index>(selected.size()) + 1]};
    result.p_value = lr_test(best_fit, prefix_fit, 1).p_value;
    result.fit = std::move(best_fit);
    return result;
}

SplitTrace fit_path(const FitContext& ctx, int max_splits,
                    std::optional<double> bonferroni_alpha) {
    SplitTrace trace;
    trace.m_total = ctx.m_total();
    const int limit = max_splits < 0
                          ? static_cast<int>(trace.m_total)
                          : std::min(max_splits, static_cast<int>(trace.m_total));

    std::vector<Split> selected;
    std::vector<double> lambdas = ctx.select_lambdas(selected);
    GlmFit prefix = ctx.fit(selected, lambdas);
    trace.null_deviance = prefix.deviance;
    trace.null_edf = prefix.edf;
    trace.null_coef = prefix.coef;
    trace.null_coef_names = prefix.colnames;
    trace.null_lambdas = lambdas;

    for (int l = 1; l <= limit; ++l) {
        if (ctx.n_smooth() > 0 && l > 1) {
            lambdas = ctx.select_lambdas(selected);
            prefix = ctx.fit(selected, lambdas);
        }
        ForwardStepResult step = forward_step(ctx, selected, prefix, lambdas);
        if (!step.found) {
            trace.truncation_reason = "no non-collinear candidate remains";
            break;
        }
        StepRecord rec;
        rec.split = step.split;
        rec.deviance = step.fit.deviance;
        rec.p_value = step.p_value;
        rec.edf = step.fit.edf;
        rec.coef = step.fit.coef;
        rec.coef_names = step.fit.colnames;
        rec.lambdas = lambdas;
        trace.steps.push_back(std::move(rec));
        selected.push_back(step.split);
        prefix = std::move(step.fit);
        if (bonferroni_alpha) {
            double threshold = *bonferroni_alpha /
                               static_cast<double>(trace.m_total - (static_cast<std::size_t>(l) - 1));
            if (step.p_value > threshold) {
                trace.truncation_reason = "p-value above Bonferroni threshold";
                break;
            }
        }
    }
    return trace;
}

namespace {

int choose_pvalue(const SplitTrace& trace, double alpha) {
    int L = 0;
    for (int l = 1; l <= trace.length(); ++l) {
        double threshold = alpha / static_cast<double>(trace.m_total -
                                                       (static_cast<std::size_t>(l) - 1));
        if (trace.steps[static_cast<std::size_t>(l) - 1].p_value <= threshold)
            L = l;
        else
            break;
    }
    return L;
}

int choose_ic(const SplitTrace& trace, double penalty, const FitContext& ctx) {
    const auto n = static_cast<double>(ctx.rows().size());
    const bool gaussian = ctx.spec().family.kind == FamilyKind::Gaussian;
    int best_l = 0;
    double best_ic = std::numeric_limits<double>::infinity();
    for (int l = 0; l <= trace.length(); ++l) {
        double dev = trace.deviance_at(l);
        double base = gaussian ? n * std::log(std::max(dev, 1e-300) / n) : dev;
        double ic = base + penalty * trace.edf_at(l);
        if (ic < best_ic) {
            best_ic = ic;
            best_l = l;
        }
    }
    return best_l;
}

int choose_kfold(const FitContext& ctx, const SplitTrace& trace, const StopRule& rule) {
    std::vector<std::size_t> shuffled = ctx.rows();
    std::mt19937_64 rng(rule.seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const int k = rule.k;
    if (static_cast<std::size_t>(k) > shuffled.size())
        throw FitError("cv stop rule: k exceeds row count");

    const int max_len = trace.length();
    int common_len = max_len;
    std::vector<double> total(static_cast<std::size_t>(max_len) + 1, 0.0);

    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> train, hold;
        for (std::size_t i = 0; i < shuffled.size(); ++i)
            (static_cast<int>(i % static_cast<std::size_t>(k)) == f ? hold : train)
                .push_back(shuffled[i]);
        FitContext sub(ctx.data(), ctx.spec(), train, /*strict=*/false);
        SplitTrace ft = fit_path(sub, max_len);
        common_len = std::min(common_len, ft.length());

        Eigen::VectorXd yh(static_cast<Eigen::Index>(hold.size()));
        for (std::size_t i = 0; i < hold.size(); ++i)
            yh[static_cast<Eigen::Index>(i)] = ctx.data().response()[hold[i]];

        std::vector<Split> splits;
        for (int l = 0; l <= ft.length(); ++l) {
            if (l > 0) splits.push_back(ft.steps[static_cast<std::size_t>(l) - 1].split);
            if (l > common_len) break;
            Eigen::MatrixXd Xh = sub.design_for(splits, hold);
            const Eigen::VectorXd& coef =
                l == 0 ? ft.null_coef : ft.steps[static_cast<std::size_t>(l) - 1].coef;
            Eigen::VectorXd eta = Xh * coef;
            Eigen::VectorXd mu(eta.size());
            for (Eigen::Index i = 0; i < eta.size(); ++i)
                mu[i] = ctx.spec().family.mean(eta[i]);
            total[static_cast<std::size_t>(l)] += ctx.spec().family.deviance(yh, mu);
        }
    }
    int best_l = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int l = 0; l <= common_len; ++l) {
        if (total[static_cast<std::size_t>(l)] < best) {
            best = total[static_cast<std::size_t>(l)];
            best_l = l;
        }
    }
    return best_l;
}

TreeStructuredModel finalize(const FitContext& ctx, const SplitTrace& trace,
                             int L, const StopRule& rule) {
    std::vector<Split> splits;
    for (int l = 1; l <= L; ++l)
        splits.push_back(trace.steps[static_cast<std::size_t>(l) - 1].split);
    std::vector<double> lambdas = ctx.select_lambdas(splits);
    GlmFit fit = ctx.fit(splits, lambdas);

    TreeStructuredModel model;
    model.family = ctx.spec().family.kind;
    model.rule = rule;
    model.n_splits = L;
    model.trace = trace;
    model.intercept = fit.coef[0];

    for (std::size_t j = 0; j < splits.size(); ++j)
        splits[j].effect = fit.coef[static_cast<Eigen::Index>(j) + 1];

    for (const SplitSet& set : ctx.split_sets()) {
        const Column& c = ctx.data().column(set.variable);
        StepFunction sf;
        sf.variable = set.variable;
        sf.kind = c.kind;
        sf.levels = c.levels;
        sf.order = set.order;
        std::vector<std::pair<double, double>> cuts;  // (threshold, alpha)
        for (const Split& s : splits)
            if (s.variable == set.variable) cuts.emplace_back(s.threshold, s.effect);
        std::sort(cuts.begin(), cuts.end());
        sf.cum_effects.push_back(0.0);
        double cum = 0.0;
        for (const auto& [thr, alpha] : cuts) {
            sf.thresholds.push_back(thr);
            cum += alpha;
            sf.cum_effects.push_back(cum);
        }
        model.tree_terms.push_back(std::move(sf));
    }

    Eigen::Index col = 1 + static_cast<Eigen::Index>(splits.size());
    model.linear_names = ctx.linear_names();
    model.linear_coef = fit.coef.segment(col, static_cast<Eigen::Index>(
                                                  model.linear_names.size()));
    col += static_cast<Eigen::Index>(model.linear_names.size());
    for (std::size_t j = 0; j < ctx.n_smooth(); ++j) {
        SmoothTermFit st;
        st.variable = ctx.smooth_names()[j];
        st.basis = ctx.smooth_basis(j);
        st.coef = fit.coef.segment(col, st.basis.ncols());
        st.lambda = lambdas[j];
        st.edf = fit.edf_by_col.segment(col, st.basis.ncols()).sum();
        col += st.basis.ncols();
        model.smooth_terms.push_back(std::move(st));
    }
    model.final_fit = std::move(fit);
    return model;
}

}  // namespace

std::pair<int, TreeStructuredModel> apply_stop_rule(const FitContext& ctx,
                                                    const SplitTrace& trace,
                                                    const StopRule& rule) {
    int L = 0;
    switch (rule.type) {
        case StopRule::Type::PValue:
            L = choose_pvalue(trace, rule.alpha);
            break;
        case StopRule::Type::AIC:
            L = choose_ic(trace, 2.0, ctx);
            break;
        case StopRule::Type::BIC:
            L = choose_ic(trace, std::log(static_cast<double>(ctx.rows().size())), ctx);
            break;
        case StopRule::Type::KFoldCV:
            L = choose_kfold(ctx, trace, rule);
            break;
    }
    return {L, finalize(ctx, trace, L, rule)};
}

TreeStructuredModel fit_tree_model(const FitContext& ctx, const StopRule& rule,
                                   int max_splits) {
    std::optional<double> alpha;
    if (rule.type == StopRule::Type::PValue) alpha = rule.alpha;
    SplitTrace trace = fit_path(ctx, max_splits, alpha);
    return apply_stop_rule(ctx, trace, rule).second;
}

TreeStructuredModel fit_tree_model(const Dataset& d, const ModelSpec& spec,
                                   const StopRule& rule, int max_splits) {
    FitContext ctx(d, spec);
    return fit_tree_model(ctx, rule, max_splits);
}

const StepFunction& TreeStructuredModel::tree_term(const std::string& var) const {
    for (const auto& t : tree_terms)
        if (t.variable == var) return t;
    throw FitError("no tree term for variable '" + var + "'");
}

double TreeStructuredModel::eta_row(const Dataset& d, std::size_t row) const {
    double e = intercept;
    for (const auto& t : tree_terms) e += t.value(d.column(t.variable).values[row]);
    for (std::size_t j = 0; j < linear_names.size(); ++j)
        e += linear_coef[static_cast<Eigen::Index>(j)] *
             d.column(linear_names[j]).values[row];
    for (const auto& s : smooth_terms) e += s.value(d.column(s.variable).values[row]);
    return e;
}

Eigen::VectorXd TreeStructuredModel::eta(const Dataset& d) const {
    Eigen::VectorXd e(static_cast<Eigen::Index>(d.n()));
    for (std::size_t i = 0; i < d.n(); ++i)
        e[static_cast<Eigen::Index>(i)] = eta_row(d, i);
    return e;
}

ClusterSet extract_partitions(const TreeStructuredModel& model,
                              const std::string& var) {
    const StepFunction& sf = model.tree_term(var);
    if (sf.kind == Kind::Metric)
        throw FitError("partitions are defined for categorical variables only");
    const int k = sf.kind == Kind::Binary ? 2 : sf.levels;
    ClusterSet cs;
    cs.variable = var;
    cs.cells.resize(sf.thresholds.size() + 1);
    cs.effects = sf.cum_effects;
    for (int code = 1; code <= k; ++code) {
        double z = sf.kind == Kind::Binary ? static_cast<double>(code - 1)
                                           : static_cast<double>(code);
        cs.cells[static_cast<std::size_t>(sf.cell_index(z))].push_back(code);
    }
    for (auto& cell : cs.cells) std::sort(cell.begin(), cell.end());
    return cs;
}

std::vector<CoefficientPathRow> coefficient_paths(const SplitTrace& trace) {
    std::vector<std::string> params = trace.null_coef_names;
    for (const auto& step : trace.steps)
        for (const auto& name : step.coef_names)
            if (std::find(params.begin(), params.end(), name) == params.end())
                params.push_back(name);

    std::vector<CoefficientPathRow> rows;
    auto emit = [&](int step, const std::vector<std::string>& names,
                    const Eigen::VectorXd& coef) {
        for (const auto& p : params) {
            double v = 0.0;
            auto it = std::find(names.begin(), names.end(), p);
            if (it != names.end())
                v = coef[static_cast<Eigen::Index>(it - names.begin())];
            rows.push_back(CoefficientPathRow{step, p, v});
        }
    };
    emit(0, trace.null_coef_names, trace.null_coef);
    for (int l = 1; l <= trace.length(); ++l) {
        const auto& s = trace.steps[static_cast<std::size_t>(l) - 1];
        emit(l, s.coef_names, s.coef);
    }
    return rows;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                          std::uint64_t stream) {
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (index + 1) +
                      0xD1B54A32D192ED03ULL * (stream + 1);
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace treefuse
