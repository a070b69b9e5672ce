// treefuse: fits tree-structured GLMs in which categorical predictors are
// recursively fused into level clusters. Subcommands: fit, bootstrap,
// simulate, cv-compare. All randomness flows from --seed; identical
// (config, seed) pairs reproduce artifacts byte for byte.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "treefuse/bootstrap.hpp"
#include "treefuse/io.hpp"
#include "treefuse/simulation.hpp"
#include "treefuse/tree.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treefuse;

namespace {

struct CommonOpts {
    std::string data;
    std::string schema;
    std::string family = "gaussian";
    std::string stop = "pvalue:0.05";
    int max_splits = -1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out = ".";
};

void add_seed_out(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "RNG seed (required; no wall-clock seeding)")
        ->required();
    cmd->add_option("--out", o.out, "output directory");
}

void add_model_opts(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--data", o.data, "CSV data file")->required();
    cmd->add_option("--schema", o.schema, "JSON schema file")->required();
    cmd->add_option("--family", o.family, "gaussian or binomial")
        ->check(CLI::IsMember({"gaussian", "binomial"}));
    cmd->add_option("--stop", o.stop, "stop rule: pvalue:<alpha>, aic, bic, cv:<k>");
    cmd->add_option("--max-splits", o.max_splits, "cap on the split path length");
    add_seed_out(cmd, o);
}

std::string canonical_config(const std::string& command,
                             const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "command=" << command;
    for (const auto& [k, v] : kv) os << ";" << k << "=" << v;
    return os.str();
}

std::string stamp(const std::string& config, std::uint64_t seed) {
    return "# config_hash=" + config_hash(config) + " seed=" + std::to_string(seed) +
           "\n";
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << content;
    if (!out) throw DataError("write failed: " + path.string());
}

void write_json(const fs::path& path, json j, const std::string& config,
                std::uint64_t seed) {
    j["config_hash"] = config_hash(config);
    j["seed"] = seed;
    write_file(path, j.dump(2) + "\n");
}

ModelSpec spec_from(const CommonOpts& o) {
    ModelSpec spec;
    spec.family.kind = family_from_string(o.family);
    return spec;
}

int cmd_fit(const CommonOpts& o) {
    const std::string config = canonical_config(
        "fit", {{"data", o.data}, {"schema", o.schema}, {"family", o.family},
                {"stop", o.stop}, {"max_splits", std::to_string(o.max_splits)}});
    Dataset d = ingest_dataset_files(o.data, o.schema);
    StopRule rule = StopRule::parse(o.stop, o.seed);
    TreeStructuredModel model = fit_tree_model(d, spec_from(o), rule, o.max_splits);

    fs::create_directories(o.out);
    write_json(fs::path(o.out) / "model.json", model_to_json(model), config, o.seed);
    write_file(fs::path(o.out) / "partitions.csv",
               stamp(config, o.seed) + partitions_to_csv(model, d));
    write_file(fs::path(o.out) / "coefficient_paths.csv",
               stamp(config, o.seed) + coefficient_paths_to_csv(model.trace));
    if (!model.smooth_terms.empty())
        write_file(fs::path(o.out) / "smooth_grid.csv",
                   stamp(config, o.seed) + smooth_grid_to_csv(model, d));
    return 0;
}

int cmd_bootstrap(const CommonOpts& o, int B, double level) {
    const std::string config = canonical_config(
        "bootstrap", {{"data", o.data}, {"schema", o.schema}, {"family", o.family},
                      {"stop", o.stop}, {"max_splits", std::to_string(o.max_splits)},
                      {"B", std::to_string(B)}, {"level", format_double(level)}});
    Dataset d = ingest_dataset_files(o.data, o.schema);
    StopRule rule = StopRule::parse(o.stop, o.seed);
    ModelSpec spec = spec_from(o);
    TreeStructuredModel original = fit_tree_model(d, spec, rule, o.max_splits);
    BootstrapResult result = run_bootstrap(d, spec, rule, B, o.seed, o.max_splits);

    fs::create_directories(o.out);
    std::vector<IntervalRow> intervals = linear_confidence_intervals(result, original, level);
    std::string similarity, stability;
    for (const auto& term : original.tree_terms) {
        if (term.kind == Kind::Metric) continue;
        auto effects = effect_confidence_intervals(result, original, term.variable, level);
        intervals.insert(intervals.end(), effects.begin(), effects.end());
        auto [sim, stab] = similarity_and_stability(result, original, term.variable);
        similarity += similarity_to_csv(sim);
        stability += stability_to_csv(term.variable, stab);
    }
    write_file(fs::path(o.out) / "intervals.csv",
               stamp(config, o.seed) + intervals_to_csv(intervals));
    write_file(fs::path(o.out) / "similarity.csv", stamp(config, o.seed) + similarity);
    write_file(fs::path(o.out) / "stability.csv", stamp(config, o.seed) + stability);

    json summary;
    summary["B"] = B;
    summary["level"] = level;
    summary["n_success"] = result.n_success();
    summary["failure_rate"] = result.failure_rate();
    summary["failures"] = result.failures;
    write_json(fs::path(o.out) / "bootstrap_summary.json", summary, config, o.seed);
    return 0;
}

int cmd_simulate(const CommonOpts& o, std::size_t n, int replicates) {
    const std::string config = canonical_config(
        "simulate", {{"n", std::to_string(n)}, {"replicates", std::to_string(replicates)}});
    SimConfig cfg;
    cfg.n = n;
    cfg.replicates = replicates;
    cfg.seed = o.seed;
    std::vector<StopRule> rules = {StopRule::pvalue(0.05), StopRule::pvalue(0.1),
                                   StopRule::aic(),        StopRule::bic(),
                                   StopRule::kfold(5, 0),  StopRule::kfold(10, 0)};
    StudyReport report = run_study(cfg, rules);
    fs::create_directories(o.out);
    write_json(fs::path(o.out) / "report.json", report_to_json(report), config, o.seed);
    return 0;
}

double pipeline_predictive_deviance(const Dataset& d, const ModelSpec& spec,
                                    const StopRule& rule, int max_splits,
                                    const std::vector<std::size_t>& train,
                                    const std::vector<std::size_t>& hold) {
    FitContext ctx(d, spec, train, /*strict=*/false);
    TreeStructuredModel model = fit_tree_model(ctx, rule, max_splits);
    double dev = 0.0;
    for (std::size_t row : hold) {
        double mu = spec.family.mean(model.eta_row(d, row));
        dev += spec.family.deviance_unit(d.response()[row], mu);
    }
    return dev;
}

int cmd_cv_compare(const CommonOpts& o, int folds, int repetitions) {
    if (folds < 2 || folds > 20)
        throw FitError("cv-compare: folds must be in 2..20");
    if (repetitions < 1) throw FitError("cv-compare: repetitions must be >= 1");
    const std::string config = canonical_config(
        "cv-compare",
        {{"data", o.data}, {"schema", o.schema}, {"family", o.family},
         {"stop", o.stop}, {"max_splits", std::to_string(o.max_splits)},
         {"folds", std::to_string(folds)}, {"repetitions", std::to_string(repetitions)}});
    Dataset d = ingest_dataset_files(o.data, o.schema);
    ModelSpec spec = spec_from(o);

    std::ostringstream table;
    table << "model,repetition,predictive_deviance\n";
    for (int rep = 0; rep < repetitions; ++rep) {
        std::vector<std::size_t> rows = all_rows(d);
        std::mt19937_64 rng(derive_seed(o.seed, static_cast<std::uint64_t>(rep), 2));
        std::shuffle(rows.begin(), rows.end(), rng);
        double dev_tree = 0.0, dev_base = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> train, hold;
            for (std::size_t i = 0; i < rows.size(); ++i)
                (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? hold
                                                                            : train)
                    .push_back(rows[i]);
            StopRule rule = StopRule::parse(o.stop, derive_seed(o.seed,
                                                                static_cast<std::uint64_t>(rep),
                                                                3 + static_cast<std::uint64_t>(f)));
            dev_tree += pipeline_predictive_deviance(d, spec, rule, o.max_splits,
                                                     train, hold);
            dev_base += pipeline_predictive_deviance(d, spec, rule, 0, train, hold);
        }
        table << "tree," << rep + 1 << "," << format_double(dev_tree) << "\n";
        table << "baseline," << rep + 1 << "," << format_double(dev_base) << "\n";
    }
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "cv_compare.csv",
               stamp(config, o.seed) + table.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tree-structured GLM fitting with categorical level fusion"};
    app.require_subcommand(1);

    CommonOpts fit_o, boot_o, sim_o, cv_o;
    int B = 100;
    double level = 0.95;
    std::size_t sim_n = 2000;
    int replicates = 100;
    int folds = 5;
    int repetitions = 100;

    CLI::App* fit = app.add_subcommand("fit", "fit one tree-structured model");
    add_model_opts(fit, fit_o);

    CLI::App* boot = app.add_subcommand("bootstrap",
                                        "bootstrap confidence intervals and cluster stability");
    add_model_opts(boot, boot_o);
    boot->add_option("--bootstrap", B, "number of bootstrap replicates")
        ->check(CLI::Range(2, 1000000));
    boot->add_option("--level", level, "confidence level")
        ->check(CLI::Range(1e-6, 1.0 - 1e-6));

    CLI::App* sim = app.add_subcommand("simulate",
                                       "synthetic study comparing stopping rules");
    sim->add_option("--n", sim_n, "observations per replicate");
    sim->add_option("--replicates", replicates, "number of replicates");
    add_seed_out(sim, sim_o);

    CLI::App* cv = app.add_subcommand("cv-compare",
                                      "repeated k-fold comparison against a no-tree baseline");
    add_model_opts(cv, cv_o);
    cv->add_option("--folds", folds, "folds per repetition (2..20)");
    cv->add_option("--repetitions", repetitions, "number of repetitions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) return cmd_fit(fit_o);
        if (boot->parsed()) return cmd_bootstrap(boot_o, B, level);
        if (sim->parsed()) return cmd_simulate(sim_o, sim_n, replicates);
        if (cv->parsed()) return cmd_cv_compare(cv_o, folds, repetitions);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
