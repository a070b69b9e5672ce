// Python bindings for the treefuse core: dataset ingestion, model fitting,
// bootstrap stability analysis and the simulation harness. Structured results
// cross the boundary as native Python containers; full artifacts are exposed
// as the same JSON/CSV text the CLI writes.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "treefuse/bootstrap.hpp"
#include "treefuse/io.hpp"
#include "treefuse/simulation.hpp"
#include "treefuse/tree.hpp"

namespace py = pybind11;
using namespace treefuse;

namespace {

ModelSpec make_spec(const std::string& family) {
    ModelSpec spec;
    spec.family.kind = family_from_string(family);
    return spec;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

std::vector<std::vector<double>> to_nested(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out[static_cast<std::size_t>(i)].push_back(m(i, j));
    return out;
}

py::dict interval_dict(const IntervalRow& r) {
    py::dict d;
    d["parameter"] = r.parameter;
    d["estimate"] = r.estimate;
    d["lower"] = r.lower;
    d["upper"] = r.upper;
    return d;
}

}  // namespace

PYBIND11_MODULE(_treefuse, m) {
    m.doc() = "tree-structured GLM fitting with categorical level fusion";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("n", &Dataset::n)
        .def_property_readonly("response", &Dataset::response)
        .def_property_readonly("column_names",
                               [](const Dataset& d) {
                                   std::vector<std::string> names;
                                   for (const auto& c : d.columns())
                                       names.push_back(c.name);
                                   return names;
                               })
        .def("to_csv", [](const Dataset& d) { return dataset_to_csv(d); });

    py::class_<ClusterSet>(m, "ClusterSet")
        .def_readonly("variable", &ClusterSet::variable)
        .def_readonly("cells", &ClusterSet::cells)
        .def_readonly("effects", &ClusterSet::effects);

    py::class_<TreeStructuredModel>(m, "Model")
        .def_property_readonly("n_splits",
                               [](const TreeStructuredModel& m_) { return m_.n_splits; })
        .def_property_readonly("intercept",
                               [](const TreeStructuredModel& m_) { return m_.intercept; })
        .def_property_readonly("linear_names",
                               [](const TreeStructuredModel& m_) { return m_.linear_names; })
        .def_property_readonly("linear_coef",
                               [](const TreeStructuredModel& m_) {
                                   return to_vector(m_.linear_coef);
                               })
        .def_property_readonly("deviance",
                               [](const TreeStructuredModel& m_) {
                                   return m_.final_fit.deviance;
                               })
        .def("partitions",
             [](const TreeStructuredModel& m_, const std::string& var) {
                 return extract_partitions(m_, var);
             },
             py::arg("variable"))
        .def("predict_eta",
             [](const TreeStructuredModel& m_, const Dataset& d) {
                 return to_vector(m_.eta(d));
             },
             py::arg("dataset"))
        .def("to_json",
             [](const TreeStructuredModel& m_) { return model_to_json(m_).dump(2); });

    m.def("ingest",
          [](const std::string& csv_text, const std::string& schema_json) {
              return ingest_dataset(csv_text, schema_json);
          },
          py::arg("csv_text"), py::arg("schema_json"),
          "Parse delimited text against a JSON schema into a Dataset.");

    m.def("fit",
          [](const Dataset& d, const std::string& family, const std::string& stop,
             int max_splits, std::uint64_t seed) {
              return fit_tree_model(d, make_spec(family), StopRule::parse(stop, seed),
                                    max_splits);
          },
          py::arg("dataset"), py::arg("family") = "gaussian",
          py::arg("stop") = "pvalue:0.05", py::arg("max_splits") = -1,
          py::arg("seed") = 1,
          "Fit a tree-structured model; stop is pvalue:<alpha>, aic, bic or cv:<k>.");

    m.def("bootstrap",
          [](const Dataset& d, const std::string& family, const std::string& stop,
             int B, std::uint64_t seed, double level, int max_splits) {
              ModelSpec spec = make_spec(family);
              StopRule rule = StopRule::parse(stop, seed);
              TreeStructuredModel original = fit_tree_model(d, spec, rule, max_splits);
              BootstrapResult result =
                  run_bootstrap(d, spec, rule, B, seed, max_splits);
              py::dict out;
              out["B"] = result.B;
              out["n_success"] = result.n_success();
              out["failure_rate"] = result.failure_rate();
              out["failures"] = result.failures;
              py::list intervals;
              for (const auto& r : linear_confidence_intervals(result, original, level))
                  intervals.append(interval_dict(r));
              py::dict effects, similarity, stability;
              for (const auto& term : original.tree_terms) {
                  if (term.kind == Kind::Metric) continue;
                  py::list rows;
                  for (const auto& r : effect_confidence_intervals(
                           result, original, term.variable, level))
                      rows.append(interval_dict(r));
                  effects[py::str(term.variable)] = rows;
                  auto [sim, stab] =
                      similarity_and_stability(result, original, term.variable);
                  similarity[py::str(term.variable)] = to_nested(sim.s);
                  stability[py::str(term.variable)] = stab.stability;
              }
              out["linear_intervals"] = intervals;
              out["effect_intervals"] = effects;
              out["similarity"] = similarity;
              out["stability"] = stability;
              return out;
          },
          py::arg("dataset"), py::arg("family") = "gaussian",
          py::arg("stop") = "pvalue:0.05", py::arg("B") = 100, py::arg("seed") = 1,
          py::arg("level") = 0.95, py::arg("max_splits") = -1,
          "Bootstrap confidence intervals, cluster similarity and stability.");

    m.def("simulate",
          [](std::size_t n, int replicates, std::uint64_t seed) {
              SimConfig cfg;
              cfg.n = n;
              cfg.replicates = replicates;
              cfg.seed = seed;
              std::vector<StopRule> rules = {StopRule::pvalue(0.05),
                                             StopRule::pvalue(0.1),
                                             StopRule::aic(),
                                             StopRule::bic(),
                                             StopRule::kfold(5, 0),
                                             StopRule::kfold(10, 0)};
              return report_to_json(run_study(cfg, rules)).dump(2);
          },
          py::arg("n") = 2000, py::arg("replicates") = 100, py::arg("seed") = 1,
          "Run the synthetic stopping-rule study; returns the JSON report.");

    m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("index"),
          py::arg("stream") = 0, "Deterministic per-index substream seed.");
    m.def("config_hash", &config_hash, py::arg("canonical_config"));
}
