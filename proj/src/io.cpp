#include "treefuse/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace treefuse {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("non-numeric value '" + s + "' in column '" + col +
                        "', row " + std::to_string(row));
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

Dataset ingest_dataset(const std::string& csv_text, const std::string& schema_json) {
    json schema;
    try {
        schema = json::parse(schema_json);
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid schema JSON: ") + e.what());
    }
    if (!schema.contains("response") || !schema["response"].is_string())
        throw DataError("schema must name a response column");
    if (!schema.contains("columns") || !schema["columns"].is_object())
        throw DataError("schema must contain a columns object");
    const std::string response_name = schema["response"].get<std::string>();

    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input: header row required");
    std::vector<std::string> header = split_line(line);

    std::vector<std::vector<std::string>> cells(header.size());
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != header.size())
            throw DataError("row " + std::to_string(n + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (fields[j].empty())
                throw DataError("missing value in column '" + header[j] +
                                "', row " + std::to_string(n + 1));
            cells[j].push_back(fields[j]);
        }
        ++n;
    }
    if (n == 0) throw DataError("no data rows");

    auto col_index = [&](const std::string& name) {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw DataError("schema column '" + name + "' not found in data header");
    };

    std::vector<double> response;
    {
        std::size_t j = col_index(response_name);
        for (std::size_t i = 0; i < n; ++i)
            response.push_back(parse_number(cells[j][i], i + 1, response_name));
    }

    std::vector<Column> columns;
    for (auto it = schema["columns"].begin(); it != schema["columns"].end(); ++it) {
        const std::string& name = it.key();
        if (name == response_name)
            throw DataError("response column '" + name + "' cannot appear under columns");
        const json& info = it.value();
        Column c;
        c.name = name;
        c.kind = kind_from_string(info.at("kind").get<std::string>());
        c.role = role_from_string(info.at("role").get<std::string>());
        std::size_t j = col_index(name);

        if (c.kind == Kind::Ordinal) {
            if (!info.contains("levels"))
                throw DataError("ordinal column '" + name +
                                "' requires an explicit 'levels' order");
            c.labels = info["levels"].get<std::vector<std::string>>();
            c.levels = static_cast<int>(c.labels.size());
            for (std::size_t i = 0; i < n; ++i) {
                auto pos = std::find(c.labels.begin(), c.labels.end(), cells[j][i]);
                if (pos == c.labels.end())
                    throw DataError("unknown level '" + cells[j][i] + "' in column '" +
                                    name + "', row " + std::to_string(i + 1));
                c.values.push_back(static_cast<double>(pos - c.labels.begin()) + 1.0);
            }
        } else if (c.kind == Kind::Nominal) {
            if (info.contains("levels"))
                throw DataError("nominal column '" + name +
                                "' takes first-appearance level order, not 'levels'");
            for (std::size_t i = 0; i < n; ++i) {
                auto pos = std::find(c.labels.begin(), c.labels.end(), cells[j][i]);
                if (pos == c.labels.end()) {
                    c.labels.push_back(cells[j][i]);
                    pos = std::prev(c.labels.end());
                }
                c.values.push_back(static_cast<double>(pos - c.labels.begin()) + 1.0);
            }
            c.levels = static_cast<int>(c.labels.size());
        } else {
            if (info.contains("levels"))
                throw DataError("'levels' is only valid for categorical columns");
            for (std::size_t i = 0; i < n; ++i)
                c.values.push_back(parse_number(cells[j][i], i + 1, name));
        }
        columns.push_back(std::move(c));
    }
    return Dataset(response_name, std::move(response), std::move(columns));
}

Dataset ingest_dataset_files(const std::string& csv_path, const std::string& schema_path) {
    return ingest_dataset(read_file(csv_path), read_file(schema_path));
}

std::string format_double(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::ostringstream os;
        os << static_cast<long long>(v);
        return os.str();
    }
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::string dataset_to_csv(const Dataset& d) {
    std::ostringstream os;
    os << d.response_name();
    for (const auto& c : d.columns()) os << "," << c.name;
    os << "\n";
    for (std::size_t i = 0; i < d.n(); ++i) {
        os << format_double(d.response()[i]);
        for (const auto& c : d.columns()) {
            if ((c.kind == Kind::Nominal || c.kind == Kind::Ordinal) &&
                !c.labels.empty())
                os << "," << c.labels[static_cast<std::size_t>(c.values[i]) - 1];
            else
                os << "," << format_double(c.values[i]);
        }
        os << "\n";
    }
    return os.str();
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

std::string level_label(const Dataset& d, const std::string& var, int code) {
    const Column& c = d.column(var);
    if (static_cast<std::size_t>(code) <= c.labels.size())
        return c.labels[static_cast<std::size_t>(code) - 1];
    return std::to_string(code);
}

}  // namespace

json model_to_json(const TreeStructuredModel& model) {
    json j;
    j["family"] = to_string(model.family);
    j["stop_rule"] = model.rule.name();
    j["n_splits"] = model.n_splits;
    j["intercept"] = model.intercept;
    j["deviance"] = model.final_fit.deviance;
    j["converged"] = model.final_fit.converged;
    j["edf"] = model.final_fit.edf;

    json terms = json::array();
    for (const auto& t : model.tree_terms) {
        json tj;
        tj["variable"] = t.variable;
        tj["kind"] = to_string(t.kind);
        tj["thresholds"] = t.thresholds;
        tj["cum_effects"] = t.cum_effects;
        if (!t.order.empty()) {
            tj["level_order"] = t.order.level_at;
            tj["level_means"] = t.order.level_means;
        }
        terms.push_back(std::move(tj));
    }
    j["tree_terms"] = std::move(terms);

    json lin = json::object();
    for (std::size_t i = 0; i < model.linear_names.size(); ++i)
        lin[model.linear_names[i]] = model.linear_coef[static_cast<Eigen::Index>(i)];
    j["linear"] = std::move(lin);

    json smooths = json::array();
    for (const auto& s : model.smooth_terms) {
        json sj;
        sj["variable"] = s.variable;
        sj["lambda"] = s.lambda;
        sj["edf"] = s.edf;
        sj["basis_dim"] = s.basis.dim;
        sj["knots"] = s.basis.knots;
        sj["coef"] = vector_to_json(s.coef);
        smooths.push_back(std::move(sj));
    }
    j["smooth_terms"] = std::move(smooths);
    j["coefficients"] = vector_to_json(model.final_fit.coef);
    j["coefficient_names"] = model.final_fit.colnames;
    j["trace"] = trace_to_json(model.trace);
    return j;
}

json trace_to_json(const SplitTrace& trace) {
    json j;
    j["m_total"] = trace.m_total;
    j["null_deviance"] = trace.null_deviance;
    if (!trace.truncation_reason.empty())
        j["truncation_reason"] = trace.truncation_reason;
    json steps = json::array();
    for (const auto& s : trace.steps) {
        json sj;
        sj["step"] = s.split.step;
        sj["variable"] = s.split.variable;
        sj["threshold"] = s.split.threshold;
        sj["deviance"] = s.deviance;
        sj["p_value"] = s.p_value;
        sj["edf"] = s.edf;
        steps.push_back(std::move(sj));
    }
    j["steps"] = std::move(steps);
    return j;
}

json report_to_json(const StudyReport& report) {
    json j;
    j["n"] = report.config.n;
    j["replicates"] = report.config.replicates;
    j["seed"] = report.config.seed;
    j["failures"] = report.failures;
    json rules = json::array();
    for (const auto& r : report.rules) {
        json rj;
        rj["rule"] = r.rule;
        auto collect = [&](auto getter) {
            std::vector<double> v;
            for (const auto& m : r.metrics) v.push_back(getter(m));
            return v;
        };
        auto summarize = [&](const std::vector<double>& v) {
            auto q = quartiles(v);
            return json{{"q1", q[0]}, {"median", q[1]}, {"q3", q[2]}};
        };
        rj["mse_alpha_ordinal"] = summarize(collect([](const SimMetrics& m) { return m.mse_alpha_ordinal; }));
        rj["mse_alpha_nominal"] = summarize(collect([](const SimMetrics& m) { return m.mse_alpha_nominal; }));
        rj["mse_beta"] = summarize(collect([](const SimMetrics& m) { return m.mse_beta; }));
        rj["fpr_ordinal"] = summarize(collect([](const SimMetrics& m) { return m.fpr_ordinal; }));
        rj["fpr_nominal"] = summarize(collect([](const SimMetrics& m) { return m.fpr_nominal; }));
        rj["fnr_ordinal"] = summarize(collect([](const SimMetrics& m) { return m.fnr_ordinal; }));
        rj["fnr_nominal"] = summarize(collect([](const SimMetrics& m) { return m.fnr_nominal; }));
        rj["splits_ordinal"] = summarize(collect([](const SimMetrics& m) { return m.splits_ordinal; }));
        rj["splits_nominal"] = summarize(collect([](const SimMetrics& m) { return m.splits_nominal; }));
        json hist = json::object();
        for (const auto& [count, freq] : r.split_count_histogram)
            hist[std::to_string(count)] = freq;
        rj["split_count_histogram"] = std::move(hist);
        json per_rep = json::array();
        for (const auto& m : r.metrics)
            per_rep.push_back(json{{"mse_alpha_ordinal", m.mse_alpha_ordinal},
                                   {"mse_alpha_nominal", m.mse_alpha_nominal},
                                   {"mse_beta", m.mse_beta},
                                   {"fpr_ordinal", m.fpr_ordinal},
                                   {"fpr_nominal", m.fpr_nominal},
                                   {"fnr_ordinal", m.fnr_ordinal},
                                   {"fnr_nominal", m.fnr_nominal},
                                   {"splits_ordinal", m.splits_ordinal},
                                   {"splits_nominal", m.splits_nominal},
                                   {"splits_total", m.splits_total}});
        rj["per_replicate"] = std::move(per_rep);
        rules.push_back(std::move(rj));
    }
    j["rules"] = std::move(rules);
    return j;
}

std::string partitions_to_csv(const TreeStructuredModel& model, const Dataset& d) {
    std::ostringstream os;
    os << "variable,cluster,levels,effect\n";
    for (const auto& t : model.tree_terms) {
        if (t.kind == Kind::Metric) continue;
        ClusterSet cs = extract_partitions(model, t.variable);
        for (std::size_t c = 0; c < cs.cells.size(); ++c) {
            os << t.variable << "," << c + 1 << ",";
            for (std::size_t i = 0; i < cs.cells[c].size(); ++i)
                os << (i ? ";" : "") << level_label(d, t.variable, cs.cells[c][i]);
            os << "," << format_double(cs.effects[c]) << "\n";
        }
    }
    return os.str();
}

std::string coefficient_paths_to_csv(const SplitTrace& trace) {
    std::ostringstream os;
    os << "step,parameter,value\n";
    for (const auto& row : coefficient_paths(trace))
        os << row.step << "," << row.parameter << "," << format_double(row.value)
           << "\n";
    return os.str();
}

std::string smooth_grid_to_csv(const TreeStructuredModel& model, const Dataset& d,
                               int grid_points) {
    std::ostringstream os;
    os << "variable,x,fitted\n";
    for (const auto& s : model.smooth_terms) {
        const Column& c = d.column(s.variable);
        double lo = *std::min_element(c.values.begin(), c.values.end());
        double hi = *std::max_element(c.values.begin(), c.values.end());
        for (int i = 0; i < grid_points; ++i) {
            double x = lo + (hi - lo) * static_cast<double>(i) /
                                static_cast<double>(grid_points - 1);
            os << s.variable << "," << format_double(x) << ","
               << format_double(s.value(x)) << "\n";
        }
    }
    return os.str();
}

std::string intervals_to_csv(const std::vector<IntervalRow>& rows) {
    std::ostringstream os;
    os << "parameter,estimate,lower,upper\n";
    for (const auto& r : rows)
        os << r.parameter << "," << format_double(r.estimate) << ","
           << format_double(r.lower) << "," << format_double(r.upper) << "\n";
    return os.str();
}

std::string similarity_to_csv(const SimilarityMatrix& sim) {
    std::ostringstream os;
    os << "variable,level_i,level_j,similarity\n";
    for (Eigen::Index i = 0; i < sim.s.rows(); ++i)
        for (Eigen::Index j = 0; j < sim.s.cols(); ++j)
            os << sim.variable << "," << i + 1 << "," << j + 1 << ","
               << format_double(sim.s(i, j)) << "\n";
    return os.str();
}

std::string stability_to_csv(const std::string& var, const ClusterStability& stab) {
    std::ostringstream os;
    os << "variable,cluster,levels,stability\n";
    for (std::size_t c = 0; c < stab.cells.size(); ++c) {
        os << var << "," << c + 1 << ",";
        for (std::size_t i = 0; i < stab.cells[c].size(); ++i)
            os << (i ? ";" : "") << stab.cells[c][i];
        os << "," << format_double(stab.stability[c]) << "\n";
    }
    return os.str();
}

std::string config_hash(const std::string& canonical_config) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : canonical_config) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace treefuse
