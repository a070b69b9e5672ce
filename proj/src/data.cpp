#include "treefuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace treefuse {

std::string to_string(Kind k) {
    switch (k) {
        case Kind::Nominal: return "nominal";
        case Kind::Ordinal: return "ordinal";
        case Kind::Metric: return "metric";
        case Kind::Binary: return "binary";
    }
    return "?";
}

std::string to_string(Role r) {
    switch (r) {
        case Role::Tree: return "tree";
        case Role::Linear: return "linear";
        case Role::Smooth: return "smooth";
    }
    return "?";
}

Kind kind_from_string(const std::string& s) {
    if (s == "nominal") return Kind::Nominal;
    if (s == "ordinal") return Kind::Ordinal;
    if (s == "metric") return Kind::Metric;
    if (s == "binary") return Kind::Binary;
    throw DataError("unknown variable kind: '" + s + "'");
}

Role role_from_string(const std::string& s) {
    if (s == "tree") return Role::Tree;
    if (s == "linear") return Role::Linear;
    if (s == "smooth") return Role::Smooth;
    throw DataError("unknown variable role: '" + s + "'");
}

Dataset::Dataset(std::string response_name, std::vector<double> response,
                 std::vector<Column> columns)
    : response_name_(std::move(response_name)),
      response_(std::move(response)),
      columns_(std::move(columns)) {
    const std::size_t n = response_.size();
    if (n == 0) throw DataError("dataset has no rows");
    for (double y : response_)
        if (!std::isfinite(y)) throw DataError("non-finite response value");
    for (const Column& c : columns_) {
        if (c.values.size() != n)
            throw DataError("column '" + c.name + "' has length " +
                            std::to_string(c.values.size()) + ", expected " +
                            std::to_string(n));
        if (c.kind == Kind::Nominal || c.kind == Kind::Ordinal) {
            if (c.levels < 2)
                throw DataError("column '" + c.name + "': categorical k must be >= 2");
            std::vector<bool> seen(static_cast<std::size_t>(c.levels), false);
            for (double v : c.values) {
                double r = std::round(v);
                if (!std::isfinite(v) || r != v || r < 1 || r > c.levels)
                    throw DataError("column '" + c.name +
                                    "': level code out of range 1.." +
                                    std::to_string(c.levels));
                seen[static_cast<std::size_t>(r) - 1] = true;
            }
            for (int l = 0; l < c.levels; ++l)
                if (!seen[static_cast<std::size_t>(l)])
                    throw DataError("column '" + c.name + "': empty level " +
                                    (static_cast<std::size_t>(l) < c.labels.size()
                                         ? "'" + c.labels[static_cast<std::size_t>(l)] + "'"
                                         : std::to_string(l + 1)));
        } else if (c.kind == Kind::Binary) {
            for (double v : c.values)
                if (v != 0.0 && v != 1.0)
                    throw DataError("column '" + c.name + "': binary values must be 0/1");
        } else {
            for (double v : c.values)
                if (!std::isfinite(v))
                    throw DataError("column '" + c.name + "': non-finite value");
        }
        if (c.role == Role::Smooth && c.kind != Kind::Metric)
            throw DataError("column '" + c.name + "': smooth role requires metric kind");
    }
}

const Column& Dataset::column(const std::string& name) const {
    for (const Column& c : columns_)
        if (c.name == name) return c;
    throw DataError("no such column: '" + name + "'");
}

bool Dataset::has_column(const std::string& name) const {
    for (const Column& c : columns_)
        if (c.name == name) return true;
    return false;
}

std::vector<std::size_t> all_rows(const Dataset& d) {
    std::vector<std::size_t> rows(d.n());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

CategoryOrder nominal_ordering(const Dataset& d, const std::string& var,
                               const std::vector<std::size_t>& rows,
                               bool strict) {
    const Column& c = d.column(var);
    if (c.kind != Kind::Nominal)
        throw DataError("nominal_ordering: column '" + var + "' is not nominal");
    const int k = c.levels;
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    const auto& y = d.response();
    for (std::size_t r : rows) {
        auto code = static_cast<std::size_t>(c.values[r]) - 1;
        sum[code] += y[r];
        ++count[code];
    }
    CategoryOrder ord;
    ord.level_means.resize(static_cast<std::size_t>(k));
    ord.level_at.resize(static_cast<std::size_t>(k));
    for (int l = 0; l < k; ++l) {
        auto i = static_cast<std::size_t>(l);
        if (count[i] == 0) {
            if (strict)
                throw DataError("nominal_ordering: level " + std::to_string(l + 1) +
                                " of '" + var + "' unobserved");
            ord.level_means[i] = std::numeric_limits<double>::infinity();
        } else {
            ord.level_means[i] = sum[i] / static_cast<double>(count[i]);
        }
        ord.level_at[i] = l + 1;
    }
    std::stable_sort(ord.level_at.begin(), ord.level_at.end(),
                     [&](int a, int b) {
                         double ma = ord.level_means[static_cast<std::size_t>(a) - 1];
                         double mb = ord.level_means[static_cast<std::size_t>(b) - 1];
                         if (ma != mb) return ma < mb;
                         return a < b;
                     });
    ord.rank_of.resize(static_cast<std::size_t>(k));
    for (int r = 0; r < k; ++r)
        ord.rank_of[static_cast<std::size_t>(ord.level_at[static_cast<std::size_t>(r)]) - 1] = r + 1;
    return ord;
}

CategoryOrder nominal_ordering(const Dataset& d, const std::string& var) {
    return nominal_ordering(d, var, all_rows(d));
}

SplitSet candidate_splits(const Dataset& d, const std::string& var,
                          const std::vector<std::size_t>& rows, bool strict) {
    const Column& c = d.column(var);
    if (c.role != Role::Tree)
        throw DataError("candidate_splits: column '" + var + "' has no tree role");
    SplitSet s;
    s.variable = var;
    if (c.kind == Kind::Metric) {
        std::set<double> distinct;
        for (std::size_t r : rows) distinct.insert(c.values[r]);
        if (distinct.size() >= 2) {
            s.candidates.assign(distinct.begin(), std::prev(distinct.end()));
        }
        return s;
    }
    if (c.kind == Kind::Binary) {
        bool has0 = false, has1 = false;
        for (std::size_t r : rows) (c.values[r] == 0.0 ? has0 : has1) = true;
        if (has0 && has1) s.candidates.push_back(0.0);
        return s;
    }
    const int k = c.levels;
    if (c.kind == Kind::Nominal)
        s.order = nominal_ordering(d, var, rows, strict);
    for (int t = 1; t < k; ++t) s.candidates.push_back(static_cast<double>(t));
    return s;
}

SplitSet candidate_splits(const Dataset& d, const std::string& var) {
    return candidate_splits(d, var, all_rows(d));
}

}  // namespace treefuse
