#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace treefuse {

/// Error raised for invalid input data or schema violations.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Kind { Nominal, Ordinal, Metric, Binary };
enum class Role { Tree, Linear, Smooth };

std::string to_string(Kind k);
std::string to_string(Role r);
Kind kind_from_string(const std::string& s);
Role role_from_string(const std::string& s);

/// One typed column of a dataset. Categorical values are stored as integer
/// codes 1..k (in doubles); metric/binary columns hold raw values.
struct Column {
    std::string name;
    Kind kind = Kind::Metric;
    Role role = Role::Linear;
    int levels = 0;                   // k, for nominal/ordinal
    std::vector<double> values;
    std::vector<std::string> labels;  // level labels, index = code-1
};

/// Immutable tabular input: a numeric response plus typed predictor columns.
class Dataset {
public:
    Dataset(std::string response_name, std::vector<double> response,
            std::vector<Column> columns);

    std::size_t n() const { return response_.size(); }
    const std::vector<double>& response() const { return response_; }
    const std::string& response_name() const { return response_name_; }
    const std::vector<Column>& columns() const { return columns_; }
    const Column& column(const std::string& name) const;
    bool has_column(const std::string& name) const;

private:
    std::string response_name_;
    std::vector<double> response_;
    std::vector<Column> columns_;
};

/// Permutation of nominal level codes ordered by increasing outcome mean.
/// Ties are broken by ascending original level code. rank_of[code-1] gives
/// the rank position in 1..k.
struct CategoryOrder {
    std::vector<int> rank_of;          // level code -> rank (1..k)
    std::vector<int> level_at;         // rank -> level code
    std::vector<double> level_means;
    int k() const { return static_cast<int>(rank_of.size()); }
    bool empty() const { return rank_of.empty(); }
};

/// Candidate split thresholds for one tree-role variable. For nominal
/// variables thresholds act on the ranks of `order`.
struct SplitSet {
    std::string variable;
    std::vector<double> candidates;    // strictly increasing
    CategoryOrder order;               // non-empty only for nominal
    std::size_t size() const { return candidates.size(); }
};

/// Outcome-mean ordering of a nominal variable's levels, restricted to the
/// given rows. Levels unobserved on those rows sort last (by code); the
/// strict variant rejects them.
CategoryOrder nominal_ordering(const Dataset& d, const std::string& var,
                               const std::vector<std::size_t>& rows,
                               bool strict = true);
CategoryOrder nominal_ordering(const Dataset& d, const std::string& var);

/// Candidate thresholds for a tree-role variable on the given rows.
/// Ordinal: 1..k-1; metric: sorted distinct values minus the maximum;
/// nominal: rank thresholds 1..k-1 under outcome-mean ordering.
SplitSet candidate_splits(const Dataset& d, const std::string& var,
                          const std::vector<std::size_t>& rows,
                          bool strict = true);
SplitSet candidate_splits(const Dataset& d, const std::string& var);

std::vector<std::size_t> all_rows(const Dataset& d);

}  // namespace treefuse
