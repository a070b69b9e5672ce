#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "treefuse/bootstrap.hpp"
#include "treefuse/simulation.hpp"
#include "treefuse/tree.hpp"

namespace treefuse {

/// Parses comma-delimited text (header row, UTF-8) against a JSON schema:
///   { "response": "<column>",
///     "columns": { "<name>": { "kind": "nominal|ordinal|metric|binary",
///                              "role": "tree|linear|smooth",
///                              "levels": ["a","b",...] } } }
/// `levels` is required for ordinal columns (the order is domain knowledge)
/// and forbidden otherwise. Nominal levels are coded in first-appearance
/// order. Missing values are rejected with row and column.
Dataset ingest_dataset(const std::string& csv_text, const std::string& schema_json);
Dataset ingest_dataset_files(const std::string& csv_path, const std::string& schema_path);

std::string dataset_to_csv(const Dataset& d);

nlohmann::json model_to_json(const TreeStructuredModel& model);
nlohmann::json trace_to_json(const SplitTrace& trace);
nlohmann::json report_to_json(const StudyReport& report);

std::string partitions_to_csv(const TreeStructuredModel& model, const Dataset& d);
std::string coefficient_paths_to_csv(const SplitTrace& trace);
/// (x, f(x)) over a 200-point grid per smooth term.
std::string smooth_grid_to_csv(const TreeStructuredModel& model, const Dataset& d,
                               int grid_points = 200);
std::string intervals_to_csv(const std::vector<IntervalRow>& rows);
std::string similarity_to_csv(const SimilarityMatrix& sim);
std::string stability_to_csv(const std::string& var, const ClusterStability& stab);

/// Canonical numeric formatting used by every delimited artifact.
std::string format_double(double v);

/// FNV-1a hash of a string, hex-encoded; used to stamp artifacts with their
/// generating config.
std::string config_hash(const std::string& canonical_config);

}  // namespace treefuse
