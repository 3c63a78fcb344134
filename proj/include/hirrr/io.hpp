#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "json.hpp"

#include "hirrr/estimators.hpp"

namespace hirrr {

using Json = nlohmann::ordered_json;

/// Fixed-format number for CSV output ("%.10g"); NaN prints as NA.
std::string format_number(double v);

Json matrix_to_json(const Eigen::MatrixXd& M);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

/// {"rank","A","B","mu","Ltilde","phi","objective_trace"}; matrices as {"rows","cols","data"} row-major.
Json params_to_json(const ModelParams& params);
ModelParams params_from_json(const Json& j);

/// {"X","Y","Ytilde","q0","families","feature_names","outcome_names"}.
Json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const Json& j);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
Json read_json_file(const std::string& path);
/// Two-space indented JSON with a trailing newline.
void write_json_file(const std::string& path, const Json& j);

/// Minimal RFC 4180 reader: comma separated, double-quoted fields may hold commas/quotes/newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
/// Quotes a field when it contains a comma, quote or newline.
std::string csv_escape(const std::string& field);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace hirrr
