#pragma once

#include <Eigen/Dense>
#include <string>

#include <json.hpp>

namespace dsmpc {

// Row-major nested arrays. A scalar is accepted as a 1x1 matrix; a flat array
// is accepted as a column vector when `vector` reading is requested.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& doc);

/// Full-precision decimal for CSV output (round-trips through strtod).
std::string format_double(double value);

}  // namespace dsmpc
