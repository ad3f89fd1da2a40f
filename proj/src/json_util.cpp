#include "dsmpc/json_util.hpp"

#include <cstdio>
#include <fstream>

#include "dsmpc/errors.hpp"

namespace dsmpc {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
    if (j.is_number()) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = j.get<double>();
        return m;
    }
    if (!j.is_array()) throw InvalidConfig(what + ": expected a row-major nested array");
    const auto rows = j.size();
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    if (!j[0].is_array()) throw InvalidConfig(what + ": expected rows as arrays");
    const auto cols = j[0].size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw InvalidConfig(what + ": ragged row " + std::to_string(r));
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    auto out = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
    if (j.is_number()) {
        Eigen::VectorXd v(1);
        v(0) = j.get<double>();
        return v;
    }
    if (!j.is_array()) throw InvalidConfig(what + ": expected an array");
    Eigen::VectorXd v(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) v(k) = j[k].get<double>();
    return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    auto out = nlohmann::json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
    return out;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump(2) << '\n';
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

}  // namespace dsmpc
