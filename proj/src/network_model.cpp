#include "dsmpc/network_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"

namespace dsmpc {

const CouplingBlock* SubsystemModel::coupling(std::size_t j) const {
    for (const auto& c : couplings)
        if (c.neighbor == j) return &c;
    return nullptr;
}

NetworkModel::NetworkModel(std::vector<SubsystemModel> subsystems)
    : subsystems_(std::move(subsystems)) {
    for (auto& s : subsystems_) {
        std::stable_sort(s.couplings.begin(), s.couplings.end(),
                         [](const CouplingBlock& a, const CouplingBlock& b) { return a.neighbor < b.neighbor; });
        state_offsets_.push_back(state_offsets_.back() + s.state_dim);
        input_offsets_.push_back(input_offsets_.back() + s.input_dim);
        disturbance_offsets_.push_back(disturbance_offsets_.back() + s.disturbance_dim);
    }
}

std::vector<std::size_t> NetworkModel::neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& c : subsystem(i).couplings) out.push_back(c.neighbor);
    return out;
}

std::vector<std::size_t> NetworkModel::strict_neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& c : subsystem(i).couplings)
        if (c.neighbor != i) out.push_back(c.neighbor);
    return out;
}

std::size_t NetworkModel::neighborhood_dim(std::size_t i) const {
    std::size_t n = 0;
    for (const auto& c : subsystem(i).couplings) n += subsystem(c.neighbor).state_dim;
    return n;
}

std::size_t NetworkModel::neighborhood_offset(std::size_t i, std::size_t j) const {
    std::size_t offset = 0;
    for (const auto& c : subsystem(i).couplings) {
        if (c.neighbor == j) return offset;
        offset += subsystem(c.neighbor).state_dim;
    }
    throw InvalidArgument("subsystem " + std::to_string(j) + " is not a neighbor of " + std::to_string(i));
}

MatrixXd NetworkModel::neighborhood_matrix(std::size_t i) const {
    const auto& s = subsystem(i);
    MatrixXd out(s.state_dim, neighborhood_dim(i));
    std::size_t col = 0;
    for (const auto& c : s.couplings) {
        const auto nj = subsystem(c.neighbor).state_dim;
        out.middleCols(col, nj) = c.block;
        col += nj;
    }
    return out;
}

VectorXd NetworkModel::gather_neighborhood(std::size_t i, const VectorXd& stacked) const {
    VectorXd out(neighborhood_dim(i));
    std::size_t pos = 0;
    for (const auto& c : subsystem(i).couplings) {
        const auto nj = subsystem(c.neighbor).state_dim;
        out.segment(pos, nj) = stacked.segment(state_offset(c.neighbor), nj);
        pos += nj;
    }
    return out;
}

MatrixXd NetworkModel::dense_A() const {
    MatrixXd A = MatrixXd::Zero(total_states(), total_states());
    for (std::size_t i = 0; i < size(); ++i)
        for (const auto& c : subsystems_[i].couplings)
            A.block(state_offset(i), state_offset(c.neighbor), c.block.rows(), c.block.cols()) = c.block;
    return A;
}

MatrixXd NetworkModel::dense_B() const {
    MatrixXd B = MatrixXd::Zero(total_states(), total_inputs());
    for (std::size_t i = 0; i < size(); ++i)
        B.block(state_offset(i), input_offset(i), subsystems_[i].B.rows(), subsystems_[i].B.cols()) = subsystems_[i].B;
    return B;
}

MatrixXd NetworkModel::dense_G() const {
    MatrixXd G = MatrixXd::Zero(total_states(), total_disturbances());
    for (std::size_t i = 0; i < size(); ++i)
        G.block(state_offset(i), disturbance_offset(i), subsystems_[i].G.rows(), subsystems_[i].G.cols()) =
            subsystems_[i].G;
    return G;
}

Eigen::Ref<const VectorXd> NetworkModel::state_of(std::size_t i, const VectorXd& stacked) const {
    return stacked.segment(state_offset(i), subsystem(i).state_dim);
}

const char* to_string(ConstraintKind kind) { return kind == ConstraintKind::State ? "state" : "input"; }

ConstraintKind constraint_kind_from_string(const std::string& s) {
    if (s == "state" || s == "x") return ConstraintKind::State;
    if (s == "input" || s == "u") return ConstraintKind::Input;
    throw InvalidConfig("unknown constraint kind '" + s + "'");
}

ConstraintSet::ConstraintSet(std::vector<HalfSpace> halfspaces) : halfspaces_(std::move(halfspaces)) {
    local_index_.resize(halfspaces_.size());
    for (std::size_t q = 0; q < halfspaces_.size(); ++q) {
        std::size_t j = 0;
        for (std::size_t r = 0; r < q; ++r)
            if (halfspaces_[r].owner == halfspaces_[q].owner && halfspaces_[r].kind == halfspaces_[q].kind) ++j;
        local_index_[q] = j;
    }
}

std::size_t ConstraintSet::find(ConstraintKind kind, std::size_t owner, std::size_t j) const {
    for (std::size_t q = 0; q < halfspaces_.size(); ++q)
        if (halfspaces_[q].kind == kind && halfspaces_[q].owner == owner && local_index_[q] == j) return q;
    throw InvalidArgument(std::string("no ") + to_string(kind) + " half-space (" + std::to_string(owner) + ", " +
                          std::to_string(j) + ")");
}

std::vector<std::size_t> ConstraintSet::of(std::size_t owner, ConstraintKind kind) const {
    std::vector<std::size_t> out;
    for (std::size_t q = 0; q < halfspaces_.size(); ++q)
        if (halfspaces_[q].owner == owner && halfspaces_[q].kind == kind) out.push_back(q);
    return out;
}

std::vector<Violation> validate_network(const NetworkModel& model) {
    std::vector<Violation> report;
    auto flag = [&](std::size_t i, const std::string& msg) { report.push_back({i, msg}); };
    const auto M = model.size();
    for (std::size_t i = 0; i < M; ++i) {
        const auto& s = model.subsystem(i);
        if (s.index != i) flag(i, "index field " + std::to_string(s.index) + " does not match position");
        if (s.state_dim == 0) flag(i, "state dimension is zero");
        if (static_cast<std::size_t>(s.B.rows()) != s.state_dim || static_cast<std::size_t>(s.B.cols()) != s.input_dim)
            flag(i, "B is " + std::to_string(s.B.rows()) + "x" + std::to_string(s.B.cols()) + ", expected " +
                        std::to_string(s.state_dim) + "x" + std::to_string(s.input_dim));
        if (static_cast<std::size_t>(s.G.rows()) != s.state_dim ||
            static_cast<std::size_t>(s.G.cols()) != s.disturbance_dim)
            flag(i, "G is " + std::to_string(s.G.rows()) + "x" + std::to_string(s.G.cols()) + ", expected " +
                        std::to_string(s.state_dim) + "x" + std::to_string(s.disturbance_dim));
        for (std::size_t k = 0; k < s.couplings.size(); ++k) {
            const auto& c = s.couplings[k];
            const auto tag = "A_" + std::to_string(i) + "," + std::to_string(c.neighbor);
            if (k > 0 && s.couplings[k - 1].neighbor == c.neighbor) flag(i, tag + " stored twice");
            if (c.neighbor >= M) {
                flag(i, tag + " refers to a subsystem outside the network");
                continue;
            }
            const auto nj = model.subsystem(c.neighbor).state_dim;
            if (static_cast<std::size_t>(c.block.rows()) != s.state_dim ||
                static_cast<std::size_t>(c.block.cols()) != nj) {
                flag(i, tag + " is " + std::to_string(c.block.rows()) + "x" + std::to_string(c.block.cols()) +
                            ", expected " + std::to_string(s.state_dim) + "x" + std::to_string(nj));
                continue;
            }
            if ((c.block.array() == 0.0).all())
                flag(i, tag + " is all zero; " + std::to_string(c.neighbor) + " is a spurious neighbor");
        }
    }
    return report;
}

std::vector<Violation> validate_constraints(const NetworkModel& model, const ConstraintSet& constraints) {
    std::vector<Violation> report;
    for (std::size_t q = 0; q < constraints.size(); ++q) {
        const auto& h = constraints[q];
        const auto tag = "half-space " + std::to_string(q);
        if (h.owner >= model.size()) {
            report.push_back({h.owner, tag + " has unknown owner"});
            continue;
        }
        const auto& s = model.subsystem(h.owner);
        const auto expected = h.kind == ConstraintKind::State ? s.state_dim : s.input_dim;
        if (static_cast<std::size_t>(h.direction.size()) != expected)
            report.push_back({h.owner, tag + " direction has length " + std::to_string(h.direction.size()) +
                                           ", expected " + std::to_string(expected)});
        else if ((h.direction.array() == 0.0).all())
            report.push_back({h.owner, tag + " direction is zero"});
        if (!(h.probability > 0.0 && h.probability < 1.0))
            report.push_back({h.owner, tag + " probability must lie in (0,1)"});
    }
    return report;
}

void require_valid(const NetworkModel& model) {
    const auto report = validate_network(model);
    if (report.empty()) return;
    std::ostringstream os;
    os << "invalid network model:";
    for (const auto& v : report) os << "\n  subsystem " << v.subsystem << ": " << v.message;
    throw InvalidArgument(os.str());
}

VectorXd step_dynamics(const NetworkModel& model, const VectorXd& x, const VectorXd& u, const VectorXd& w) {
    if (static_cast<std::size_t>(x.size()) != model.total_states())
        throw DimensionMismatch("state vector has length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(model.total_states()));
    if (static_cast<std::size_t>(u.size()) != model.total_inputs())
        throw DimensionMismatch("input vector has length " + std::to_string(u.size()) + ", expected " +
                                std::to_string(model.total_inputs()));
    if (static_cast<std::size_t>(w.size()) != model.total_disturbances())
        throw DimensionMismatch("disturbance vector has length " + std::to_string(w.size()) + ", expected " +
                                std::to_string(model.total_disturbances()));
    VectorXd next(model.total_states());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = model.subsystem(i);
        VectorXd xi = s.B * u.segment(model.input_offset(i), s.input_dim) +
                      s.G * w.segment(model.disturbance_offset(i), s.disturbance_dim);
        for (const auto& c : s.couplings) {
            if (c.neighbor >= model.size() || c.block.rows() != xi.size() ||
                static_cast<std::size_t>(c.block.cols()) != model.subsystem(c.neighbor).state_dim)
                throw DimensionMismatch("coupling block A_" + std::to_string(i) + "," + std::to_string(c.neighbor) +
                                            " has inconsistent shape",
                                        i);
            xi += c.block * x.segment(model.state_offset(c.neighbor), c.block.cols());
        }
        next.segment(model.state_offset(i), s.state_dim) = xi;
    }
    return next;
}

std::vector<std::size_t> gersgorin_violations(const MatrixXd& matrix) {
    if (matrix.rows() != matrix.cols()) throw InvalidArgument("Gersgorin check requires a square matrix");
    std::vector<std::size_t> rows;
    for (Eigen::Index r = 0; r < matrix.rows(); ++r)
        if (!(matrix.row(r).cwiseAbs().sum() < 1.0)) rows.push_back(static_cast<std::size_t>(r));
    return rows;
}

bool gersgorin_stable(const MatrixXd& matrix) { return gersgorin_violations(matrix).empty(); }

NetworkModel network_from_json(const nlohmann::json& doc) {
    const auto& subs = doc.contains("subsystems") ? doc.at("subsystems") : doc;
    if (!subs.is_array()) throw InvalidConfig("network: 'subsystems' must be an array");
    std::vector<SubsystemModel> out;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& s = subs[i];
        const auto tag = "subsystem " + std::to_string(i);
        SubsystemModel m;
        m.index = s.value("index", i);
        m.state_dim = s.at("state_dim").get<std::size_t>();
        m.input_dim = s.at("input_dim").get<std::size_t>();
        m.disturbance_dim = s.at("disturbance_dim").get<std::size_t>();
        m.B = matrix_from_json(s.at("B"), tag + " B");
        m.G = matrix_from_json(s.at("G"), tag + " G");
        if (s.contains("A")) {
            for (const auto& [key, block] : s.at("A").items()) {
                CouplingBlock c;
                try {
                    c.neighbor = std::stoul(key);
                } catch (const std::exception&) {
                    throw InvalidConfig(tag + ": coupling key '" + key + "' is not a subsystem index");
                }
                c.block = matrix_from_json(block, tag + " A_" + key);
                m.couplings.push_back(std::move(c));
            }
        }
        out.push_back(std::move(m));
    }
    return NetworkModel(std::move(out));
}

nlohmann::json network_to_json(const NetworkModel& model) {
    auto subs = nlohmann::json::array();
    for (const auto& s : model.subsystems()) {
        nlohmann::json js;
        js["index"] = s.index;
        js["state_dim"] = s.state_dim;
        js["input_dim"] = s.input_dim;
        js["disturbance_dim"] = s.disturbance_dim;
        js["B"] = matrix_to_json(s.B);
        js["G"] = matrix_to_json(s.G);
        nlohmann::json a = nlohmann::json::object();
        for (const auto& c : s.couplings) a[std::to_string(c.neighbor)] = matrix_to_json(c.block);
        js["A"] = std::move(a);
        subs.push_back(std::move(js));
    }
    return nlohmann::json{{"subsystems", std::move(subs)}};
}

ConstraintSet constraints_from_json(const nlohmann::json& doc, const NetworkModel& model) {
    if (!doc.is_array()) throw InvalidConfig("constraints must be an array");
    std::vector<HalfSpace> out;
    for (const auto& c : doc) {
        const auto owner = c.at("owner").get<std::size_t>();
        const auto kind = constraint_kind_from_string(c.at("kind").get<std::string>());
        const double p = c.value("p", 0.9);
        if (c.contains("lower") || c.contains("upper")) {
            // Box shorthand: one half-space per finite bound and component.
            if (owner >= model.size()) throw InvalidConfig("constraint owner out of range");
            const auto& s = model.subsystem(owner);
            const auto dim = kind == ConstraintKind::State ? s.state_dim : s.input_dim;
            const VectorXd upper = c.contains("upper") ? vector_from_json(c.at("upper"), "upper") : VectorXd();
            const VectorXd lower = c.contains("lower") ? vector_from_json(c.at("lower"), "lower") : VectorXd();
            for (std::size_t k = 0; k < dim; ++k) {
                auto pick = [&](const VectorXd& v) { return v.size() == 1 ? v(0) : v(k); };
                if (upper.size() > 0) {
                    const double b = pick(upper);
                    if (!(b > 0.0)) throw InvalidConfig("upper bound must be positive (origin-passing half-spaces are unsupported)");
                    VectorXd h = VectorXd::Zero(dim);
                    h(k) = 1.0 / b;
                    out.push_back({owner, kind, h, p});
                }
                if (lower.size() > 0) {
                    const double b = pick(lower);
                    if (!(b < 0.0)) throw InvalidConfig("lower bound must be negative (origin-passing half-spaces are unsupported)");
                    VectorXd h = VectorXd::Zero(dim);
                    h(k) = 1.0 / b;
                    out.push_back({owner, kind, h, p});
                }
            }
            continue;
        }
        VectorXd h = vector_from_json(c.at("h"), "constraint h");
        const double level = c.value("b", 1.0);
        if (!(level > 0.0))
            throw InvalidConfig("half-space level must be positive (origin-passing half-spaces are unsupported)");
        out.push_back({owner, kind, h / level, p});
    }
    ConstraintSet set(std::move(out));
    const auto report = validate_constraints(model, set);
    if (!report.empty()) throw InvalidConfig("constraints: " + report.front().message);
    return set;
}

nlohmann::json constraints_to_json(const ConstraintSet& constraints) {
    auto out = nlohmann::json::array();
    for (const auto& h : constraints.all())
        out.push_back({{"owner", h.owner}, {"kind", to_string(h.kind)}, {"h", vector_to_json(h.direction)},
                       {"p", h.probability}});
    return out;
}

}  // namespace dsmpc
