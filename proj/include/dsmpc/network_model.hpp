#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace dsmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One stored coupling block A_ij (rows n_i, cols n_j).
struct CouplingBlock {
    std::size_t neighbor = 0;
    MatrixXd block;
};

/// A single subsystem x_i+ = sum_j A_ij x_j + B_i u_i + G_i w_i.
struct SubsystemModel {
    std::size_t index = 0;
    std::size_t state_dim = 0;
    std::size_t input_dim = 0;
    std::size_t disturbance_dim = 0;
    std::vector<CouplingBlock> couplings;
    MatrixXd B;
    MatrixXd G;

    const CouplingBlock* coupling(std::size_t j) const;
};

struct Violation {
    std::size_t subsystem = 0;
    std::string message;
};

/// Block-sparse coupled LTI network. Couplings are kept sorted by neighbor
/// index, which fixes the stacking order of every neighborhood vector x_{N_i}.
class NetworkModel {
public:
    NetworkModel() = default;
    explicit NetworkModel(std::vector<SubsystemModel> subsystems);

    std::size_t size() const { return subsystems_.size(); }
    const SubsystemModel& subsystem(std::size_t i) const { return subsystems_.at(i); }
    const std::vector<SubsystemModel>& subsystems() const { return subsystems_; }

    std::size_t total_states() const { return state_offsets_.back(); }
    std::size_t total_inputs() const { return input_offsets_.back(); }
    std::size_t total_disturbances() const { return disturbance_offsets_.back(); }
    std::size_t state_offset(std::size_t i) const { return state_offsets_.at(i); }
    std::size_t input_offset(std::size_t i) const { return input_offsets_.at(i); }
    std::size_t disturbance_offset(std::size_t i) const { return disturbance_offsets_.at(i); }

    /// N_i in ascending order; contains i when A_ii is stored.
    std::vector<std::size_t> neighbors(std::size_t i) const;
    /// N_i \ {i}.
    std::vector<std::size_t> strict_neighbors(std::size_t i) const;
    /// n_{N_i} = sum of n_j over N_i.
    std::size_t neighborhood_dim(std::size_t i) const;
    /// Offset of x_j inside x_{N_i}; throws if j is not a neighbor.
    std::size_t neighborhood_offset(std::size_t i, std::size_t j) const;

    /// A_{N_i} as an n_i x n_{N_i} matrix in canonical ordering.
    MatrixXd neighborhood_matrix(std::size_t i) const;
    /// x_{N_i} gathered from a stacked network vector.
    VectorXd gather_neighborhood(std::size_t i, const VectorXd& stacked) const;

    MatrixXd dense_A() const;
    MatrixXd dense_B() const;
    MatrixXd dense_G() const;

    Eigen::Ref<const VectorXd> state_of(std::size_t i, const VectorXd& stacked) const;

private:
    std::vector<SubsystemModel> subsystems_;
    std::vector<std::size_t> state_offsets_{0};
    std::vector<std::size_t> input_offsets_{0};
    std::vector<std::size_t> disturbance_offsets_{0};
};

enum class ConstraintKind { State, Input };

const char* to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(const std::string& s);

/// Half-space chance constraint Pr(h^T x_i <= 1) >= p (or on u_i).
struct HalfSpace {
    std::size_t owner = 0;
    ConstraintKind kind = ConstraintKind::State;
    VectorXd direction;
    double probability = 0.9;
};

/// Ordered list of half-spaces; `local_index` is the j of (i, j) within
/// the owner's constraints of the same kind.
class ConstraintSet {
public:
    ConstraintSet() = default;
    explicit ConstraintSet(std::vector<HalfSpace> halfspaces);

    std::size_t size() const { return halfspaces_.size(); }
    const HalfSpace& operator[](std::size_t q) const { return halfspaces_.at(q); }
    const std::vector<HalfSpace>& all() const { return halfspaces_; }
    std::size_t local_index(std::size_t q) const { return local_index_.at(q); }
    /// Position in the list of (kind, owner, j); throws if absent.
    std::size_t find(ConstraintKind kind, std::size_t owner, std::size_t j) const;
    /// Indices q of the owner's constraints of one kind, in j order.
    std::vector<std::size_t> of(std::size_t owner, ConstraintKind kind) const;
    std::size_t count(std::size_t owner, ConstraintKind kind) const { return of(owner, kind).size(); }

private:
    std::vector<HalfSpace> halfspaces_;
    std::vector<std::size_t> local_index_;
};

/// Every dimension or index inconsistency; empty iff the model is valid.
std::vector<Violation> validate_network(const NetworkModel& model);
/// Also checks half-space owners, lengths, directions and probabilities.
std::vector<Violation> validate_constraints(const NetworkModel& model, const ConstraintSet& constraints);
/// Throws InvalidArgument listing all violations if any exist.
void require_valid(const NetworkModel& model);

VectorXd step_dynamics(const NetworkModel& model, const VectorXd& x, const VectorXd& u,
                       const VectorXd& w);

/// Strict row-sum condition |a_ii| + sum_{j != i} |a_ij| < 1 for every row.
bool gersgorin_stable(const MatrixXd& matrix);
/// Rows that fail the strict row-sum condition.
std::vector<std::size_t> gersgorin_violations(const MatrixXd& matrix);

// JSON (all matrices row-major nested arrays).
NetworkModel network_from_json(const nlohmann::json& doc);
nlohmann::json network_to_json(const NetworkModel& model);
ConstraintSet constraints_from_json(const nlohmann::json& doc, const NetworkModel& model);
nlohmann::json constraints_to_json(const ConstraintSet& constraints);

}  // namespace dsmpc
