#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace dsmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class VariableKind { NominalState, NominalInput };
enum class RowKind { Initial, Dynamics, Terminal, StateBound, InputBound };

const char* to_string(VariableKind kind);
const char* to_string(RowKind kind);

/// Which agent owns a variable and what it stands for.
struct VariableTag {
    std::size_t agent = 0;
    VariableKind kind = VariableKind::NominalState;
    std::size_t step = 0;
    std::size_t component = 0;
};

struct RowTag {
    std::size_t agent = 0;
    RowKind kind = RowKind::Dynamics;
    std::size_t step = 0;
    std::size_t index = 0;  // half-space j for bound rows, state component otherwise
};

/// min 1/2 x^T H x + f^T x + constant  s.t.  A_eq x = b_eq,  C x <= d.
/// H is stored as a full symmetric matrix.
struct QpProblem {
    SparseMatrix H;
    Eigen::VectorXd f;
    double constant = 0.0;
    SparseMatrix A_eq;
    Eigen::VectorXd b_eq;
    SparseMatrix C;
    Eigen::VectorXd d;

    // Agent-block annotations; empty when the problem carries no structure.
    std::size_t agents = 0;
    std::vector<VariableTag> variables;
    std::vector<RowTag> eq_rows;
    std::vector<RowTag> in_rows;

    std::size_t num_variables() const { return static_cast<std::size_t>(f.size()); }
    std::size_t num_equalities() const { return static_cast<std::size_t>(b_eq.size()); }
    std::size_t num_inequalities() const { return static_cast<std::size_t>(d.size()); }
    bool annotated() const { return agents > 0 && variables.size() == num_variables(); }

    double objective(const Eigen::VectorXd& x) const;
    /// Throws DimensionMismatch on inconsistent sizes.
    void check_dimensions() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIterations };

const char* to_string(SolveStatus status);

/// Traffic of one communication round of the distributed solver.
struct RoundTraffic {
    std::size_t messages = 0;
    std::size_t payload = 0;  // doubles
};

struct SolveReport {
    SolveStatus status = SolveStatus::MaxIterations;
    Eigen::VectorXd x;
    Eigen::VectorXd y_eq;       // equality multipliers
    Eigen::VectorXd lambda_in;  // inequality multipliers (>= 0)
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<double> primal_residuals;
    std::vector<double> dual_residuals;
    std::vector<RoundTraffic> traffic;
    std::vector<double> penalties;
    // Rows found violated (inequality rows offset by num_equalities()).
    std::vector<std::size_t> violated_rows;
    double primal_infeasibility = 0.0;

    bool optimal() const { return status == SolveStatus::Optimal; }
};

struct SolverOptions {
    double tolerance = 1e-9;
    std::size_t max_iterations = 200;
    /// Slack allowed on rows whose variables are all fixed by presolve.
    double feasibility_tolerance = 1e-7;
    double regularization = 1e-10;
};

/// Primal-dual interior point (Mehrotra predictor-corrector) on the sparse
/// KKT system after presolving singleton equality rows.
SolveReport solve_centralized(const QpProblem& qp, const SolverOptions& options = {});

struct KktResiduals {
    double stationarity = 0.0;
    double equality = 0.0;
    double inequality = 0.0;  // max positive part of Cx - d
    double complementarity = 0.0;
    double min_multiplier = 0.0;
};

KktResiduals kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& lambda);

/// Rows violated by more than tol (inequality rows offset by num_equalities()).
std::vector<std::size_t> violated_rows(const QpProblem& qp, const Eigen::VectorXd& x, double tol);

/// Plain-text sparse triplet export (see README for the layout).
void write_qp(const QpProblem& qp, const std::string& path);
QpProblem read_qp(const std::string& path);

}  // namespace dsmpc
