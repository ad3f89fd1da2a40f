#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmpc/mpc.hpp"

namespace dsmpc {

struct LogStep {
    std::size_t t = 0;
    VectorXd x, z, e;
    VectorXd v, pi, u;
    VectorXd w;
    VectorXd z_next;  // z(1|t) of the solve at t
    double objective = 0.0;
    std::size_t iterations = 0;
    bool witness_checked = false;
    double witness_violation = 0.0;
};

/// Everything that happened in one closed-loop run; x_final is x(T).
struct TrajectoryLog {
    std::vector<LogStep> steps;
    VectorXd x_final;
    nlohmann::json metadata;

    bool operator==(const TrajectoryLog& other) const;
};

struct RunOptions {
    MpcOptions mpc;
    /// 0 means N̄ - N.
    std::size_t steps = 0;
};

/// Closed loop under a given disturbance realization w(0..T-1): measure,
/// solve, apply u = v + pi(e), step the plant.
TrajectoryLog closed_loop_run(const MpcSetup& setup, const VectorXd& x0, const std::vector<VectorXd>& disturbance,
                              const RunOptions& options);

/// One run per bank sample, run r seeding its cost samples with
/// derive_seed(seed, 4, r) unless samples are frozen.
std::vector<TrajectoryLog> monte_carlo(const MpcSetup& setup, const VectorXd& x0, const ScenarioBank& bank,
                                       const RunOptions& options, std::size_t threads = 1);

struct ViolationEntry {
    std::size_t q = 0;  // position in the constraint set
    std::size_t t = 0;
    std::size_t violations = 0;
    std::size_t runs = 0;
    double frequency = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct ViolationReport {
    ConstraintSet constraints;
    double confidence = 0.95;
    std::size_t runs = 0;
    std::vector<ViolationEntry> entries;  // ordered by (q, t)
    std::vector<double> aggregate;        // per q, over all runs and times

    double max_frequency() const;
    /// Largest frequency among one kind of constraint.
    double max_frequency(ConstraintKind kind) const;
};

/// Wilson score interval for k successes out of n at the given confidence.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double confidence);

/// Per (i, j, t) fraction of runs with h'x_i(t) > 1 (t = 0..T) or h'u_i(t) > 1
/// (t = 0..T-1).
ViolationReport violation_report(const std::vector<TrajectoryLog>& logs, const NetworkModel& model,
                                 const ConstraintSet& constraints, double confidence = 0.95);

/// Checks the tightened rows on the logged nominal values: h'z(t) <= 1 - c^x_t
/// and h'v(t) <= 1 - c^u_t. Rows within the tolerance of their bound count as
/// active.
struct NominalCheck {
    std::size_t state_violations = 0;
    std::size_t input_violations = 0;
    std::size_t state_active = 0;
    std::size_t input_active = 0;
    double worst_state_excess = 0.0;
    double worst_input_excess = 0.0;
};

NominalCheck nominal_tightening_check(const TrajectoryLog& log, const NetworkModel& model,
                                      const ConstraintSet& constraints, const TighteningTable& table, double tolerance);

/// Long-format `<prefix>.csv` (t,quantity,index,value) and `<prefix>.json`.
void save_log(const TrajectoryLog& log, const std::string& prefix);
TrajectoryLog load_log(const std::string& prefix);

/// kind,i,j,t,violations,runs,frequency,ci_low,ci_high
void save_violation_report(const ViolationReport& report, const std::string& path);
nlohmann::json violation_summary(const ViolationReport& report);

}  // namespace dsmpc
