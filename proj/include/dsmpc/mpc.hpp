#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dsmpc/admm.hpp"
#include "dsmpc/disturbance.hpp"
#include "dsmpc/error_sim.hpp"
#include "dsmpc/network_model.hpp"
#include "dsmpc/qp.hpp"
#include "dsmpc/tightening.hpp"

namespace dsmpc {

/// l(x, u) = x'Qx + u'Ru, l_f(x) = x'Px.
struct StageWeights {
    MatrixXd Q;
    MatrixXd R;
    MatrixXd P;
};

struct CostSpec {
    std::vector<StageWeights> weights;                // per agent
    std::vector<std::vector<StageWeights>> schedule;  // optional [t][agent]; last entry holds afterwards
    std::size_t cost_samples = 10;

    bool time_varying() const { return !schedule.empty(); }
    const StageWeights& at(std::size_t agent, std::size_t t) const;
};

/// Symmetric PSD Q and P, symmetric PD R, matching dimensions.
void validate_cost(const NetworkModel& model, const CostSpec& cost);

/// Q, R, P given either once (scalar = multiple of identity) for every agent
/// or per agent under "agents".
CostSpec cost_from_json(const nlohmann::json& doc, const NetworkModel& model);
nlohmann::json cost_to_json(const CostSpec& cost);

/// Column layout of the per-step QP: per agent, z_i(0..N) then v_i(0..N-1).
class QpLayout {
public:
    QpLayout() = default;
    QpLayout(const NetworkModel& model, std::size_t horizon);

    std::size_t horizon() const { return horizon_; }
    std::size_t size() const { return offsets_.back(); }
    std::size_t agent_offset(std::size_t i) const { return offsets_.at(i); }
    std::size_t state(std::size_t i, std::size_t k) const;
    std::size_t input(std::size_t i, std::size_t k) const;

    /// Network-stacked z(k) and v(k) read from a QP vector.
    VectorXd states_at(const VectorXd& x, std::size_t k) const;
    VectorXd inputs_at(const VectorXd& x, std::size_t k) const;
    void set_states(VectorXd& x, std::size_t k, const VectorXd& z) const;
    void set_inputs(VectorXd& x, std::size_t k, const VectorXd& v) const;

private:
    std::vector<std::size_t> n_, m_, offsets_{0};
    std::size_t horizon_ = 0;
};

/// Sampled error predictions e^(s)(k|t), k = 0..N, and pi^(s)(k|t), k = 0..N-1.
struct ErrorPredictions {
    std::vector<std::vector<VectorXd>> error;
    std::vector<std::vector<VectorXd>> feedback;

    std::size_t count() const { return error.size(); }
};

/// Forward simulation of the error dynamics from e(0|t) = e_now for each
/// disturbance sample.
ErrorPredictions predict_errors(const NetworkModel& model, const TubeController& controller, const VectorXd& e_now,
                                const PredictionSamples& samples, std::size_t horizon);

/// Sample-average cost expanded in (z, v): Hessian blocks 2Q, 2R, 2P, linear
/// coefficients 2Q mean(e), 2R mean(pi), constant from second moments.
struct CostTerms {
    std::vector<std::vector<VectorXd>> state_linear;  // [agent][k], k = 0..N
    std::vector<std::vector<VectorXd>> input_linear;  // [agent][k], k = 0..N-1
    std::vector<double> constant;                     // per agent
};

CostTerms expected_cost_terms(const NetworkModel& model, const CostSpec& cost, const ErrorPredictions& predictions,
                              std::size_t t);

struct MpcSetup {
    NetworkModel model;
    ConstraintSet constraints;
    TubeController controller;
    CostSpec cost;
    DisturbanceSpec disturbance;
    TighteningTable tightening;
    std::size_t horizon = 24;
};

/// Throws on any inconsistency between the pieces of a setup.
void validate_setup(const MpcSetup& setup);

struct ControllerState {
    std::size_t t = 0;
    VectorXd z;                           // carried nominal state z(t)
    std::vector<VectorXd> nominal_states;  // last solution z(0..N|t-1)
    std::vector<VectorXd> nominal_inputs;  // last solution v(0..N-1|t-1)

    static ControllerState initial(const VectorXd& x0);
};

QpProblem assemble_qp(const MpcSetup& setup, const ControllerState& state, const CostTerms& terms);

/// The previous solution shifted by one step with zero appended.
VectorXd shifted_candidate(const MpcSetup& setup, const ControllerState& state);

/// Largest violation of any row of the QP at x (zero when feasible).
double max_violation(const QpProblem& qp, const VectorXd& x);

enum class SolverKind { Central, Admm };

SolverKind solver_kind_from_string(const std::string& s);
const char* to_string(SolverKind kind);

struct MpcOptions {
    SolverKind solver = SolverKind::Central;
    SolverOptions central;
    AdmmOptions admm;
    std::uint64_t seed = 0;
    /// Reuse the same cost-sample seed at every step.
    bool frozen_samples = false;
    double witness_tolerance = 1e-6;
};

struct StepResult {
    VectorXd v;                            // v*(0|t)
    VectorXd pi;                           // pi(e(t))
    std::vector<VectorXd> nominal_states;  // z(0..N|t)
    std::vector<VectorXd> nominal_inputs;  // v(0..N-1|t)
    double objective = 0.0;
    SolveReport report;
    bool witness_checked = false;
    double witness_violation = 0.0;
};

/// One receding-horizon step. `history` holds the realized w(0..t-1).
/// Throws InfeasibleProblem or NotConverged instead of relaxing the problem.
StepResult mpc_step(const MpcSetup& setup, ControllerState& state, const VectorXd& x_measured,
                    const std::vector<VectorXd>& history, const MpcOptions& options);

}  // namespace dsmpc
