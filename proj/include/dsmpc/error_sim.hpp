#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dsmpc/disturbance.hpp"
#include "dsmpc/network_model.hpp"

namespace dsmpc {

/// Per-subsystem tube feedback pi_i(e_{N_i}) = sat(K_i e_{N_i}).
struct TubeGain {
    MatrixXd K;         // m_i x n_{N_i}, canonical neighborhood ordering
    VectorXd lower;     // empty when unsaturated
    VectorXd upper;

    bool saturated() const { return lower.size() > 0 || upper.size() > 0; }
};

class TubeController {
public:
    TubeController() = default;
    explicit TubeController(std::vector<TubeGain> gains) : gains_(std::move(gains)) {}

    /// pi_i = gain * e_i on the diagonal block of every agent (needs B_i square).
    static TubeController scalar_heuristic(const NetworkModel& model, double gain);

    std::size_t size() const { return gains_.size(); }
    const TubeGain& gain(std::size_t i) const { return gains_.at(i); }
    bool saturated() const;

    /// K assembled over the full network (m_total x n_total).
    MatrixXd dense_K(const NetworkModel& model) const;
    /// A + B K, the closed-loop error map of the linear part.
    MatrixXd closed_loop(const NetworkModel& model) const;

    /// Feedback for the whole network from a stacked error.
    VectorXd feedback(const NetworkModel& model, const VectorXd& error) const;

private:
    std::vector<TubeGain> gains_;
};

/// Throws DimensionMismatch if gains do not match the model's neighborhoods.
void validate_controller(const NetworkModel& model, const TubeController& controller);

VectorXd tube_feedback(const TubeController& controller, std::size_t i, const VectorXd& e_neighborhood);

TubeController controller_from_json(const nlohmann::json& doc, const NetworkModel& model);
nlohmann::json controller_to_json(const TubeController& controller);

/// e^(l)(t) and pi^(l)(t) for t = 0..N̄, time-major per sample with every
/// slice contiguous over the stacked subsystems.
class ErrorBank {
public:
    ErrorBank() = default;
    ErrorBank(std::size_t count, std::size_t task_horizon, std::size_t state_dim, std::size_t input_dim);

    std::size_t count() const { return count_; }
    std::size_t task_horizon() const { return task_horizon_; }
    std::size_t state_dim() const { return n_; }
    std::size_t input_dim() const { return m_; }

    Eigen::Map<const VectorXd> error(std::size_t sample, std::size_t t) const {
        return {errors_.data() + (sample * (task_horizon_ + 1) + t) * n_, static_cast<Eigen::Index>(n_)};
    }
    Eigen::Map<VectorXd> error(std::size_t sample, std::size_t t) {
        return {errors_.data() + (sample * (task_horizon_ + 1) + t) * n_, static_cast<Eigen::Index>(n_)};
    }
    Eigen::Map<const VectorXd> feedback(std::size_t sample, std::size_t t) const {
        return {feedbacks_.data() + (sample * (task_horizon_ + 1) + t) * m_, static_cast<Eigen::Index>(m_)};
    }
    Eigen::Map<VectorXd> feedback(std::size_t sample, std::size_t t) {
        return {feedbacks_.data() + (sample * (task_horizon_ + 1) + t) * m_, static_cast<Eigen::Index>(m_)};
    }

    bool operator==(const ErrorBank& other) const {
        return count_ == other.count_ && task_horizon_ == other.task_horizon_ && errors_ == other.errors_ &&
               feedbacks_ == other.feedbacks_;
    }

private:
    std::size_t count_ = 0;
    std::size_t task_horizon_ = 0;
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<double> errors_;
    std::vector<double> feedbacks_;
};

/// Forward-simulates e(t+1) = A_{N_i} e_{N_i} + B_i pi_i(e_{N_i}) + G_i w_i(t)
/// from e(0) = 0 for every scenario in the bank.
ErrorBank simulate_error_bank(const NetworkModel& model, const TubeController& controller, const ScenarioBank& bank,
                              std::size_t threads = 1);

/// Analytic first and second moments of the error under a linear tube
/// controller and a Gaussian (iid or AR(1)) disturbance.
struct ErrorMoments {
    std::vector<VectorXd> mean;        // t = 0..N̄, stacked
    std::vector<MatrixXd> covariance;  // t = 0..N̄, joint over all states

    MatrixXd local(const NetworkModel& model, std::size_t i, std::size_t t) const;
    MatrixXd neighborhood(const NetworkModel& model, std::size_t i, std::size_t t) const;
    VectorXd local_mean(const NetworkModel& model, std::size_t i, std::size_t t) const;
    VectorXd neighborhood_mean(const NetworkModel& model, std::size_t i, std::size_t t) const;
};

ErrorMoments propagate_error_covariance(const NetworkModel& model, const TubeController& controller,
                                        const DisturbanceSpec& spec, std::size_t task_horizon);

void save_error_bank(const ErrorBank& bank, const std::string& prefix);
/// Per (kind, i, j, t): mean and max of h^T e (state) or h^T pi (input).
void save_error_summary(const NetworkModel& model, const ConstraintSet& constraints, const ErrorBank& bank,
                        const std::string& path);

}  // namespace dsmpc
