#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "dsmpc/error_sim.hpp"
#include "dsmpc/network_model.hpp"

namespace dsmpc {

/// N_d = max(0, floor((1-p) N_s - sqrt(2 (1-p) N_s ln(1/beta)))).
std::size_t discard_count(std::size_t sample_count, double probability, double beta);

/// Drops the N_d largest projections h^T xi and returns the largest kept one.
/// Ties in the discard order go to the lowest sample index.
double tighten_halfspace(const VectorXd& direction, std::span<const VectorXd> samples, double probability,
                         double beta);
/// Same, on precomputed projections h^T xi^(l).
double tighten_projections(std::span<const double> projections, std::size_t discard);

/// c = Phi^{-1}(p) sqrt(h^T Sigma h) + h^T mean.
double analytic_tightening(const VectorXd& direction, const MatrixXd& covariance, double probability,
                           const VectorXd& mean = VectorXd());

/// Standard-normal quantile.
double normal_quantile(double probability);

struct TighteningEntry {
    double value = 0.0;
    std::size_t sample_count = 0;
    std::size_t discarded = 0;
};

/// c^x_{i,j,t} and c^u_{i,j,t} for t = 0..N̄, indexed by the position of the
/// half-space in its ConstraintSet.
class TighteningTable {
public:
    TighteningTable() = default;
    TighteningTable(ConstraintSet constraints, std::size_t task_horizon, double beta);

    const ConstraintSet& constraints() const { return constraints_; }
    std::size_t task_horizon() const { return task_horizon_; }
    double beta() const { return beta_; }

    double value(std::size_t q, std::size_t t) const { return entries_.at(q).at(t).value; }
    double value(ConstraintKind kind, std::size_t i, std::size_t j, std::size_t t) const {
        return value(constraints_.find(kind, i, j), t);
    }
    const TighteningEntry& entry(std::size_t q, std::size_t t) const { return entries_.at(q).at(t); }
    TighteningEntry& entry(std::size_t q, std::size_t t) { return entries_.at(q).at(t); }

    bool operator==(const TighteningTable& other) const;

private:
    ConstraintSet constraints_;
    std::size_t task_horizon_ = 0;
    double beta_ = 0.0;
    std::vector<std::vector<TighteningEntry>> entries_;
};

/// Scenario tightening of every (i, j, t) from an error bank.
TighteningTable tighten_all(const NetworkModel& model, const ConstraintSet& constraints, const ErrorBank& errors,
                            double beta, std::size_t threads = 1);

/// Gaussian shortcut using analytic error moments.
TighteningTable tighten_analytic(const NetworkModel& model, const ConstraintSet& constraints,
                                 const TubeController& controller, const ErrorMoments& moments);

/// CSV with columns kind,i,j,t,c,N_s,N_d,p,beta.
void save_tightening(const TighteningTable& table, const std::string& path);
/// Reload against the constraint set the table is meant for; every
/// (kind, i, j, t) of `constraints` up to the stored horizon must be present.
TighteningTable load_tightening(const std::string& path, const ConstraintSet& constraints);

}  // namespace dsmpc
