#include "dsmpc/tightening.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/parallel.hpp"

namespace dsmpc {

std::size_t discard_count(std::size_t sample_count, double probability, double beta) {
    if (sample_count < 1) throw InvalidArgument("discard_count needs at least one sample");
    if (!(probability > 0.0 && probability <= 1.0)) throw InvalidArgument("probability must lie in (0, 1]");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
    const double ns = static_cast<double>(sample_count);
    const double tail = (1.0 - probability) * ns;
    const double raw = tail - std::sqrt(2.0 * tail * std::log(1.0 / beta));
    if (!(raw > 0.0)) return 0;
    return static_cast<std::size_t>(std::floor(raw));
}

double tighten_projections(std::span<const double> projections, std::size_t discard) {
    if (projections.empty()) throw InvalidArgument("tightening needs at least one sample");
    if (discard >= projections.size())
        throw InvalidArgument("discard count " + std::to_string(discard) + " leaves no samples out of " +
                              std::to_string(projections.size()));
    // Order: projection descending, then sample index ascending, so that the
    // discarded prefix is exactly what the greedy argmax loop removes.
    std::vector<std::size_t> order(projections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(discard), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         if (projections[a] != projections[b]) return projections[a] > projections[b];
                         return a < b;
                     });
    return projections[order[discard]];
}

double tighten_halfspace(const VectorXd& direction, std::span<const VectorXd> samples, double probability,
                         double beta) {
    std::vector<double> proj;
    proj.reserve(samples.size());
    for (const auto& xi : samples) {
        if (xi.size() != direction.size()) throw DimensionMismatch("sample length does not match direction");
        proj.push_back(direction.dot(xi));
    }
    if (proj.empty()) throw InvalidArgument("tightening needs at least one sample");
    return tighten_projections(proj, discard_count(proj.size(), probability, beta));
}

double normal_quantile(double probability) {
    if (!(probability > 0.0 && probability < 1.0)) throw InvalidArgument("quantile probability must lie in (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), probability);
}

double analytic_tightening(const VectorXd& direction, const MatrixXd& covariance, double probability,
                           const VectorXd& mean) {
    if (covariance.rows() != direction.size() || covariance.cols() != direction.size())
        throw DimensionMismatch("covariance does not match the direction length");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
        throw InvalidArgument("covariance is not symmetric");
    if (covariance.size() > 0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
            throw InvalidArgument("covariance is not PSD");
    }
    const double var = std::max(0.0, direction.dot(covariance * direction));
    double c = normal_quantile(probability) * std::sqrt(var);
    if (mean.size() > 0) c += direction.dot(mean);
    return c;
}

TighteningTable::TighteningTable(ConstraintSet constraints, std::size_t task_horizon, double beta)
    : constraints_(std::move(constraints)),
      task_horizon_(task_horizon),
      beta_(beta),
      entries_(constraints_.size(), std::vector<TighteningEntry>(task_horizon + 1)) {}

bool TighteningTable::operator==(const TighteningTable& other) const {
    if (task_horizon_ != other.task_horizon_ || entries_.size() != other.entries_.size()) return false;
    for (std::size_t q = 0; q < entries_.size(); ++q)
        for (std::size_t t = 0; t <= task_horizon_; ++t) {
            const auto& a = entries_[q][t];
            const auto& b = other.entries_[q][t];
            if (a.value != b.value || a.sample_count != b.sample_count || a.discarded != b.discarded) return false;
        }
    return true;
}

TighteningTable tighten_all(const NetworkModel& model, const ConstraintSet& constraints, const ErrorBank& errors,
                            double beta, std::size_t threads) {
    const auto report = validate_constraints(model, constraints);
    if (!report.empty()) throw InvalidArgument("constraints: " + report.front().message);
    if (errors.state_dim() != model.total_states() || errors.input_dim() != model.total_inputs())
        throw DimensionMismatch("error bank does not match the model dimensions");
    if (errors.count() == 0) throw InvalidArgument("error bank has no samples");
    const auto horizon = errors.task_horizon();
    TighteningTable table(constraints, horizon, beta);
    const auto ns = errors.count();
    parallel_for(constraints.size() * (horizon + 1), threads, [&](std::size_t flat) {
        const auto q = flat / (horizon + 1);
        const auto t = flat % (horizon + 1);
        const auto& h = constraints[q];
        const bool state = h.kind == ConstraintKind::State;
        const auto off = state ? model.state_offset(h.owner) : model.input_offset(h.owner);
        std::vector<double> proj(ns);
        for (std::size_t l = 0; l < ns; ++l) {
            const auto v = state ? errors.error(l, t) : errors.feedback(l, t);
            proj[l] = h.direction.dot(v.segment(off, h.direction.size()));
        }
        auto& e = table.entry(q, t);
        e.sample_count = ns;
        e.discarded = discard_count(ns, h.probability, beta);
        e.value = tighten_projections(proj, e.discarded);
    });
    return table;
}

TighteningTable tighten_analytic(const NetworkModel& model, const ConstraintSet& constraints,
                                 const TubeController& controller, const ErrorMoments& moments) {
    const auto horizon = moments.covariance.size() - 1;
    TighteningTable table(constraints, horizon, 0.0);
    for (std::size_t q = 0; q < constraints.size(); ++q) {
        const auto& h = constraints[q];
        for (std::size_t t = 0; t <= horizon; ++t) {
            double c;
            if (h.kind == ConstraintKind::State) {
                c = analytic_tightening(h.direction, moments.local(model, h.owner, t), h.probability,
                                        moments.local_mean(model, h.owner, t));
            } else {
                const auto& K = controller.gain(h.owner).K;
                const MatrixXd cov = K * moments.neighborhood(model, h.owner, t) * K.transpose();
                c = analytic_tightening(h.direction, 0.5 * (cov + cov.transpose()), h.probability,
                                        K * moments.neighborhood_mean(model, h.owner, t));
            }
            table.entry(q, t) = {c, 0, 0};
        }
    }
    return table;
}

void save_tightening(const TighteningTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "kind,i,j,t,c,N_s,N_d,p,beta\n";
    const auto& cs = table.constraints();
    for (std::size_t q = 0; q < cs.size(); ++q)
        for (std::size_t t = 0; t <= table.task_horizon(); ++t) {
            const auto& e = table.entry(q, t);
            out << to_string(cs[q].kind) << ',' << cs[q].owner << ',' << cs.local_index(q) << ',' << t << ','
                << format_double(e.value) << ',' << e.sample_count << ',' << e.discarded << ','
                << format_double(cs[q].probability) << ',' << format_double(table.beta()) << '\n';
        }
}

TighteningTable load_tightening(const std::string& path, const ConstraintSet& constraints) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    using Key = std::tuple<int, std::size_t, std::size_t>;
    std::map<Key, std::map<std::size_t, TighteningEntry>> rows;
    double beta = 0.0;
    std::size_t horizon = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream is(line);
        for (std::string cell; std::getline(is, cell, ',');) cells.push_back(cell);
        if (cells.size() != 9) throw IoError(path + ": expected 9 columns in '" + line + "'");
        const auto kind = constraint_kind_from_string(cells[0]);
        const auto t = std::stoul(cells[3]);
        TighteningEntry e{std::strtod(cells[4].c_str(), nullptr), std::stoul(cells[5]), std::stoul(cells[6])};
        rows[{static_cast<int>(kind), std::stoul(cells[1]), std::stoul(cells[2])}][t] = e;
        beta = std::strtod(cells[8].c_str(), nullptr);
        horizon = std::max(horizon, t);
    }
    TighteningTable table(constraints, horizon, beta);
    for (std::size_t q = 0; q < constraints.size(); ++q) {
        const Key key{static_cast<int>(constraints[q].kind), constraints[q].owner, constraints.local_index(q)};
        const auto it = rows.find(key);
        if (it == rows.end() || it->second.size() != horizon + 1)
            throw IoError(path + ": missing entries for " + to_string(constraints[q].kind) + " half-space (" +
                          std::to_string(constraints[q].owner) + ", " + std::to_string(constraints.local_index(q)) +
                          ")");
        for (const auto& [t, e] : it->second) table.entry(q, t) = e;
    }
    return table;
}

}  // namespace dsmpc
