#include "dsmpc/mpc.hpp"

#include <algorithm>
#include <cmath>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"

namespace dsmpc {

using Triplet = Eigen::Triplet<double>;

namespace {

bool symmetric(const MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

MatrixXd weight_from_json(const nlohmann::json& j, std::size_t dim, const std::string& what) {
    if (j.is_number()) return j.get<double>() * MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    MatrixXd m = matrix_from_json(j, what);
    if (m.rows() == 1 && m.cols() == 1 && dim != 1)
        return m(0, 0) * MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    return m;
}

StageWeights stage_from_json(const nlohmann::json& j, const SubsystemModel& s, const std::string& what) {
    StageWeights w;
    if (!j.contains("Q") || !j.contains("R")) throw InvalidConfig(what + ": Q and R are required");
    w.Q = weight_from_json(j.at("Q"), s.state_dim, what + ".Q");
    w.R = weight_from_json(j.at("R"), s.input_dim, what + ".R");
    w.P = j.contains("P") ? weight_from_json(j.at("P"), s.state_dim, what + ".P") : w.Q;
    return w;
}

std::vector<StageWeights> agents_from_json(const nlohmann::json& doc, const NetworkModel& model, const std::string& what) {
    std::vector<StageWeights> out;
    if (doc.contains("agents")) {
        const auto& list = doc.at("agents");
        if (!list.is_array() || list.size() != model.size())
            throw InvalidConfig(what + ".agents must list one entry per subsystem");
        for (std::size_t i = 0; i < model.size(); ++i)
            out.push_back(stage_from_json(list[i], model.subsystem(i), what + ".agents[" + std::to_string(i) + "]"));
    } else {
        for (std::size_t i = 0; i < model.size(); ++i) out.push_back(stage_from_json(doc, model.subsystem(i), what));
    }
    return out;
}

nlohmann::json stage_to_json(const StageWeights& w) {
    return {{"Q", matrix_to_json(w.Q)}, {"R", matrix_to_json(w.R)}, {"P", matrix_to_json(w.P)}};
}

}  // namespace

const StageWeights& CostSpec::at(std::size_t agent, std::size_t t) const {
    if (schedule.empty()) return weights.at(agent);
    return schedule[std::min(t, schedule.size() - 1)].at(agent);
}

void validate_cost(const NetworkModel& model, const CostSpec& cost) {
    auto check = [&](const std::vector<StageWeights>& ws, const std::string& where) {
        if (ws.size() != model.size())
            throw DimensionMismatch(where + ": " + std::to_string(ws.size()) + " weight sets for " +
                                    std::to_string(model.size()) + " subsystems");
        for (std::size_t i = 0; i < model.size(); ++i) {
            const auto& s = model.subsystem(i);
            const auto& w = ws[i];
            const auto n = static_cast<Eigen::Index>(s.state_dim);
            const auto m = static_cast<Eigen::Index>(s.input_dim);
            if (w.Q.rows() != n || w.Q.cols() != n || w.P.rows() != n || w.P.cols() != n)
                throw DimensionMismatch(where + ": Q/P of subsystem " + std::to_string(i) + " must be n_i x n_i", i);
            if (w.R.rows() != m || w.R.cols() != m)
                throw DimensionMismatch(where + ": R of subsystem " + std::to_string(i) + " must be m_i x m_i", i);
            if (!symmetric(w.Q) || !symmetric(w.R) || !symmetric(w.P))
                throw InvalidArgument(where + ": weights of subsystem " + std::to_string(i) + " are not symmetric");
            if (min_eigenvalue(w.Q) < -1e-12 || min_eigenvalue(w.P) < -1e-12)
                throw InvalidArgument(where + ": Q/P of subsystem " + std::to_string(i) + " are not PSD");
            if (m > 0 && min_eigenvalue(w.R) <= 0.0)
                throw InvalidArgument(where + ": R of subsystem " + std::to_string(i) + " is not positive definite");
        }
    };
    check(cost.weights, "cost");
    for (std::size_t t = 0; t < cost.schedule.size(); ++t) check(cost.schedule[t], "cost.schedule[" + std::to_string(t) + "]");
}

CostSpec cost_from_json(const nlohmann::json& doc, const NetworkModel& model) {
    CostSpec cost;
    cost.weights = agents_from_json(doc, model, "cost");
    if (doc.contains("schedule"))
        for (const auto& entry : doc.at("schedule")) cost.schedule.push_back(agents_from_json(entry, model, "cost.schedule"));
    if (doc.contains("cost_samples")) cost.cost_samples = doc.at("cost_samples").get<std::size_t>();
    validate_cost(model, cost);
    return cost;
}

nlohmann::json cost_to_json(const CostSpec& cost) {
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& w : cost.weights) agents.push_back(stage_to_json(w));
    nlohmann::json doc{{"agents", agents}, {"cost_samples", cost.cost_samples}};
    if (!cost.schedule.empty()) {
        nlohmann::json sched = nlohmann::json::array();
        for (const auto& step : cost.schedule) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& w : step) a.push_back(stage_to_json(w));
            sched.push_back({{"agents", a}});
        }
        doc["schedule"] = sched;
    }
    return doc;
}

QpLayout::QpLayout(const NetworkModel& model, std::size_t horizon) : horizon_(horizon) {
    if (horizon < 1) throw InvalidArgument("prediction horizon must be at least 1");
    for (const auto& s : model.subsystems()) {
        n_.push_back(s.state_dim);
        m_.push_back(s.input_dim);
        offsets_.push_back(offsets_.back() + s.state_dim * (horizon + 1) + s.input_dim * horizon);
    }
}

std::size_t QpLayout::state(std::size_t i, std::size_t k) const { return offsets_.at(i) + k * n_.at(i); }

std::size_t QpLayout::input(std::size_t i, std::size_t k) const {
    return offsets_.at(i) + n_.at(i) * (horizon_ + 1) + k * m_.at(i);
}

VectorXd QpLayout::states_at(const VectorXd& x, std::size_t k) const {
    std::size_t total = 0;
    for (auto n : n_) total += n;
    VectorXd out(static_cast<Eigen::Index>(total));
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n_.size(); ++i) {
        out.segment(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(n_[i])) =
            x.segment(static_cast<Eigen::Index>(state(i, k)), static_cast<Eigen::Index>(n_[i]));
        pos += n_[i];
    }
    return out;
}

VectorXd QpLayout::inputs_at(const VectorXd& x, std::size_t k) const {
    std::size_t total = 0;
    for (auto m : m_) total += m;
    VectorXd out(static_cast<Eigen::Index>(total));
    std::size_t pos = 0;
    for (std::size_t i = 0; i < m_.size(); ++i) {
        out.segment(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(m_[i])) =
            x.segment(static_cast<Eigen::Index>(input(i, k)), static_cast<Eigen::Index>(m_[i]));
        pos += m_[i];
    }
    return out;
}

void QpLayout::set_states(VectorXd& x, std::size_t k, const VectorXd& z) const {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n_.size(); ++i) {
        x.segment(static_cast<Eigen::Index>(state(i, k)), static_cast<Eigen::Index>(n_[i])) =
            z.segment(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(n_[i]));
        pos += n_[i];
    }
}

void QpLayout::set_inputs(VectorXd& x, std::size_t k, const VectorXd& v) const {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < m_.size(); ++i) {
        x.segment(static_cast<Eigen::Index>(input(i, k)), static_cast<Eigen::Index>(m_[i])) =
            v.segment(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(m_[i]));
        pos += m_[i];
    }
}

ErrorPredictions predict_errors(const NetworkModel& model, const TubeController& controller, const VectorXd& e_now,
                                const PredictionSamples& samples, std::size_t horizon) {
    if (samples.horizon() + 1 < horizon) throw InvalidArgument("prediction samples do not cover the horizon");
    if (samples.dim() != model.total_disturbances()) throw DimensionMismatch("prediction samples have wrong dimension");
    ErrorPredictions out;
    out.error.resize(samples.count());
    out.feedback.resize(samples.count());
    for (std::size_t s = 0; s < samples.count(); ++s) {
        auto& es = out.error[s];
        auto& ps = out.feedback[s];
        es.push_back(e_now);
        for (std::size_t k = 0; k < horizon; ++k) {
            ps.push_back(controller.feedback(model, es.back()));
            es.push_back(step_dynamics(model, es.back(), ps.back(), samples.at(s, k)));
        }
    }
    return out;
}

CostTerms expected_cost_terms(const NetworkModel& model, const CostSpec& cost, const ErrorPredictions& predictions,
                              std::size_t t) {
    const auto count = predictions.count();
    if (count == 0) throw InvalidArgument("expected cost needs at least one error prediction");
    const auto horizon = predictions.error.front().size() - 1;
    CostTerms terms;
    terms.state_linear.resize(model.size());
    terms.input_linear.resize(model.size());
    terms.constant.assign(model.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = model.subsystem(i);
        const auto xo = static_cast<Eigen::Index>(model.state_offset(i));
        const auto uo = static_cast<Eigen::Index>(model.input_offset(i));
        const auto n = static_cast<Eigen::Index>(s.state_dim);
        const auto m = static_cast<Eigen::Index>(s.input_dim);
        for (std::size_t k = 0; k <= horizon; ++k) {
            const auto& w = cost.at(i, t + k);
            const MatrixXd& Q = k < horizon ? w.Q : w.P;
            VectorXd mean = VectorXd::Zero(n);
            double second = 0.0;
            for (std::size_t l = 0; l < count; ++l) {
                const auto e = predictions.error[l][k].segment(xo, n);
                mean += e;
                second += e.dot(Q * e);
            }
            terms.state_linear[i].push_back(2.0 * Q * (mean * inv));
            terms.constant[i] += second * inv;
            if (k == horizon) break;
            VectorXd pmean = VectorXd::Zero(m);
            double psecond = 0.0;
            for (std::size_t l = 0; l < count; ++l) {
                const auto p = predictions.feedback[l][k].segment(uo, m);
                pmean += p;
                psecond += p.dot(w.R * p);
            }
            terms.input_linear[i].push_back(2.0 * w.R * (pmean * inv));
            terms.constant[i] += psecond * inv;
        }
    }
    return terms;
}

void validate_setup(const MpcSetup& setup) {
    require_valid(setup.model);
    const auto report = validate_constraints(setup.model, setup.constraints);
    if (!report.empty()) throw InvalidArgument("constraints: " + report.front().message);
    validate_controller(setup.model, setup.controller);
    validate_cost(setup.model, setup.cost);
    if (setup.horizon < 1) throw InvalidArgument("prediction horizon must be at least 1");
    if (setup.tightening.constraints().size() != setup.constraints.size())
        throw InvalidArgument("tightening table was built for a different constraint set");
    if (setup.tightening.task_horizon() < setup.horizon)
        throw InvalidArgument("tightening table is shorter than the prediction horizon");
}

ControllerState ControllerState::initial(const VectorXd& x0) {
    ControllerState s;
    s.z = x0;
    return s;
}

QpProblem assemble_qp(const MpcSetup& setup, const ControllerState& state, const CostTerms& terms) {
    const auto& model = setup.model;
    const auto N = setup.horizon;
    const auto t = state.t;
    if (t + N > setup.tightening.task_horizon())
        throw InvalidArgument("t + N = " + std::to_string(t + N) + " exceeds the tightening horizon " +
                              std::to_string(setup.tightening.task_horizon()));
    if (static_cast<std::size_t>(state.z.size()) != model.total_states())
        throw DimensionMismatch("carried nominal state has wrong length");
    if (terms.state_linear.size() != model.size() || terms.input_linear.size() != model.size())
        throw DimensionMismatch("cost terms do not match the network");

    const QpLayout layout(model, N);
    QpProblem qp;
    qp.agents = model.size();
    const auto nv = static_cast<Eigen::Index>(layout.size());
    qp.f = VectorXd::Zero(nv);
    qp.variables.resize(layout.size());

    std::vector<Triplet> h, a, c;
    std::vector<double> b, d;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = model.subsystem(i);
        const auto n = s.state_dim;
        const auto m = s.input_dim;
        if (terms.state_linear[i].size() != N + 1 || terms.input_linear[i].size() != N)
            throw DimensionMismatch("cost terms do not match the horizon", i);

        for (std::size_t k = 0; k <= N; ++k) {
            const auto& w = setup.cost.at(i, t + k);
            const MatrixXd& Q = k < N ? w.Q : w.P;
            const auto base = layout.state(i, k);
            for (std::size_t r = 0; r < n; ++r) {
                qp.variables[base + r] = {i, VariableKind::NominalState, k, r};
                qp.f(static_cast<Eigen::Index>(base + r)) = terms.state_linear[i][k](static_cast<Eigen::Index>(r));
                for (std::size_t q = 0; q < n; ++q)
                    if (Q(r, q) != 0.0) h.emplace_back(base + r, base + q, 2.0 * Q(r, q));
            }
            if (k == N) break;
            const auto ub = layout.input(i, k);
            for (std::size_t r = 0; r < m; ++r) {
                qp.variables[ub + r] = {i, VariableKind::NominalInput, k, r};
                qp.f(static_cast<Eigen::Index>(ub + r)) = terms.input_linear[i][k](static_cast<Eigen::Index>(r));
                for (std::size_t q = 0; q < m; ++q)
                    if (w.R(r, q) != 0.0) h.emplace_back(ub + r, ub + q, 2.0 * w.R(r, q));
            }
        }
        qp.constant += terms.constant[i];

        auto eq = [&](RowKind kind, std::size_t k, std::size_t r, double rhs) {
            qp.eq_rows.push_back({i, kind, k, r});
            b.push_back(rhs);
            return static_cast<Eigen::Index>(b.size() - 1);
        };
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = eq(RowKind::Initial, 0, r, state.z(static_cast<Eigen::Index>(model.state_offset(i) + r)));
            a.emplace_back(row, layout.state(i, 0) + r, 1.0);
        }
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t r = 0; r < n; ++r) {
                const auto row = eq(RowKind::Dynamics, k, r, 0.0);
                a.emplace_back(row, layout.state(i, k + 1) + r, 1.0);
                for (const auto& cb : s.couplings) {
                    const auto base = layout.state(cb.neighbor, k);
                    for (Eigen::Index q = 0; q < cb.block.cols(); ++q)
                        if (cb.block(static_cast<Eigen::Index>(r), q) != 0.0)
                            a.emplace_back(row, base + static_cast<std::size_t>(q), -cb.block(static_cast<Eigen::Index>(r), q));
                }
                for (std::size_t q = 0; q < m; ++q)
                    if (s.B(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) != 0.0)
                        a.emplace_back(row, layout.input(i, k) + q, -s.B(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)));
            }
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = eq(RowKind::Terminal, N, r, 0.0);
            a.emplace_back(row, layout.state(i, N) + r, 1.0);
        }

        const auto state_rows = setup.constraints.of(i, ConstraintKind::State);
        const auto input_rows = setup.constraints.of(i, ConstraintKind::Input);
        for (std::size_t k = 0; k < N; ++k) {
            for (auto q : state_rows) {
                const auto& hs = setup.constraints[q];
                const auto row = static_cast<Eigen::Index>(d.size());
                for (std::size_t r = 0; r < n; ++r)
                    if (hs.direction(static_cast<Eigen::Index>(r)) != 0.0)
                        c.emplace_back(row, layout.state(i, k) + r, hs.direction(static_cast<Eigen::Index>(r)));
                d.push_back(1.0 - setup.tightening.value(q, t + k));
                qp.in_rows.push_back({i, RowKind::StateBound, k, setup.constraints.local_index(q)});
            }
            for (auto q : input_rows) {
                const auto& hs = setup.constraints[q];
                const auto row = static_cast<Eigen::Index>(d.size());
                for (std::size_t r = 0; r < m; ++r)
                    if (hs.direction(static_cast<Eigen::Index>(r)) != 0.0)
                        c.emplace_back(row, layout.input(i, k) + r, hs.direction(static_cast<Eigen::Index>(r)));
                d.push_back(1.0 - setup.tightening.value(q, t + k));
                qp.in_rows.push_back({i, RowKind::InputBound, k, setup.constraints.local_index(q)});
            }
        }
    }
    qp.H.resize(nv, nv);
    qp.H.setFromTriplets(h.begin(), h.end());
    qp.A_eq.resize(static_cast<Eigen::Index>(b.size()), nv);
    qp.A_eq.setFromTriplets(a.begin(), a.end());
    qp.b_eq = Eigen::Map<VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    qp.C.resize(static_cast<Eigen::Index>(d.size()), nv);
    qp.C.setFromTriplets(c.begin(), c.end());
    qp.d = Eigen::Map<VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    return qp;
}

VectorXd shifted_candidate(const MpcSetup& setup, const ControllerState& state) {
    const auto N = setup.horizon;
    if (state.nominal_states.size() != N + 1 || state.nominal_inputs.size() != N)
        throw InvalidArgument("no previous solution to shift");
    const QpLayout layout(setup.model, N);
    VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    for (std::size_t k = 0; k < N; ++k) layout.set_states(x, k, state.nominal_states[k + 1]);
    for (std::size_t k = 0; k + 1 < N; ++k) layout.set_inputs(x, k, state.nominal_inputs[k + 1]);
    return x;
}

double max_violation(const QpProblem& qp, const VectorXd& x) {
    double worst = 0.0;
    if (qp.b_eq.size() > 0) worst = (qp.A_eq * x - qp.b_eq).cwiseAbs().maxCoeff();
    if (qp.d.size() > 0) worst = std::max(worst, (qp.C * x - qp.d).maxCoeff());
    return std::max(worst, 0.0);
}

SolverKind solver_kind_from_string(const std::string& s) {
    if (s == "central") return SolverKind::Central;
    if (s == "admm") return SolverKind::Admm;
    throw InvalidArgument("unknown solver '" + s + "' (expected central or admm)");
}

const char* to_string(SolverKind kind) { return kind == SolverKind::Central ? "central" : "admm"; }

StepResult mpc_step(const MpcSetup& setup, ControllerState& state, const VectorXd& x_measured,
                    const std::vector<VectorXd>& history, const MpcOptions& options) {
    const auto& model = setup.model;
    const auto N = setup.horizon;
    const auto t = state.t;
    if (static_cast<std::size_t>(x_measured.size()) != model.total_states())
        throw DimensionMismatch("measured state has wrong length");
    const VectorXd e_now = x_measured - state.z;
    const auto dim = model.total_disturbances();

    PredictionSamples samples;
    if (setup.cost.cost_samples == 0) {
        if (setup.disturbance.kind != DisturbanceKind::IidGaussian)
            throw InvalidArgument("zero cost samples is only allowed for iid disturbances");
        samples = PredictionSamples(1, N, dim);
        for (std::size_t k = 0; k <= N; ++k) samples.at(0, k) = setup.disturbance.mean_at(t + k, dim);
    } else {
        samples = conditional_samples(setup.disturbance, history, t, N, setup.cost.cost_samples, options.seed, dim,
                                      options.frozen_samples ? std::optional<std::uint64_t>(0) : std::nullopt);
    }
    const auto predictions = predict_errors(model, setup.controller, e_now, samples, N);
    const auto terms = expected_cost_terms(model, setup.cost, predictions, t);
    const QpProblem qp = assemble_qp(setup, state, terms);

    StepResult result;
    result.pi = setup.controller.feedback(model, e_now);
    if (state.nominal_states.size() == N + 1) {
        result.witness_checked = true;
        result.witness_violation = max_violation(qp, shifted_candidate(setup, state));
    }

    if (options.solver == SolverKind::Central)
        result.report = solve_centralized(qp, options.central);
    else
        result.report = solve_admm(qp, model, options.admm);

    const auto& rep = result.report;
    if (rep.status == SolveStatus::Infeasible) {
        std::string rows;
        for (std::size_t k = 0; k < rep.violated_rows.size() && k < 8; ++k) {
            const auto r = rep.violated_rows[k];
            const bool eq = r < qp.num_equalities();
            const auto& tag = eq ? qp.eq_rows[r] : qp.in_rows[r - qp.num_equalities()];
            rows += (k ? ", " : "") + std::string(to_string(tag.kind)) + "(agent " + std::to_string(tag.agent) +
                    ", k " + std::to_string(tag.step) + ", j " + std::to_string(tag.index) + ")";
        }
        throw InfeasibleProblem("MPC problem infeasible at t = " + std::to_string(t) + (rows.empty() ? "" : ": " + rows),
                                rep.violated_rows, rep.primal_infeasibility);
    }
    if (rep.status != SolveStatus::Optimal)
        throw NotConverged(std::string("MPC solve at t = ") + std::to_string(t) + " ended with status " +
                           to_string(rep.status) + " after " + std::to_string(rep.iterations) + " iterations");

    // Nominal prediction from the solved inputs.
    const QpLayout layout(model, N);
    const VectorXd zero_w = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    result.nominal_states.push_back(state.z);
    for (std::size_t k = 0; k < N; ++k) {
        result.nominal_inputs.push_back(layout.inputs_at(rep.x, k));
        result.nominal_states.push_back(step_dynamics(model, result.nominal_states.back(), result.nominal_inputs.back(), zero_w));
    }
    result.v = result.nominal_inputs.front();
    result.objective = rep.objective;

    state.nominal_states = result.nominal_states;
    state.nominal_inputs = result.nominal_inputs;
    state.z = result.nominal_states[1];
    state.t = t + 1;
    return result;
}

}  // namespace dsmpc
