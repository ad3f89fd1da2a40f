#include "dsmpc/error_sim.hpp"

#include <filesystem>
#include <fstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/parallel.hpp"

namespace dsmpc {

TubeController TubeController::scalar_heuristic(const NetworkModel& model, double gain) {
    std::vector<TubeGain> gains;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = model.subsystem(i);
        if (s.input_dim != s.state_dim)
            throw InvalidArgument("scalar tube heuristic needs m_i = n_i (subsystem " + std::to_string(i) + ")");
        TubeGain g;
        g.K = MatrixXd::Zero(s.input_dim, model.neighborhood_dim(i));
        if (s.coupling(i) == nullptr)
            throw InvalidArgument("scalar tube heuristic needs subsystem " + std::to_string(i) + " in its own neighborhood");
        g.K.middleCols(model.neighborhood_offset(i, i), s.state_dim) =
            gain * MatrixXd::Identity(s.input_dim, s.state_dim);
        gains.push_back(std::move(g));
    }
    return TubeController(std::move(gains));
}

bool TubeController::saturated() const {
    for (const auto& g : gains_)
        if (g.saturated()) return true;
    return false;
}

MatrixXd TubeController::dense_K(const NetworkModel& model) const {
    MatrixXd K = MatrixXd::Zero(model.total_inputs(), model.total_states());
    for (std::size_t i = 0; i < model.size(); ++i) {
        std::size_t col = 0;
        for (const auto j : model.neighbors(i)) {
            const auto nj = model.subsystem(j).state_dim;
            K.block(model.input_offset(i), model.state_offset(j), model.subsystem(i).input_dim, nj) =
                gains_[i].K.middleCols(col, nj);
            col += nj;
        }
    }
    return K;
}

MatrixXd TubeController::closed_loop(const NetworkModel& model) const {
    return model.dense_A() + model.dense_B() * dense_K(model);
}

VectorXd TubeController::feedback(const NetworkModel& model, const VectorXd& error) const {
    VectorXd pi(model.total_inputs());
    for (std::size_t i = 0; i < model.size(); ++i)
        pi.segment(model.input_offset(i), model.subsystem(i).input_dim) =
            tube_feedback(*this, i, model.gather_neighborhood(i, error));
    return pi;
}

void validate_controller(const NetworkModel& model, const TubeController& controller) {
    if (controller.size() != model.size())
        throw DimensionMismatch("tube controller has " + std::to_string(controller.size()) + " gains for " +
                                std::to_string(model.size()) + " subsystems");
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& g = controller.gain(i);
        const auto& s = model.subsystem(i);
        if (static_cast<std::size_t>(g.K.rows()) != s.input_dim ||
            static_cast<std::size_t>(g.K.cols()) != model.neighborhood_dim(i))
            throw DimensionMismatch("K_" + std::to_string(i) + " is " + std::to_string(g.K.rows()) + "x" +
                                        std::to_string(g.K.cols()) + ", expected " + std::to_string(s.input_dim) +
                                        "x" + std::to_string(model.neighborhood_dim(i)),
                                    i);
        if (g.saturated()) {
            if (static_cast<std::size_t>(g.lower.size()) != s.input_dim ||
                static_cast<std::size_t>(g.upper.size()) != s.input_dim)
                throw DimensionMismatch("saturation bounds of subsystem " + std::to_string(i) + " have wrong length", i);
            if ((g.lower.array() > g.upper.array()).any())
                throw InvalidArgument("saturation lower bound exceeds upper bound for subsystem " + std::to_string(i));
        }
    }
}

VectorXd tube_feedback(const TubeController& controller, std::size_t i, const VectorXd& e_neighborhood) {
    const auto& g = controller.gain(i);
    if (e_neighborhood.size() != g.K.cols())
        throw DimensionMismatch("neighborhood error has length " + std::to_string(e_neighborhood.size()) +
                                    ", expected " + std::to_string(g.K.cols()),
                                i);
    VectorXd pi = g.K * e_neighborhood;
    if (g.lower.size() > 0) pi = pi.cwiseMax(g.lower);
    if (g.upper.size() > 0) pi = pi.cwiseMin(g.upper);
    return pi;
}

TubeController controller_from_json(const nlohmann::json& doc, const NetworkModel& model) {
    if (doc.is_object() && doc.contains("scalar_gain")) {
        auto c = TubeController::scalar_heuristic(model, doc.at("scalar_gain").get<double>());
        if (doc.contains("saturation")) {
            const auto bounds = vector_from_json(doc.at("saturation"), "saturation");
            if (bounds.size() != 2) throw InvalidConfig("saturation must be [lower, upper]");
            std::vector<TubeGain> gains;
            for (std::size_t i = 0; i < c.size(); ++i) {
                auto g = c.gain(i);
                g.lower = VectorXd::Constant(g.K.rows(), bounds(0));
                g.upper = VectorXd::Constant(g.K.rows(), bounds(1));
                gains.push_back(std::move(g));
            }
            c = TubeController(std::move(gains));
        }
        validate_controller(model, c);
        return c;
    }
    const auto& list = doc.is_object() ? doc.at("gains") : doc;
    std::vector<TubeGain> gains;
    for (std::size_t i = 0; i < list.size(); ++i) {
        TubeGain g;
        g.K = matrix_from_json(list[i].at("K"), "K_" + std::to_string(i));
        if (list[i].contains("lower")) g.lower = vector_from_json(list[i].at("lower"), "lower");
        if (list[i].contains("upper")) g.upper = vector_from_json(list[i].at("upper"), "upper");
        gains.push_back(std::move(g));
    }
    TubeController c(std::move(gains));
    validate_controller(model, c);
    return c;
}

nlohmann::json controller_to_json(const TubeController& controller) {
    auto gains = nlohmann::json::array();
    for (std::size_t i = 0; i < controller.size(); ++i) {
        const auto& g = controller.gain(i);
        nlohmann::json j{{"K", matrix_to_json(g.K)}};
        if (g.lower.size() > 0) j["lower"] = vector_to_json(g.lower);
        if (g.upper.size() > 0) j["upper"] = vector_to_json(g.upper);
        gains.push_back(std::move(j));
    }
    return nlohmann::json{{"gains", std::move(gains)}};
}

ErrorBank::ErrorBank(std::size_t count, std::size_t task_horizon, std::size_t state_dim, std::size_t input_dim)
    : count_(count),
      task_horizon_(task_horizon),
      n_(state_dim),
      m_(input_dim),
      errors_(count * (task_horizon + 1) * state_dim, 0.0),
      feedbacks_(count * (task_horizon + 1) * input_dim, 0.0) {}

ErrorBank simulate_error_bank(const NetworkModel& model, const TubeController& controller, const ScenarioBank& bank,
                              std::size_t threads) {
    require_valid(model);
    validate_controller(model, controller);
    if (bank.dim() != model.total_disturbances())
        throw DimensionMismatch("scenario bank dimension " + std::to_string(bank.dim()) +
                                " does not match the model disturbance dimension " +
                                std::to_string(model.total_disturbances()));
    const auto horizon = bank.task_horizon();
    ErrorBank out(bank.count(), horizon, model.total_states(), model.total_inputs());
    std::vector<MatrixXd> local_A;
    for (std::size_t i = 0; i < model.size(); ++i) local_A.push_back(model.neighborhood_matrix(i));

    parallel_for(bank.count(), threads, [&](std::size_t l) {
        for (std::size_t t = 0; t <= horizon; ++t) {
            const VectorXd e = out.error(l, t);
            auto pi = out.feedback(l, t);
            const auto w = bank.at(l, t);
            for (std::size_t i = 0; i < model.size(); ++i) {
                const auto& s = model.subsystem(i);
                const VectorXd e_nb = model.gather_neighborhood(i, e);
                const VectorXd pi_i = tube_feedback(controller, i, e_nb);
                pi.segment(model.input_offset(i), s.input_dim) = pi_i;
                if (t == horizon) continue;
                out.error(l, t + 1).segment(model.state_offset(i), s.state_dim) =
                    local_A[i] * e_nb + s.B * pi_i + s.G * w.segment(model.disturbance_offset(i), s.disturbance_dim);
            }
        }
    });
    return out;
}

MatrixXd ErrorMoments::local(const NetworkModel& model, std::size_t i, std::size_t t) const {
    const auto off = model.state_offset(i);
    const auto n = model.subsystem(i).state_dim;
    return covariance.at(t).block(off, off, n, n);
}

MatrixXd ErrorMoments::neighborhood(const NetworkModel& model, std::size_t i, std::size_t t) const {
    const auto nbrs = model.neighbors(i);
    std::vector<Eigen::Index> idx;
    for (const auto j : nbrs)
        for (std::size_t k = 0; k < model.subsystem(j).state_dim; ++k)
            idx.push_back(static_cast<Eigen::Index>(model.state_offset(j) + k));
    MatrixXd out(idx.size(), idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = covariance.at(t)(idx[r], idx[c]);
    return out;
}

VectorXd ErrorMoments::local_mean(const NetworkModel& model, std::size_t i, std::size_t t) const {
    return mean.at(t).segment(model.state_offset(i), model.subsystem(i).state_dim);
}

VectorXd ErrorMoments::neighborhood_mean(const NetworkModel& model, std::size_t i, std::size_t t) const {
    return model.gather_neighborhood(i, mean.at(t));
}

ErrorMoments propagate_error_covariance(const NetworkModel& model, const TubeController& controller,
                                        const DisturbanceSpec& spec, std::size_t task_horizon) {
    require_valid(model);
    validate_controller(model, controller);
    if (controller.saturated()) throw InvalidArgument("analytic error moments need an unsaturated tube controller");
    if (spec.kind == DisturbanceKind::EmpiricalFile)
        throw InvalidArgument("analytic error moments need a Gaussian disturbance model");
    const auto n = model.total_states();
    const auto p = model.total_disturbances();
    validate_spec(spec, p);
    const MatrixXd Acl = controller.closed_loop(model);
    const MatrixXd G = model.dense_G();
    const double r = spec.effective_rho();

    // Joint state (e, d) with d = w - mu:  e+ = Acl e + G d,  d+ = r d + eps.
    MatrixXd F = MatrixXd::Zero(n + p, n + p);
    F.topLeftCorner(n, n) = Acl;
    F.topRightCorner(n, p) = G;
    F.bottomRightCorner(p, p) = r * MatrixXd::Identity(p, p);
    MatrixXd noise = MatrixXd::Zero(n + p, n + p);
    noise.bottomRightCorner(p, p) = spec.innovation_covariance(p);

    MatrixXd joint = MatrixXd::Zero(n + p, n + p);
    joint.bottomRightCorner(p, p) = spec.stationary_covariance(p);
    VectorXd m = VectorXd::Zero(n);

    ErrorMoments out;
    for (std::size_t t = 0; t <= task_horizon; ++t) {
        out.mean.push_back(m);
        out.covariance.push_back(joint.topLeftCorner(n, n));
        if (t == task_horizon) break;
        m = Acl * m + G * spec.mean_at(t, p);
        joint = F * joint * F.transpose() + noise;
        joint = 0.5 * (joint + joint.transpose());
    }
    return out;
}

void save_error_bank(const ErrorBank& bank, const std::string& prefix) {
    const std::string csv_path = prefix + ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << "sample,t";
    for (std::size_t k = 0; k < bank.state_dim(); ++k) csv << ",e" << k;
    for (std::size_t k = 0; k < bank.input_dim(); ++k) csv << ",pi" << k;
    csv << '\n';
    for (std::size_t l = 0; l < bank.count(); ++l)
        for (std::size_t t = 0; t <= bank.task_horizon(); ++t) {
            csv << l << ',' << t;
            const auto e = bank.error(l, t);
            const auto pi = bank.feedback(l, t);
            for (Eigen::Index k = 0; k < e.size(); ++k) csv << ',' << format_double(e(k));
            for (Eigen::Index k = 0; k < pi.size(); ++k) csv << ',' << format_double(pi(k));
            csv << '\n';
        }
    nlohmann::json header{{"format", "dsmpc-error-bank"},
                          {"csv", std::filesystem::path(csv_path).filename().string()},
                          {"count", bank.count()},
                          {"task_horizon", bank.task_horizon()},
                          {"state_dim", bank.state_dim()},
                          {"input_dim", bank.input_dim()}};
    write_json_file(prefix + ".json", header);
}

void save_error_summary(const NetworkModel& model, const ConstraintSet& constraints, const ErrorBank& bank,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "kind,i,j,t,mean,max\n";
    for (std::size_t q = 0; q < constraints.size(); ++q) {
        const auto& h = constraints[q];
        const bool state = h.kind == ConstraintKind::State;
        const auto off = state ? model.state_offset(h.owner) : model.input_offset(h.owner);
        for (std::size_t t = 0; t <= bank.task_horizon(); ++t) {
            double sum = 0.0;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < bank.count(); ++l) {
                const auto v = state ? bank.error(l, t) : bank.feedback(l, t);
                const double proj = h.direction.dot(v.segment(off, h.direction.size()));
                sum += proj;
                mx = std::max(mx, proj);
            }
            out << to_string(h.kind) << ',' << h.owner << ',' << constraints.local_index(q) << ',' << t << ','
                << format_double(sum / static_cast<double>(bank.count())) << ',' << format_double(mx) << '\n';
        }
    }
}

}  // namespace dsmpc
