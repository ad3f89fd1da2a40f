#include "dsmpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/parallel.hpp"

namespace dsmpc {

bool TrajectoryLog::operator==(const TrajectoryLog& other) const {
    if (steps.size() != other.steps.size() || x_final != other.x_final) return false;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& a = steps[k];
        const auto& b = other.steps[k];
        if (a.t != b.t || a.x != b.x || a.z != b.z || a.e != b.e || a.v != b.v || a.pi != b.pi || a.u != b.u ||
            a.w != b.w || a.z_next != b.z_next || a.objective != b.objective)
            return false;
    }
    return true;
}

TrajectoryLog closed_loop_run(const MpcSetup& setup, const VectorXd& x0, const std::vector<VectorXd>& disturbance,
                              const RunOptions& options) {
    validate_setup(setup);
    const auto& model = setup.model;
    const std::size_t available = setup.tightening.task_horizon() - setup.horizon;
    const std::size_t steps = options.steps == 0 ? available : options.steps;
    if (steps > available)
        throw InvalidArgument("run of " + std::to_string(steps) + " steps exceeds N̄ - N = " + std::to_string(available));
    if (disturbance.size() < steps)
        throw InvalidArgument("disturbance realization has " + std::to_string(disturbance.size()) + " steps, need " +
                              std::to_string(steps));
    if (static_cast<std::size_t>(x0.size()) != model.total_states()) throw DimensionMismatch("x0 has wrong length");

    TrajectoryLog log;
    log.metadata = {{"steps", steps},
                    {"horizon", setup.horizon},
                    {"solver", to_string(options.mpc.solver)},
                    {"seed", options.mpc.seed},
                    {"frozen_samples", options.mpc.frozen_samples}};
    ControllerState state = ControllerState::initial(x0);
    VectorXd x = x0;
    std::vector<VectorXd> history;
    history.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        LogStep step;
        step.t = t;
        step.x = x;
        step.z = state.z;
        step.e = x - state.z;
        auto res = mpc_step(setup, state, x, history, options.mpc);
        step.v = res.v;
        step.pi = res.pi;
        step.u = res.v + res.pi;
        step.w = disturbance[t];
        step.z_next = res.nominal_states[1];
        step.objective = res.objective;
        step.iterations = res.report.iterations;
        step.witness_checked = res.witness_checked;
        step.witness_violation = res.witness_violation;
        x = step_dynamics(model, x, step.u, step.w);
        history.push_back(step.w);
        log.steps.push_back(std::move(step));
    }
    log.x_final = x;
    return log;
}

std::vector<TrajectoryLog> monte_carlo(const MpcSetup& setup, const VectorXd& x0, const ScenarioBank& bank,
                                       const RunOptions& options, std::size_t threads) {
    std::vector<TrajectoryLog> logs(bank.count());
    parallel_for(bank.count(), threads, [&](std::size_t r) {
        RunOptions local = options;
        if (!options.mpc.frozen_samples) local.mpc.seed = derive_seed(options.mpc.seed, 4, r);
        logs[r] = closed_loop_run(setup, x0, bank.trajectory(r), local);
        logs[r].metadata["run"] = r;
        logs[r].metadata["bank_seed"] = bank.seed;
    });
    return logs;
}

double ViolationReport::max_frequency() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.frequency);
    return m;
}

double ViolationReport::max_frequency(ConstraintKind kind) const {
    double m = 0.0;
    for (const auto& e : entries)
        if (constraints[e.q].kind == kind) m = std::max(m, e.frequency);
    return m;
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double confidence) {
    if (n == 0) return {0.0, 1.0};
    if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidArgument("confidence must lie in (0, 1)");
    const double z = normal_quantile(0.5 + 0.5 * confidence);
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double denom = 1.0 + z * z / nn;
    const double centre = (p + z * z / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
    return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

ViolationReport violation_report(const std::vector<TrajectoryLog>& logs, const NetworkModel& model,
                                 const ConstraintSet& constraints, double confidence) {
    if (logs.empty()) throw InvalidArgument("violation report needs at least one log");
    ViolationReport rep;
    rep.constraints = constraints;
    rep.confidence = confidence;
    rep.runs = logs.size();
    std::size_t T = logs.front().steps.size();
    for (const auto& log : logs) T = std::min(T, log.steps.size());

    rep.aggregate.assign(constraints.size(), 0.0);
    for (std::size_t q = 0; q < constraints.size(); ++q) {
        const auto& h = constraints[q];
        const bool state = h.kind == ConstraintKind::State;
        const std::size_t times = state ? T + 1 : T;
        std::size_t total = 0;
        for (std::size_t t = 0; t < times; ++t) {
            ViolationEntry e;
            e.q = q;
            e.t = t;
            e.runs = logs.size();
            for (const auto& log : logs) {
                const VectorXd& vec = state ? (t < log.steps.size() ? log.steps[t].x : log.x_final) : log.steps[t].u;
                const auto o = state ? model.state_offset(h.owner) : model.input_offset(h.owner);
                if (h.direction.dot(vec.segment(static_cast<Eigen::Index>(o), h.direction.size())) > 1.0) ++e.violations;
            }
            e.frequency = static_cast<double>(e.violations) / static_cast<double>(e.runs);
            std::tie(e.ci_low, e.ci_high) = wilson_interval(e.violations, e.runs, confidence);
            total += e.violations;
            rep.entries.push_back(e);
        }
        rep.aggregate[q] = static_cast<double>(total) / static_cast<double>(times * logs.size());
    }
    return rep;
}

NominalCheck nominal_tightening_check(const TrajectoryLog& log, const NetworkModel& model,
                                      const ConstraintSet& constraints, const TighteningTable& table, double tolerance) {
    NominalCheck out;
    for (const auto& step : log.steps)
        for (std::size_t q = 0; q < constraints.size(); ++q) {
            const auto& h = constraints[q];
            const bool state = h.kind == ConstraintKind::State;
            const auto o = state ? model.state_offset(h.owner) : model.input_offset(h.owner);
            const VectorXd& vec = state ? step.z : step.v;
            const double excess =
                h.direction.dot(vec.segment(static_cast<Eigen::Index>(o), h.direction.size())) - (1.0 - table.value(q, step.t));
            if (state) {
                out.worst_state_excess = std::max(out.worst_state_excess, excess);
                if (excess > tolerance) ++out.state_violations;
                if (excess >= -tolerance) ++out.state_active;
            } else {
                out.worst_input_excess = std::max(out.worst_input_excess, excess);
                if (excess > tolerance) ++out.input_violations;
                if (excess >= -tolerance) ++out.input_active;
            }
        }
    return out;
}

namespace {

void write_vector_rows(std::ostream& out, std::size_t t, const char* name, const VectorXd& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) out << t << ',' << name << ',' << k << ',' << format_double(v(k)) << '\n';
}

}  // namespace

void save_log(const TrajectoryLog& log, const std::string& prefix) {
    const std::string csv_path = prefix + ".csv";
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write " + csv_path);
    out << "t,quantity,index,value\n";
    for (const auto& s : log.steps) {
        write_vector_rows(out, s.t, "x", s.x);
        write_vector_rows(out, s.t, "z", s.z);
        write_vector_rows(out, s.t, "e", s.e);
        write_vector_rows(out, s.t, "v", s.v);
        write_vector_rows(out, s.t, "pi", s.pi);
        write_vector_rows(out, s.t, "u", s.u);
        write_vector_rows(out, s.t, "w", s.w);
        write_vector_rows(out, s.t, "z_next", s.z_next);
        out << s.t << ",objective,0," << format_double(s.objective) << '\n';
        out << s.t << ",iterations,0," << s.iterations << '\n';
        if (s.witness_checked) out << s.t << ",witness_violation,0," << format_double(s.witness_violation) << '\n';
    }
    write_vector_rows(out, log.steps.size(), "x", log.x_final);
    if (!out) throw IoError("failed writing " + csv_path);
    auto meta = log.metadata;
    meta["csv"] = std::filesystem::path(csv_path).filename().string();
    write_json_file(prefix + ".json", meta);
}

TrajectoryLog load_log(const std::string& prefix) {
    TrajectoryLog log;
    log.metadata = read_json_file(prefix + ".json");
    const std::string csv_path = prefix + ".csv";
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open " + csv_path);
    std::string line;
    std::getline(in, line);
    std::map<std::size_t, std::map<std::string, std::vector<double>>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string ts, name, idx, val;
        if (!std::getline(is, ts, ',') || !std::getline(is, name, ',') || !std::getline(is, idx, ',') ||
            !std::getline(is, val))
            throw IoError(csv_path + ": malformed row '" + line + "'");
        auto& vec = rows[std::stoul(ts)][name];
        const auto k = std::stoul(idx);
        if (vec.size() <= k) vec.resize(k + 1, 0.0);
        vec[k] = std::strtod(val.c_str(), nullptr);
    }
    auto as_vector = [](const std::vector<double>& v) {
        return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    for (auto& [t, q] : rows) {
        if (!q.count("v")) {
            log.x_final = as_vector(q["x"]);
            continue;
        }
        LogStep s;
        s.t = t;
        s.x = as_vector(q["x"]);
        s.z = as_vector(q["z"]);
        s.e = as_vector(q["e"]);
        s.v = as_vector(q["v"]);
        s.pi = as_vector(q["pi"]);
        s.u = as_vector(q["u"]);
        s.w = as_vector(q["w"]);
        s.z_next = as_vector(q["z_next"]);
        s.objective = q["objective"].empty() ? 0.0 : q["objective"][0];
        s.iterations = q["iterations"].empty() ? 0 : static_cast<std::size_t>(q["iterations"][0]);
        if (q.count("witness_violation")) {
            s.witness_checked = true;
            s.witness_violation = q["witness_violation"][0];
        }
        log.steps.push_back(std::move(s));
    }
    return log;
}

void save_violation_report(const ViolationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "kind,i,j,t,violations,runs,frequency,ci_low,ci_high\n";
    for (const auto& e : report.entries) {
        const auto& h = report.constraints[e.q];
        out << to_string(h.kind) << ',' << h.owner << ',' << report.constraints.local_index(e.q) << ',' << e.t << ','
            << e.violations << ',' << e.runs << ',' << format_double(e.frequency) << ',' << format_double(e.ci_low)
            << ',' << format_double(e.ci_high) << '\n';
    }
}

nlohmann::json violation_summary(const ViolationReport& report) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t q = 0; q < report.constraints.size(); ++q) {
        const auto& h = report.constraints[q];
        double worst = 0.0;
        for (const auto& e : report.entries)
            if (e.q == q) worst = std::max(worst, e.frequency);
        per.push_back({{"kind", to_string(h.kind)},
                       {"i", h.owner},
                       {"j", report.constraints.local_index(q)},
                       {"p", h.probability},
                       {"aggregate_frequency", report.aggregate[q]},
                       {"max_frequency", worst}});
    }
    return {{"runs", report.runs},
            {"confidence", report.confidence},
            {"max_state_frequency", report.max_frequency(ConstraintKind::State)},
            {"max_input_frequency", report.max_frequency(ConstraintKind::Input)},
            {"constraints", per}};
}

}  // namespace dsmpc
