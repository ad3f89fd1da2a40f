#include "dsmpc/experiment.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"

namespace dsmpc {

namespace fs = std::filesystem;

namespace {

// Substreams of the experiment seed.
constexpr std::uint64_t kTighteningStream = 1;
constexpr std::uint64_t kSimulationStream = 3;

TighteningMethod method_from_string(const std::string& s) {
    if (s == "scenario") return TighteningMethod::Scenario;
    if (s == "analytic") return TighteningMethod::Analytic;
    throw InvalidConfig("unknown tightening method '" + s + "' (expected scenario or analytic)");
}

const char* to_string(TighteningMethod m) { return m == TighteningMethod::Scenario ? "scenario" : "analytic"; }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string run_prefix(const std::string& dir, std::size_t r) {
    char name[32];
    std::snprintf(name, sizeof(name), "run_%04zu", r);
    return (fs::path(dir) / name).string();
}

void parse_solver(const nlohmann::json& doc, MpcOptions& mpc) {
    if (doc.contains("kind")) mpc.solver = solver_kind_from_string(doc.at("kind").get<std::string>());
    mpc.central.tolerance = doc.value("tolerance", mpc.central.tolerance);
    mpc.central.max_iterations = doc.value("max_iterations", mpc.central.max_iterations);
    mpc.witness_tolerance = doc.value("witness_tolerance", mpc.witness_tolerance);
    if (doc.contains("admm")) {
        const auto& a = doc.at("admm");
        mpc.admm.rho = a.value("rho", mpc.admm.rho);
        mpc.admm.eps_abs = a.value("eps_abs", mpc.admm.eps_abs);
        mpc.admm.eps_rel = a.value("eps_rel", mpc.admm.eps_rel);
        mpc.admm.max_iterations = a.value("max_iterations", mpc.admm.max_iterations);
        mpc.admm.adaptive = a.value("adaptive", mpc.admm.adaptive);
    }
    mpc.admm.local = mpc.central;
}

}  // namespace

VectorXd Experiment::initial_state() const {
    const auto n = static_cast<Eigen::Index>(setup.model.total_states());
    return simulation.x0.size() == 0 ? VectorXd::Zero(n) : simulation.x0;
}

RunOptions Experiment::run_options() const {
    RunOptions r;
    r.mpc = mpc;
    r.steps = simulation.steps;
    return r;
}

std::string config_hash(const nlohmann::json& doc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : doc.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

Experiment experiment_from_json(const nlohmann::json& doc, const std::string& base_dir) {
    if (!doc.is_object()) throw InvalidConfig("config must be a JSON object");
    Experiment ex;
    ex.config = doc;
    // Drop the hash echoed into written configs.
    if (ex.config.is_object()) ex.config.erase("config_hash");
    auto& s = ex.setup;
    try {
        ex.seed = doc.value("seed", std::uint64_t{0});
        const auto mpc = doc.value("mpc", nlohmann::json::object());
        if (doc.contains("benchmark")) {
            if (doc.contains("network")) throw InvalidConfig("config holds both 'network' and 'benchmark'");
            auto spec = benchmark_spec_from_json(doc.at("benchmark"));
            if (doc.contains("disturbance")) spec.disturbance = disturbance_from_json(doc.at("disturbance"), base_dir);
            auto b = build_datacenter_benchmark(spec);
            s.model = std::move(b.model);
            s.constraints = std::move(b.constraints);
            s.controller = std::move(b.controller);
            s.cost = std::move(b.cost);
            s.disturbance = std::move(b.disturbance);
            s.horizon = spec.horizon;
            ex.task_horizon = spec.task_horizon();
            ex.tightening.samples = spec.scenario_count;
            ex.positions = std::move(b.positions);
            ex.side_length = b.side_length;
            ex.mean_degree = b.mean_degree;
            ex.benchmark = spec;
        } else {
            if (!doc.contains("network")) throw InvalidConfig("config needs 'network' or 'benchmark'");
            s.model = network_from_json(doc.at("network"));
            require_valid(s.model);
            s.constraints = constraints_from_json(doc.at("constraints"), s.model);
            s.controller = controller_from_json(doc.at("controller"), s.model);
            s.cost = cost_from_json(doc.at("cost"), s.model);
            s.disturbance = disturbance_from_json(doc.at("disturbance"), base_dir);
            s.horizon = mpc.value("horizon", std::size_t{24});
            ex.task_horizon = mpc.value("task_horizon", s.horizon + 96);
        }
        if (mpc.contains("cost_samples")) s.cost.cost_samples = mpc.at("cost_samples").get<std::size_t>();
        ex.mpc.frozen_samples = mpc.value("frozen_samples", false);
        if (s.horizon < 1) throw InvalidConfig("mpc.horizon must be at least 1");
        if (ex.task_horizon <= s.horizon) throw InvalidConfig("mpc.task_horizon must exceed mpc.horizon");

        if (doc.contains("tightening")) {
            const auto& t = doc.at("tightening");
            if (t.contains("method")) ex.tightening.method = method_from_string(t.at("method").get<std::string>());
            ex.tightening.samples = t.value("samples", ex.tightening.samples);
            ex.tightening.beta = t.value("beta", ex.tightening.beta);
        }
        if (!(ex.tightening.beta > 0.0 && ex.tightening.beta < 1.0))
            throw InvalidConfig("tightening.beta must lie in (0, 1)");
        if (ex.tightening.samples < 1) throw InvalidConfig("tightening.samples must be positive");

        if (doc.contains("simulation")) {
            const auto& sim = doc.at("simulation");
            ex.simulation.runs = sim.value("runs", ex.simulation.runs);
            ex.simulation.steps = sim.value("steps", ex.simulation.steps);
            if (sim.contains("x0")) {
                const auto n = static_cast<Eigen::Index>(s.model.total_states());
                const auto& x0 = sim.at("x0");
                ex.simulation.x0 = x0.is_number() ? VectorXd::Constant(n, x0.get<double>())
                                                  : vector_from_json(x0, "simulation.x0");
                if (ex.simulation.x0.size() != n) throw InvalidConfig("simulation.x0 has wrong length");
            }
        }
        if (ex.simulation.runs < 1) throw InvalidConfig("simulation.runs must be positive");
        if (ex.simulation.steps > ex.task_horizon - s.horizon)
            throw InvalidConfig("simulation.steps exceeds task_horizon - horizon");

        if (doc.contains("solver")) parse_solver(doc.at("solver"), ex.mpc);
        ex.mpc.seed = ex.seed;
        if (doc.contains("report")) {
            ex.confidence = doc.at("report").value("confidence", ex.confidence);
            ex.nominal_tolerance = doc.at("report").value("nominal_tolerance", ex.nominal_tolerance);
        }
        if (!(ex.confidence > 0.0 && ex.confidence < 1.0)) throw InvalidConfig("report.confidence must lie in (0, 1)");
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("config: ") + e.what());
    }
    validate_spec(s.disturbance, s.model.total_disturbances());
    ex.config_hash = config_hash(ex.config);
    return ex;
}

Experiment load_experiment(const std::string& path) {
    const auto doc = read_json_file(path);
    const auto dir = fs::path(path).parent_path();
    return experiment_from_json(doc, dir.empty() ? std::string(".") : dir.string());
}

void override_seed(Experiment& ex, std::uint64_t seed) {
    ex.seed = seed;
    ex.mpc.seed = seed;
    ex.config["seed"] = seed;
    ex.config_hash = config_hash(ex.config);
}

void override_solver(Experiment& ex, SolverKind kind) {
    ex.mpc.solver = kind;
    ex.config["solver"]["kind"] = to_string(kind);
    ex.config_hash = config_hash(ex.config);
}

ScenarioBank tightening_bank(const Experiment& ex, std::size_t threads) {
    return generate_bank(ex.setup.disturbance, ex.setup.model, ex.task_horizon, ex.tightening.samples,
                         derive_seed(ex.seed, kTighteningStream, 0), threads);
}

ScenarioBank simulation_bank(const Experiment& ex, std::size_t threads) {
    return generate_bank(ex.setup.disturbance, ex.setup.model, ex.task_horizon, ex.simulation.runs,
                         derive_seed(ex.seed, kSimulationStream, 0), threads);
}

TighteningTable compute_tightening(const Experiment& ex, std::size_t threads) {
    const auto& s = ex.setup;
    if (ex.tightening.method == TighteningMethod::Analytic) {
        const auto moments = propagate_error_covariance(s.model, s.controller, s.disturbance, ex.task_horizon);
        return tighten_analytic(s.model, s.constraints, s.controller, moments);
    }
    const auto bank = tightening_bank(ex, threads);
    const auto errors = simulate_error_bank(s.model, s.controller, bank, threads);
    return tighten_all(s.model, s.constraints, errors, ex.tightening.beta, threads);
}

std::vector<TrajectoryLog> run_simulation(const Experiment& ex, const TighteningTable& table, std::size_t threads) {
    MpcSetup setup = ex.setup;
    setup.tightening = table;
    const auto bank = simulation_bank(ex, threads);
    auto logs = monte_carlo(setup, ex.initial_state(), bank, ex.run_options(), threads);
    for (auto& log : logs) {
        log.metadata["config"] = ex.config;
        log.metadata["config_hash"] = ex.config_hash;
        log.metadata["experiment_seed"] = ex.seed;
    }
    return logs;
}

nlohmann::json ExperimentReport::summary(const Experiment& ex) const {
    nlohmann::json j = violation_summary(violations);
    j["config_hash"] = ex.config_hash;
    j["seed"] = ex.seed;
    j["agents"] = ex.setup.model.size();
    j["horizon"] = ex.setup.horizon;
    j["task_horizon"] = ex.task_horizon;
    j["tightening"] = {{"method", to_string(ex.tightening.method)},
                       {"samples", ex.tightening.samples},
                       {"beta", ex.tightening.beta}};
    j["nominal_state_violations"] = nominal_state_violations;
    j["nominal_input_violations"] = nominal_input_violations;
    j["nominal_state_active"] = nominal_state_active;
    j["nominal_input_active"] = nominal_input_active;
    j["max_witness_violation"] = max_witness_violation;
    if (ex.benchmark) {
        j["benchmark"] = {{"side_length", ex.side_length},
                          {"mean_degree", ex.mean_degree},
                          {"gersgorin_max_row_sum",
                           ex.setup.controller.closed_loop(ex.setup.model).cwiseAbs().rowwise().sum().maxCoeff()}};
    }
    return j;
}

ExperimentReport build_report(const Experiment& ex, const TighteningTable& table,
                              const std::vector<TrajectoryLog>& logs) {
    ExperimentReport rep;
    rep.violations = violation_report(logs, ex.setup.model, ex.setup.constraints, ex.confidence);
    for (const auto& log : logs) {
        rep.nominal.push_back(
            nominal_tightening_check(log, ex.setup.model, ex.setup.constraints, table, ex.nominal_tolerance));
        rep.nominal_state_violations += rep.nominal.back().state_violations;
        rep.nominal_input_violations += rep.nominal.back().input_violations;
        rep.nominal_state_active += rep.nominal.back().state_active;
        rep.nominal_input_active += rep.nominal.back().input_active;
        for (const auto& s : log.steps)
            if (s.witness_checked) rep.max_witness_violation = std::max(rep.max_witness_violation, s.witness_violation);
    }
    return rep;
}

void write_model_files(const Experiment& ex, const std::string& dir) {
    ensure_dir(dir);
    const fs::path d(dir);
    auto resolved = ex.config;
    resolved["config_hash"] = ex.config_hash;
    write_json_file((d / "config.json").string(), resolved);
    write_json_file((d / "network.json").string(), network_to_json(ex.setup.model));
    write_json_file((d / "constraints.json").string(), constraints_to_json(ex.setup.constraints));
    write_json_file((d / "controller.json").string(), controller_to_json(ex.setup.controller));
    write_json_file((d / "cost.json").string(), cost_to_json(ex.setup.cost));
    write_json_file((d / "disturbance.json").string(), disturbance_to_json(ex.setup.disturbance));
    if (ex.benchmark) {
        auto spec = benchmark_spec_to_json(*ex.benchmark);
        spec["side_length"] = ex.side_length;
        spec["mean_degree"] = ex.mean_degree;
        write_json_file((d / "benchmark.json").string(), spec);
        const auto path = (d / "positions.csv").string();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write " + path);
        out << "i,x,y\n";
        for (Eigen::Index i = 0; i < ex.positions.rows(); ++i)
            out << i << ',' << format_double(ex.positions(i, 0)) << ',' << format_double(ex.positions(i, 1)) << '\n';
    }
}

void write_logs(const std::vector<TrajectoryLog>& logs, const std::string& dir) {
    ensure_dir(dir);
    for (std::size_t r = 0; r < logs.size(); ++r) save_log(logs[r], run_prefix(dir, r));
}

std::vector<TrajectoryLog> read_logs(const std::string& dir) {
    std::vector<TrajectoryLog> logs;
    while (fs::exists(run_prefix(dir, logs.size()) + ".json")) logs.push_back(load_log(run_prefix(dir, logs.size())));
    if (logs.empty()) throw IoError("no run logs found in " + dir);
    return logs;
}

void write_report(const Experiment& ex, const ExperimentReport& report, const std::string& dir) {
    ensure_dir(dir);
    save_violation_report(report.violations, (fs::path(dir) / "violations.csv").string());
    write_json_file((fs::path(dir) / "report.json").string(), report.summary(ex));
}

}  // namespace dsmpc
