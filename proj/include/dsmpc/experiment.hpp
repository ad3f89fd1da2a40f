#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmpc/benchmark.hpp"
#include "dsmpc/harness.hpp"
#include "dsmpc/mpc.hpp"

namespace dsmpc {

enum class TighteningMethod { Scenario, Analytic };

struct TighteningConfig {
    TighteningMethod method = TighteningMethod::Scenario;
    std::size_t samples = 100;
    double beta = 1e-3;
};

struct SimulationConfig {
    std::size_t runs = 1;
    VectorXd x0;  // empty means zero
    std::size_t steps = 0;
};

/// A fully resolved experiment: the MPC setup (without its tightening table,
/// which is computed or loaded separately) plus run and report settings.
struct Experiment {
    nlohmann::json config;  // resolved document, echoed into every artifact
    std::string config_hash;
    std::uint64_t seed = 0;
    std::optional<BenchmarkSpec> benchmark;
    MatrixXd positions;  // benchmark server positions, M x 2
    double side_length = 0.0;
    double mean_degree = 0.0;

    MpcSetup setup;
    std::size_t task_horizon = 0;  // N̄
    TighteningConfig tightening;
    SimulationConfig simulation;
    MpcOptions mpc;
    double confidence = 0.95;
    double nominal_tolerance = 1e-6;

    VectorXd initial_state() const;
    RunOptions run_options() const;
};

/// Builds an experiment from a config document. Relative file references
/// resolve against `base_dir`.
Experiment experiment_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
Experiment load_experiment(const std::string& path);
/// Re-resolves after changing seed or solver so that hash and echo agree.
void override_seed(Experiment& experiment, std::uint64_t seed);
void override_solver(Experiment& experiment, SolverKind kind);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

// Seeded stages. Each draws from its own substream of the experiment seed.
ScenarioBank tightening_bank(const Experiment& experiment, std::size_t threads = 1);
ScenarioBank simulation_bank(const Experiment& experiment, std::size_t threads = 1);
TighteningTable compute_tightening(const Experiment& experiment, std::size_t threads = 1);
std::vector<TrajectoryLog> run_simulation(const Experiment& experiment, const TighteningTable& table,
                                          std::size_t threads = 1);

struct ExperimentReport {
    ViolationReport violations;
    std::vector<NominalCheck> nominal;  // per run
    std::size_t nominal_state_violations = 0;
    std::size_t nominal_input_violations = 0;
    std::size_t nominal_state_active = 0;
    std::size_t nominal_input_active = 0;
    double max_witness_violation = 0.0;

    nlohmann::json summary(const Experiment& experiment) const;
};

ExperimentReport build_report(const Experiment& experiment, const TighteningTable& table,
                              const std::vector<TrajectoryLog>& logs);

// Artifact files under an output directory.
void write_model_files(const Experiment& experiment, const std::string& dir);
void write_logs(const std::vector<TrajectoryLog>& logs, const std::string& dir);
/// Reads every `run_<r>` log in `dir` in run order.
std::vector<TrajectoryLog> read_logs(const std::string& dir);
void write_report(const Experiment& experiment, const ExperimentReport& report, const std::string& dir);

}  // namespace dsmpc
