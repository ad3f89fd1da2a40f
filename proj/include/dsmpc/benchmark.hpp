#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include <json.hpp>

#include "dsmpc/disturbance.hpp"
#include "dsmpc/error_sim.hpp"
#include "dsmpc/mpc.hpp"
#include "dsmpc/network_model.hpp"

namespace dsmpc {

/// Server-room temperature network: scalar deviations from the set point,
/// couplings decaying with distance inside r_max.
struct BenchmarkSpec {
    std::size_t agents = 100;
    double r_max = 1.0;
    double target_degree = 22.4;
    std::uint64_t placement_seed = 1;
    double sampling_hours = 0.5;
    std::size_t horizon = 24;
    std::size_t task_steps = 96;
    double state_bound = 5.0;
    double input_bound = 1.0;
    double probability = 0.9;
    double tube_gain = -0.5;
    double state_weight = 1.0;
    double input_weight = 1000.0;
    std::size_t scenario_count = 100;
    std::size_t cost_samples = 10;
    double self_coupling = 1.01;
    double coupling_gain = 0.01;
    DisturbanceSpec disturbance = default_disturbance();

    std::size_t task_horizon() const { return horizon + task_steps; }
    static DisturbanceSpec default_disturbance();
};

struct Benchmark {
    NetworkModel model;
    ConstraintSet constraints;
    CostSpec cost;
    DisturbanceSpec disturbance;
    TubeController controller;
    MatrixXd positions;  // M x 2
    double side_length = 0.0;
    double mean_degree = 0.0;  // realized mean strict-neighbor count
};

/// Pr(|p - q| <= s) for independent uniform points in the unit square, s <= 1.
double unit_square_distance_cdf(double s);
/// Side length L with (M - 1) * Pr(dist <= r_max) = target, by bisection.
double calibrate_side_length(std::size_t agents, double r_max, double target_degree);

/// Throws InvalidArgument listing the rows that fail the Gersgorin test on the
/// closed-loop error map.
Benchmark build_datacenter_benchmark(const BenchmarkSpec& spec);

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& doc);
nlohmann::json benchmark_spec_to_json(const BenchmarkSpec& spec);

}  // namespace dsmpc
