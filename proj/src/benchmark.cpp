#include "dsmpc/benchmark.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dsmpc/errors.hpp"

namespace dsmpc {

DisturbanceSpec BenchmarkSpec::default_disturbance() {
    DisturbanceSpec d;
    d.kind = DisturbanceKind::PeriodicMeanAr1;
    d.mean = VectorXd::Zero(1);
    d.amplitude = 0.4;
    d.period = 48.0;
    d.phase = 0.0;
    d.rho = 0.5;
    d.covariance = MatrixXd::Constant(1, 1, 0.1 * 0.1);
    return d;
}

double unit_square_distance_cdf(double s) {
    if (s <= 0.0) return 0.0;
    if (s > 1.0) throw InvalidArgument("distance CDF closed form only holds up to the side length");
    return std::numbers::pi * s * s - 8.0 / 3.0 * s * s * s + 0.5 * s * s * s * s;
}

double calibrate_side_length(std::size_t agents, double r_max, double target_degree) {
    if (!(r_max > 0.0)) throw InvalidArgument("r_max must be positive");
    if (agents < 2) return r_max;
    const double others = static_cast<double>(agents - 1);
    if (!(target_degree > 0.0) || target_degree >= others)
        throw InvalidArgument("target degree must lie in (0, M - 1)");
    // Expected degree falls monotonically in L; bracket s = r_max / L in (0, 1].
    double lo = 0.0, hi = 1.0;
    if (others * unit_square_distance_cdf(hi) < target_degree)
        throw InvalidArgument("target degree needs r_max beyond the side length");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (others * unit_square_distance_cdf(mid) < target_degree)
            lo = mid;
        else
            hi = mid;
    }
    return r_max / (0.5 * (lo + hi));
}

Benchmark build_datacenter_benchmark(const BenchmarkSpec& spec) {
    if (spec.agents < 1) throw InvalidArgument("benchmark needs at least one server");
    if (!(spec.state_bound > 0.0) || !(spec.input_bound > 0.0)) throw InvalidArgument("bounds must be positive");
    if (!(spec.probability > 0.0 && spec.probability <= 1.0)) throw InvalidArgument("probability must lie in (0, 1]");
    const std::size_t M = spec.agents;
    Benchmark b;
    b.side_length = calibrate_side_length(M, spec.r_max, spec.target_degree);

    std::mt19937_64 rng(derive_seed(spec.placement_seed, 5, 0));
    std::uniform_real_distribution<double> coord(0.0, b.side_length);
    b.positions.resize(static_cast<Eigen::Index>(M), 2);
    for (std::size_t i = 0; i < M; ++i) {
        b.positions(static_cast<Eigen::Index>(i), 0) = coord(rng);
        b.positions(static_cast<Eigen::Index>(i), 1) = coord(rng);
    }

    std::vector<SubsystemModel> subs(M);
    std::size_t edges = 0;
    for (std::size_t i = 0; i < M; ++i) {
        auto& s = subs[i];
        s.index = i;
        s.state_dim = s.input_dim = s.disturbance_dim = 1;
        s.B = MatrixXd::Identity(1, 1);
        s.G = MatrixXd::Identity(1, 1);
        for (std::size_t j = 0; j < M; ++j) {
            if (j == i) {
                s.couplings.push_back({i, MatrixXd::Constant(1, 1, spec.self_coupling)});
                continue;
            }
            const double r = (b.positions.row(static_cast<Eigen::Index>(i)) - b.positions.row(static_cast<Eigen::Index>(j))).norm();
            if (r <= spec.r_max) {
                s.couplings.push_back({j, MatrixXd::Constant(1, 1, spec.coupling_gain / (1.0 + r))});
                ++edges;
            }
        }
    }
    b.model = NetworkModel(std::move(subs));
    b.mean_degree = static_cast<double>(edges) / static_cast<double>(M);
    b.controller = TubeController::scalar_heuristic(b.model, spec.tube_gain);

    const auto rows = gersgorin_violations(b.controller.closed_loop(b.model));
    if (!rows.empty()) {
        std::string list;
        for (std::size_t k = 0; k < rows.size() && k < 10; ++k) list += (k ? ", " : "") + std::to_string(rows[k]);
        throw InvalidArgument("closed-loop error map fails the Gersgorin test in rows " + list);
    }

    std::vector<HalfSpace> hs;
    for (std::size_t i = 0; i < M; ++i) {
        hs.push_back({i, ConstraintKind::State, VectorXd::Constant(1, 1.0 / spec.state_bound), spec.probability});
        hs.push_back({i, ConstraintKind::State, VectorXd::Constant(1, -1.0 / spec.state_bound), spec.probability});
        hs.push_back({i, ConstraintKind::Input, VectorXd::Constant(1, 1.0 / spec.input_bound), spec.probability});
        hs.push_back({i, ConstraintKind::Input, VectorXd::Constant(1, -1.0 / spec.input_bound), spec.probability});
    }
    b.constraints = ConstraintSet(std::move(hs));

    const StageWeights w{MatrixXd::Constant(1, 1, spec.state_weight), MatrixXd::Constant(1, 1, spec.input_weight),
                         MatrixXd::Constant(1, 1, spec.state_weight)};
    b.cost.weights.assign(M, w);
    b.cost.cost_samples = spec.cost_samples;
    b.disturbance = spec.disturbance;
    validate_spec(b.disturbance, b.model.total_disturbances());
    return b;
}

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& doc) {
    BenchmarkSpec s;
    auto get = [&](const char* key, auto& field) {
        if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        get("agents", s.agents);
        get("r_max", s.r_max);
        get("target_degree", s.target_degree);
        get("placement_seed", s.placement_seed);
        get("sampling_hours", s.sampling_hours);
        get("horizon", s.horizon);
        get("task_steps", s.task_steps);
        get("state_bound", s.state_bound);
        get("input_bound", s.input_bound);
        get("probability", s.probability);
        get("tube_gain", s.tube_gain);
        get("state_weight", s.state_weight);
        get("input_weight", s.input_weight);
        get("scenario_count", s.scenario_count);
        get("cost_samples", s.cost_samples);
        get("self_coupling", s.self_coupling);
        get("coupling_gain", s.coupling_gain);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("benchmark: ") + e.what());
    }
    if (doc.contains("disturbance")) s.disturbance = disturbance_from_json(doc.at("disturbance"));
    return s;
}

nlohmann::json benchmark_spec_to_json(const BenchmarkSpec& s) {
    return {{"agents", s.agents},
            {"r_max", s.r_max},
            {"target_degree", s.target_degree},
            {"placement_seed", s.placement_seed},
            {"sampling_hours", s.sampling_hours},
            {"horizon", s.horizon},
            {"task_steps", s.task_steps},
            {"state_bound", s.state_bound},
            {"input_bound", s.input_bound},
            {"probability", s.probability},
            {"tube_gain", s.tube_gain},
            {"state_weight", s.state_weight},
            {"input_weight", s.input_weight},
            {"scenario_count", s.scenario_count},
            {"cost_samples", s.cost_samples},
            {"self_coupling", s.self_coupling},
            {"coupling_gain", s.coupling_gain},
            {"disturbance", disturbance_to_json(s.disturbance)}};
}

}  // namespace dsmpc
