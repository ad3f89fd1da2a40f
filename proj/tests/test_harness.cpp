#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dsmpc/errors.hpp"
#include "dsmpc/harness.hpp"
#include "helpers.hpp"

using namespace dsmpc;

namespace {

struct Instance {
    MpcSetup setup;
    std::size_t steps = 0;
};

Instance stable_instance(std::mt19937_64& rng, std::size_t M, double q, double r, double sigma) {
    const auto model = testing::stable_network(rng, M, 2, -0.5, 0.5);
    const std::size_t N = 6, Nbar = 24;
    Instance in{testing::make_setup(model, testing::box_constraints(model, 4.0, 2.0, 0.9), testing::iid_gaussian(sigma), N, Nbar,
                                    -0.5, q, r),
                Nbar - N};
    testing::tighten_setup(in.setup, 200, 1e-3, 3);
    return in;
}

NetworkModel scalar_agent() {
    SubsystemModel s;
    s.state_dim = s.input_dim = s.disturbance_dim = 1;
    s.B = s.G = MatrixXd::Identity(1, 1);
    s.couplings.push_back({0, MatrixXd::Constant(1, 1, 0.5)});
    return NetworkModel({s});
}

TrajectoryLog flat_log(std::size_t steps, double x, double u) {
    TrajectoryLog log;
    for (std::size_t t = 0; t < steps; ++t) {
        LogStep s;
        s.t = t;
        s.x = s.z = VectorXd::Constant(1, x);
        s.e = VectorXd::Zero(1);
        s.v = s.u = VectorXd::Constant(1, u);
        s.pi = s.w = s.z_next = VectorXd::Zero(1);
        log.steps.push_back(s);
    }
    log.x_final = VectorXd::Constant(1, x);
    return log;
}

const ViolationEntry& entry_at(const ViolationReport& rep, std::size_t q, std::size_t t) {
    for (const auto& e : rep.entries)
        if (e.q == q && e.t == t) return e;
    FAIL("missing entry");
    return rep.entries.front();
}

}  // namespace

TEST_CASE("zero disturbance from the origin stays at the origin") {
    std::mt19937_64 rng(1);
    auto in = stable_instance(rng, 4, 1.0, 1.0, 0.0);
    const auto model = in.setup.model;
    const std::vector<VectorXd> w(in.steps, VectorXd::Zero(static_cast<Eigen::Index>(model.total_disturbances())));
    const auto log = closed_loop_run(in.setup, VectorXd::Zero(model.total_states()), w, {});
    REQUIRE(log.steps.size() == in.steps);
    for (const auto& s : log.steps) {
        CHECK(s.x.cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(s.u.cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("same inputs give bit-identical logs") {
    std::mt19937_64 rng(2);
    auto in = stable_instance(rng, 3, 1.0, 2.0, 0.3);
    const auto bank = generate_bank(in.setup.disturbance, in.setup.model, in.setup.tightening.task_horizon(), 3, 9);
    RunOptions options;
    options.mpc.seed = 4;
    const VectorXd x0 = VectorXd::Constant(static_cast<Eigen::Index>(in.setup.model.total_states()), 0.2);
    const auto a = monte_carlo(in.setup, x0, bank, options, 1);
    const auto b = monte_carlo(in.setup, x0, bank, options, 2);
    REQUIRE(a.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(a[r] == b[r]);
    CHECK_FALSE(a[0] == a[1]);
}

TEST_CASE("logged errors match the standalone error simulation and identities hold") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 4; ++trial) {
        auto in = stable_instance(rng, 3, 0.5 + trial, 10.0 / (1 + trial), 0.3);
        const auto& model = in.setup.model;
        const auto bank = generate_bank(in.setup.disturbance, model, in.setup.tightening.task_horizon(), 1, 20 + trial);
        const VectorXd x0 = testing::random_matrix(rng, static_cast<Eigen::Index>(model.total_states()), 1, 0.3);
        const auto log = closed_loop_run(in.setup, x0, bank.trajectory(0), {});
        const auto errors = simulate_error_bank(model, in.setup.controller, bank);
        VectorXd z = x0;
        for (const auto& s : log.steps) {
            CHECK((s.e - errors.error(0, s.t)).cwiseAbs().maxCoeff() <= 1e-9);
            CHECK(s.e == s.x - s.z);
            CHECK(s.u == s.v + s.pi);
            CHECK((s.z + s.e - s.x).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, s.x.cwiseAbs().maxCoeff()));
            CHECK((s.z - z).cwiseAbs().maxCoeff() <= 1e-9);
            z = step_dynamics(model, z, s.v, VectorXd::Zero(static_cast<Eigen::Index>(model.total_disturbances())));
        }
    }
}

TEST_CASE("runs longer than the tightening table are rejected") {
    std::mt19937_64 rng(4);
    auto in = stable_instance(rng, 2, 1.0, 1.0, 0.1);
    const std::vector<VectorXd> w(in.steps + 1, VectorXd::Zero(static_cast<Eigen::Index>(in.setup.model.total_disturbances())));
    RunOptions options;
    options.steps = in.steps + 1;
    CHECK_THROWS_AS(closed_loop_run(in.setup, VectorXd::Zero(in.setup.model.total_states()), w, options), InvalidArgument);
}

TEST_CASE("violation counting over runs") {
    const auto model = scalar_agent();
    const auto constraints = testing::box_constraints(model, 1.0, 1.0, 0.9);
    std::vector<TrajectoryLog> logs(10, flat_log(8, 0.0, 0.0));
    for (std::size_t r = 0; r < 3; ++r) logs[r].steps[5].x(0) = 2.0;
    const auto rep = violation_report(logs, model, constraints);
    CHECK(entry_at(rep, 0, 5).frequency == 0.3);
    CHECK(entry_at(rep, 0, 5).violations == 3);
    CHECK(entry_at(rep, 1, 5).frequency == 0.0);
    CHECK(entry_at(rep, 0, 4).frequency == 0.0);
    CHECK(rep.max_frequency() == 0.3);
    CHECK(rep.max_frequency(ConstraintKind::Input) == 0.0);
    // States are counted at t = 0..T, inputs at t = 0..T-1.
    CHECK(rep.entries.size() == 2 * 9 + 2 * 8);
    CHECK(rep.aggregate[0] == doctest::Approx(3.0 / 90.0));

    const auto clean = violation_report(std::vector<TrajectoryLog>(4, flat_log(5, 0.5, -0.5)), model, constraints);
    CHECK(clean.max_frequency() == 0.0);
    CHECK_THROWS_AS(violation_report({}, model, constraints), InvalidArgument);
}

TEST_CASE("Wilson interval") {
    const auto [lo, hi] = wilson_interval(3, 10, 0.95);
    CHECK(lo == doctest::Approx(0.10779).epsilon(1e-4));
    CHECK(hi == doctest::Approx(0.60322).epsilon(1e-4));
    const auto [z0, z1] = wilson_interval(0, 50, 0.95);
    CHECK(z0 == 0.0);
    CHECK(z1 == doctest::Approx(0.071348).epsilon(1e-4));
}

TEST_CASE("nominal tightening check counts violated and active rows") {
    const auto model = scalar_agent();
    const auto constraints = testing::box_constraints(model, 1.0, 1.0, 0.9);
    TighteningTable table(constraints, 10, 1e-3);
    for (std::size_t q = 0; q < constraints.size(); ++q)
        for (std::size_t t = 0; t <= 10; ++t) table.entry(q, t).value = 0.2;
    auto log = flat_log(4, 0.0, 0.0);
    log.steps[1].z(0) = 0.8;   // exactly on 1 - c
    log.steps[2].z(0) = 0.9;   // above
    log.steps[3].v(0) = -0.85;  // above on the lower side
    const auto check = nominal_tightening_check(log, model, constraints, table, 1e-9);
    CHECK(check.state_violations == 1);
    CHECK(check.state_active == 2);
    CHECK(check.input_violations == 1);
    CHECK(check.input_active == 1);
    CHECK(check.worst_state_excess == doctest::Approx(0.1));
    CHECK(check.worst_input_excess == doctest::Approx(0.05));
}

TEST_CASE("log files round-trip bit-identically") {
    std::mt19937_64 rng(5);
    auto in = stable_instance(rng, 3, 1.0, 1.0, 0.4);
    const auto bank = generate_bank(in.setup.disturbance, in.setup.model, in.setup.tightening.task_horizon(), 1, 7);
    auto log = closed_loop_run(in.setup, VectorXd::Constant(static_cast<Eigen::Index>(in.setup.model.total_states()), 0.1),
                               bank.trajectory(0), {});
    log.metadata["note"] = "roundtrip";
    const auto prefix = (std::filesystem::temp_directory_path() / "dsmpc_log_roundtrip").string();
    save_log(log, prefix);
    const auto back = load_log(prefix);
    std::filesystem::remove(prefix + ".csv");
    std::filesystem::remove(prefix + ".json");
    CHECK(back == log);
    CHECK(back.metadata["note"] == "roundtrip");
}
