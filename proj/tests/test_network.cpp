#include <doctest.h>

#include <algorithm>
#include <random>

#include "dsmpc/errors.hpp"
#include "dsmpc/network_model.hpp"
#include "helpers.hpp"

using namespace dsmpc;

namespace {

MatrixXd s1(double v) { return MatrixXd::Constant(1, 1, v); }

SubsystemModel scalar_subsystem(std::size_t i, std::vector<std::pair<std::size_t, double>> couplings) {
    SubsystemModel s;
    s.index = i;
    s.state_dim = s.input_dim = s.disturbance_dim = 1;
    s.B = s1(1.0);
    s.G = s1(1.0);
    for (auto [j, a] : couplings) s.couplings.push_back({j, s1(a)});
    return s;
}

// Two servers at distance r with the data-center coupling law.
NetworkModel two_servers(double r) {
    const double a = 0.01 / (1.0 + r);
    return NetworkModel({scalar_subsystem(0, {{0, 1.01}, {1, a}}), scalar_subsystem(1, {{0, a}, {1, 1.01}})});
}

}  // namespace

TEST_CASE("consistent scalar system validates cleanly") {
    NetworkModel m({scalar_subsystem(0, {{0, 1.0}})});
    CHECK(validate_network(m).empty());
}

TEST_CASE("coupling block with wrong column count is reported once") {
    auto a = scalar_subsystem(0, {{0, 1.0}});
    a.couplings.push_back({1, MatrixXd::Ones(1, 2)});
    NetworkModel m({a, scalar_subsystem(1, {{1, 1.0}})});
    const auto report = validate_network(m);
    REQUIRE(report.size() == 1);
    CHECK(report[0].subsystem == 0);
    CHECK_THROWS_AS(require_valid(m), InvalidArgument);
}

TEST_CASE("explicitly stored zero block is flagged as a spurious neighbor") {
    NetworkModel m({scalar_subsystem(0, {{0, 1.0}, {1, 0.0}}), scalar_subsystem(1, {{1, 1.0}})});
    const auto report = validate_network(m);
    REQUIRE(report.size() == 1);
    CHECK(report[0].message.find("spurious neighbor") != std::string::npos);
}

TEST_CASE("zero state, input and disturbance step to zero") {
    std::mt19937_64 rng(1);
    const auto m = testing::random_network(rng, 4);
    const VectorXd x = step_dynamics(m, VectorXd::Zero(m.total_states()), VectorXd::Zero(m.total_inputs()),
                                     VectorXd::Zero(m.total_disturbances()));
    CHECK(x.isZero(0.0));
}

TEST_CASE("data-center coupling of two servers") {
    const VectorXd x = VectorXd::Ones(2), zero = VectorXd::Zero(2);
    // 1.01 + 0.01 / (1 + 0) at r = 0; 1.015 corresponds to r = 1.
    CHECK(step_dynamics(two_servers(0.0), x, zero, zero)(0) == doctest::Approx(1.02).epsilon(1e-15));
    CHECK(step_dynamics(two_servers(1.0), x, zero, zero)(0) == doctest::Approx(1.015).epsilon(1e-15));
}

TEST_CASE("single agent A = 0.5, B = 1, G = 1, x = 2, u = 1, w = -0.5 gives 1.5") {
    NetworkModel m({scalar_subsystem(0, {{0, 0.5}})});
    const VectorXd x = step_dynamics(m, VectorXd::Constant(1, 2.0), VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -0.5));
    CHECK(x(0) == 1.5);
}

TEST_CASE("wrong vector lengths are rejected") {
    NetworkModel m({scalar_subsystem(0, {{0, 0.5}})});
    CHECK_THROWS_AS(step_dynamics(m, VectorXd::Zero(2), VectorXd::Zero(1), VectorXd::Zero(1)), DimensionMismatch);
    auto bad = scalar_subsystem(0, {{0, 0.5}});
    bad.couplings[0].block = MatrixXd::Ones(1, 2);
    NetworkModel mb({bad});
    try {
        step_dynamics(mb, VectorXd::Zero(1), VectorXd::Zero(1), VectorXd::Zero(1));
        FAIL("expected a dimension mismatch");
    } catch (const DimensionMismatch& e) {
        REQUIRE(e.subsystem().has_value());
        CHECK(*e.subsystem() == 0);
    }
}

TEST_CASE("block stepping equals the assembled dense model") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const auto m = testing::random_network(rng, 2 + trial % 6, 3);
        const VectorXd x = testing::random_matrix(rng, m.total_states(), 1);
        const VectorXd u = testing::random_matrix(rng, m.total_inputs(), 1);
        const VectorXd w = testing::random_matrix(rng, m.total_disturbances(), 1);
        const VectorXd dense = m.dense_A() * x + m.dense_B() * u + m.dense_G() * w;
        CHECK((step_dynamics(m, x, u, w) - dense).cwiseAbs().maxCoeff() <= 1e-12);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const VectorXd local = m.neighborhood_matrix(i) * m.gather_neighborhood(i, x);
            CHECK((local - (m.dense_A() * x).segment(m.state_offset(i), m.subsystem(i).state_dim)).norm() <= 1e-12);
        }
    }
}

TEST_CASE("stepping is superposition-consistent") {
    std::mt19937_64 rng(8);
    const auto m = testing::random_network(rng, 5, 2);
    auto rnd = [&](std::size_t n) { return VectorXd(testing::random_matrix(rng, n, 1)); };
    const VectorXd x1 = rnd(m.total_states()), x2 = rnd(m.total_states());
    const VectorXd u1 = rnd(m.total_inputs()), u2 = rnd(m.total_inputs());
    const VectorXd w1 = rnd(m.total_disturbances()), w2 = rnd(m.total_disturbances());
    const VectorXd zero_x = VectorXd::Zero(m.total_states());
    const VectorXd lhs = step_dynamics(m, x1 + x2, u1 + u2, w1 + w2);
    const VectorXd rhs = step_dynamics(m, x1, u1, w1) + step_dynamics(m, x2, u2, w2) -
                         step_dynamics(m, zero_x, VectorXd::Zero(m.total_inputs()), VectorXd::Zero(m.total_disturbances()));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("coupling insertion order does not change neighborhoods or stepping") {
    std::mt19937_64 rng(9);
    const auto m = testing::random_network(rng, 6, 2);
    auto subs = m.subsystems();
    for (auto& s : subs) std::shuffle(s.couplings.begin(), s.couplings.end(), rng);
    const NetworkModel shuffled(subs);
    const VectorXd x = testing::random_matrix(rng, m.total_states(), 1);
    const VectorXd u = testing::random_matrix(rng, m.total_inputs(), 1);
    const VectorXd w = testing::random_matrix(rng, m.total_disturbances(), 1);
    CHECK(step_dynamics(m, x, u, w) == step_dynamics(shuffled, x, u, w));
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(m.neighbors(i) == shuffled.neighbors(i));
        const auto nb = shuffled.neighbors(i);
        CHECK(std::is_sorted(nb.begin(), nb.end()));
        CHECK(m.neighborhood_matrix(i) == shuffled.neighborhood_matrix(i));
    }
}

TEST_CASE("strict neighbors exclude the subsystem itself") {
    const auto m = two_servers(0.5);
    CHECK(m.neighbors(0) == std::vector<std::size_t>{0, 1});
    CHECK(m.strict_neighbors(0) == std::vector<std::size_t>{1});
    CHECK(m.neighborhood_offset(1, 1) == 1);
}

TEST_CASE("Gersgorin row condition") {
    MatrixXd a(2, 2);
    a << 0.51, 0.01, 0.01, 0.51;
    CHECK(gersgorin_stable(a));
    CHECK_FALSE(gersgorin_stable(MatrixXd::Identity(3, 3)));
    CHECK(gersgorin_stable(MatrixXd::Zero(3, 3)));
    MatrixXd b(2, 2);
    b << 0.5, 0.6, 0.1, 0.1;
    CHECK(gersgorin_violations(b) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(gersgorin_stable(MatrixXd::Zero(2, 3)), InvalidArgument);
}

TEST_CASE("network JSON round-trips") {
    std::mt19937_64 rng(10);
    const auto m = testing::random_network(rng, 4, 3);
    const auto back = network_from_json(network_to_json(m));
    REQUIRE(back.size() == m.size());
    CHECK(back.dense_A() == m.dense_A());
    CHECK(back.dense_B() == m.dense_B());
    CHECK(back.dense_G() == m.dense_G());
}

TEST_CASE("constraint JSON accepts half-spaces and boxes and rejects origin-passing rows") {
    const auto m = two_servers(0.0);
    const auto set = constraints_from_json(nlohmann::json::parse(R"([
        {"owner": 0, "kind": "state", "h": [2.0], "b": 4.0, "p": 0.8},
        {"owner": 1, "kind": "input", "lower": -1, "upper": 2}
    ])"),
                                           m);
    REQUIRE(set.size() == 3);
    CHECK(set[0].direction(0) == 0.5);
    CHECK(set[0].probability == 0.8);
    CHECK(set[1].direction(0) == 0.5);
    CHECK(set[2].direction(0) == -1.0);
    CHECK(set.local_index(2) == 1);
    CHECK(set.find(ConstraintKind::Input, 1, 1) == 2);
    CHECK_THROWS_AS(constraints_from_json(nlohmann::json::parse(R"([{"owner": 0, "kind": "state", "h": [1], "b": 0}])"), m),
                    InvalidConfig);
    CHECK_THROWS_AS(constraints_from_json(nlohmann::json::parse(R"([{"owner": 0, "kind": "state", "h": [1], "p": 1.0}])"), m),
                    InvalidConfig);
    CHECK_THROWS_AS(constraints_from_json(nlohmann::json::parse(R"([{"owner": 5, "kind": "state", "h": [1]}])"), m),
                    InvalidConfig);
}
