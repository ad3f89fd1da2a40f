#include <doctest.h>

#include <cmath>

#include "dsmpc/disturbance.hpp"
#include "dsmpc/error_sim.hpp"
#include "dsmpc/errors.hpp"
#include "helpers.hpp"

using namespace dsmpc;

namespace {

NetworkModel scalar_chain(const std::vector<double>& diag, double coupling) {
    const std::size_t M = diag.size();
    std::vector<SubsystemModel> subs(M);
    for (std::size_t i = 0; i < M; ++i) {
        auto& s = subs[i];
        s.index = i;
        s.state_dim = s.input_dim = s.disturbance_dim = 1;
        s.B = s.G = MatrixXd::Identity(1, 1);
        if (i > 0 && coupling != 0.0) s.couplings.push_back({i - 1, MatrixXd::Constant(1, 1, coupling)});
        s.couplings.push_back({i, MatrixXd::Constant(1, 1, diag[i])});
        if (i + 1 < M && coupling != 0.0) s.couplings.push_back({i + 1, MatrixXd::Constant(1, 1, coupling)});
    }
    return NetworkModel(subs);
}

ScenarioBank bank_from(const std::vector<std::vector<double>>& w, std::size_t dim) {
    ScenarioBank bank(1, w.size() - 1, std::vector<std::size_t>(dim, 1));
    for (std::size_t t = 0; t < w.size(); ++t)
        for (std::size_t i = 0; i < dim; ++i) bank.at(0, t)(static_cast<Eigen::Index>(i)) = w[t][i];
    return bank;
}

DisturbanceSpec iid(double sigma) {
    DisturbanceSpec s;
    s.kind = DisturbanceKind::IidGaussian;
    s.covariance = MatrixXd::Constant(1, 1, sigma * sigma);
    return s;
}

}  // namespace

TEST_CASE("tube feedback is linear, then clamped") {
    const auto model = scalar_chain({1.01}, 0.0);
    auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    CHECK(tube_feedback(ctrl, 0, VectorXd::Zero(1))(0) == 0.0);
    CHECK(tube_feedback(ctrl, 0, VectorXd::Constant(1, 4.0))(0) == -2.0);
    TubeGain g = ctrl.gain(0);
    g.lower = VectorXd::Constant(1, -1.0);
    g.upper = VectorXd::Constant(1, 1.0);
    TubeController sat({g});
    CHECK(tube_feedback(sat, 0, VectorXd::Constant(1, 4.0))(0) == -1.0);
    CHECK(tube_feedback(sat, 0, VectorXd::Zero(1))(0) == 0.0);
    CHECK_THROWS_AS(tube_feedback(ctrl, 0, VectorXd::Zero(2)), DimensionMismatch);
}

TEST_CASE("controller gains must match the neighborhood layout") {
    const auto model = scalar_chain({1.0, 1.0}, 0.1);
    TubeGain g{MatrixXd::Zero(1, 1), {}, {}};
    CHECK_THROWS_AS(validate_controller(model, TubeController({g, g})), DimensionMismatch);
    TubeGain bad{MatrixXd::Zero(1, 2), VectorXd::Constant(1, 1.0), VectorXd::Constant(1, -1.0)};
    CHECK_THROWS(validate_controller(model, TubeController({bad, bad})));
}

TEST_CASE("unit pulse through a closed-loop coefficient of 0.51") {
    const auto model = scalar_chain({1.01}, 0.0);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto errors = simulate_error_bank(model, ctrl, bank_from({{1}, {0}, {0}, {0}}, 1));
    const double expected[] = {0.0, 1.0, 0.51, 0.2601};
    for (std::size_t t = 0; t < 4; ++t) CHECK(errors.error(0, t)(0) == doctest::Approx(expected[t]).epsilon(1e-15));
    CHECK(errors.feedback(0, 1)(0) == -0.5);
}

TEST_CASE("zero disturbances keep errors and feedbacks at zero") {
    std::mt19937_64 rng(2);
    const auto model = testing::random_network(rng, 4);
    std::vector<std::size_t> dims;
    for (const auto& s : model.subsystems()) dims.push_back(s.disturbance_dim);
    const ScenarioBank bank(3, 10, dims);
    const auto errors = simulate_error_bank(model, TubeController::scalar_heuristic(model, -0.5), bank);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t t = 0; t <= 10; ++t) {
            CHECK(errors.error(l, t).isZero(0.0));
            CHECK(errors.feedback(l, t).isZero(0.0));
        }
}

TEST_CASE("decoupled agents match their standalone simulations") {
    const auto pair = scalar_chain({0.9, 0.7}, 0.0);
    const auto ctrl = TubeController::scalar_heuristic(pair, -0.3);
    DisturbanceSpec s = iid(1.0);
    const auto bank = generate_bank(s, pair, 15, 4, 5);
    const auto joint = simulate_error_bank(pair, ctrl, bank);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto single = scalar_chain({i == 0 ? 0.9 : 0.7}, 0.0);
        ScenarioBank own(4, 15, {1});
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t t = 0; t <= 15; ++t) own.at(l, t)(0) = bank.at(l, t)(static_cast<Eigen::Index>(i));
        const auto alone = simulate_error_bank(single, TubeController::scalar_heuristic(single, -0.3), own);
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t t = 0; t <= 15; ++t) CHECK(joint.error(l, t)(static_cast<Eigen::Index>(i)) == alone.error(l, t)(0));
    }
}

TEST_CASE("agent trajectories can be recomputed from neighborhood data alone") {
    std::mt19937_64 rng(4);
    const auto model = testing::random_network(rng, 5, 2, 0.4);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.4);
    const auto bank = generate_bank(iid(0.5), model, 12, 3, 8);
    const auto errors = simulate_error_bank(model, ctrl, bank);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t t = 0; t < 12; ++t)
            for (std::size_t i = 0; i < model.size(); ++i) {
                const auto& s = model.subsystem(i);
                const VectorXd eN = model.gather_neighborhood(i, errors.error(l, t));
                const VectorXd next = model.neighborhood_matrix(i) * eN + s.B * tube_feedback(ctrl, i, eN) +
                                      s.G * bank.at(l, t).segment(model.disturbance_offset(i), s.disturbance_dim);
                CHECK((next - model.state_of(i, errors.error(l, t + 1))).norm() == 0.0);
            }
}

TEST_CASE("error bank does not depend on thread count") {
    std::mt19937_64 rng(6);
    const auto model = testing::random_network(rng, 4);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto bank = generate_bank(iid(1.0), model, 10, 40, 3);
    CHECK(simulate_error_bank(model, ctrl, bank, 1) == simulate_error_bank(model, ctrl, bank, 3));
}

TEST_CASE("error bank is rejected when the bank does not fit the model") {
    const auto model = scalar_chain({0.5, 0.5}, 0.0);
    ScenarioBank bank(2, 5, {1});
    CHECK_THROWS_AS(simulate_error_bank(model, TubeController::scalar_heuristic(model, -0.1), bank), DimensionMismatch);
}

TEST_CASE("analytic variance of a scalar loop is a geometric sum") {
    const auto model = scalar_chain({1.0}, 0.0);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto moments = propagate_error_covariance(model, ctrl, iid(1.0), 10);
    for (std::size_t t = 0; t <= 10; ++t)
        CHECK(moments.covariance[t](0, 0) == doctest::Approx((1.0 - std::pow(0.25, t)) / 0.75).epsilon(1e-12));
    CHECK(moments.covariance[2](0, 0) == doctest::Approx(1.25));
    const auto zero = propagate_error_covariance(model, ctrl, iid(0.0), 5);
    for (const auto& c : zero.covariance) CHECK(c.isZero(0.0));
}

TEST_CASE("analytic propagation rejects saturated tube controllers") {
    const auto model = scalar_chain({1.0}, 0.0);
    TubeGain g{MatrixXd::Constant(1, 1, -0.5), VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0)};
    CHECK_THROWS_AS(propagate_error_covariance(model, TubeController({g}), iid(1.0), 3), InvalidArgument);
}

TEST_CASE("Monte-Carlo error covariance matches the analytic recursion") {
    const auto model = scalar_chain({0.9, 1.0, 0.8}, 0.1);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    for (double rho : {0.0, 0.6}) {
        DisturbanceSpec s = iid(0.5);
        if (rho > 0.0) {
            s.kind = DisturbanceKind::Ar1Gaussian;
            s.rho = rho;
        }
        const std::size_t Ns = 100000;
        const auto errors = simulate_error_bank(model, ctrl, generate_bank(s, model, 8, Ns, 17));
        const auto moments = propagate_error_covariance(model, ctrl, s, 8);
        for (std::size_t t : {1u, 4u, 8u}) {
            MatrixXd emp = MatrixXd::Zero(3, 3);
            for (std::size_t l = 0; l < Ns; ++l) emp += errors.error(l, t) * errors.error(l, t).transpose();
            emp /= static_cast<double>(Ns);
            const MatrixXd& ref = moments.covariance[t];
            for (int a = 0; a < 3; ++a) CHECK(std::abs(emp(a, a) - ref(a, a)) <= 0.05 * ref(a, a));
            // Off-diagonal entries are small; compare them against the diagonal scale.
            CHECK((emp - ref).cwiseAbs().maxCoeff() <= 0.05 * ref.diagonal().maxCoeff());
        }
        CHECK(moments.local(model, 1, 4)(0, 0) == moments.covariance[4](1, 1));
        CHECK(moments.neighborhood(model, 1, 4) == moments.covariance[4]);
    }
}

TEST_CASE("controller JSON accepts a scalar heuristic with saturation") {
    const auto model = scalar_chain({1.0, 1.0}, 0.1);
    const auto c = controller_from_json(nlohmann::json::parse(R"({"scalar_gain": -0.5, "saturation": [-1, 1]})"), model);
    REQUIRE(c.size() == 2);
    CHECK(c.saturated());
    CHECK(c.gain(1).K.cols() == 2);
    CHECK(c.gain(1).K(0, 1) == -0.5);
    const auto back = controller_from_json(controller_to_json(c), model);
    CHECK(back.gain(0).K == c.gain(0).K);
    CHECK(back.gain(0).upper == c.gain(0).upper);
}
