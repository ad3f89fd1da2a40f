#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>

#include "dsmpc/errors.hpp"
#include "dsmpc/tightening.hpp"
#include "helpers.hpp"

using namespace dsmpc;

namespace {

// Step-by-step discarding: drop the current argmax (lowest index on
// ties) N_d times, then take the max of what is left.
double greedy_oracle(std::vector<double> proj, std::size_t discard) {
    std::vector<bool> gone(proj.size(), false);
    for (std::size_t k = 0; k < discard; ++k) {
        std::size_t best = proj.size();
        for (std::size_t l = 0; l < proj.size(); ++l)
            if (!gone[l] && (best == proj.size() || proj[l] > proj[best])) best = l;
        gone[best] = true;
    }
    double c = -INFINITY;
    for (std::size_t l = 0; l < proj.size(); ++l)
        if (!gone[l]) c = std::max(c, proj[l]);
    return c;
}

// Independent standard-normal quantile: bisection on 0.5 erfc(-x / sqrt 2).
double quantile_oracle(double p) {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double formula(double Ns, double p, double beta) {
    return (1.0 - p) * Ns - std::sqrt(2.0 * (1.0 - p) * Ns * std::log(1.0 / beta));
}

NetworkModel scalar_loop(double a) {
    SubsystemModel s;
    s.state_dim = s.input_dim = s.disturbance_dim = 1;
    s.B = s.G = MatrixXd::Identity(1, 1);
    s.couplings.push_back({0, MatrixXd::Constant(1, 1, a)});
    return NetworkModel({s});
}

DisturbanceSpec iid(double sigma) {
    DisturbanceSpec d;
    d.kind = DisturbanceKind::IidGaussian;
    d.covariance = MatrixXd::Constant(1, 1, sigma * sigma);
    return d;
}

}  // namespace

TEST_CASE("discard count examples") {
    CHECK(formula(100, 0.9, 0.01) == doctest::Approx(0.403).epsilon(1e-3));
    CHECK(discard_count(100, 0.9, 0.01) == 0);
    CHECK(formula(1000, 0.9, 1e-6) == doctest::Approx(47.44).epsilon(1e-3));
    CHECK(discard_count(1000, 0.9, 1e-6) == 47);
    CHECK(discard_count(1000, 1.0, 1e-6) == 0);
    CHECK(discard_count(10, 0.9, 0.5) == 0);
}

TEST_CASE("discard count agrees with the clamped floor formula") {
    for (std::size_t Ns : {1u, 7u, 50u, 100u, 333u, 1000u, 10000u})
        for (double p : {0.5, 0.8, 0.9, 0.95, 0.99})
            for (double beta : {0.5, 1e-2, 1e-6, 1e-9}) {
                const double raw = formula(static_cast<double>(Ns), p, beta);
                CHECK(discard_count(Ns, p, beta) == static_cast<std::size_t>(std::max(0.0, std::floor(raw))));
            }
}

TEST_CASE("discard count rejects out-of-range parameters") {
    CHECK_THROWS_AS(discard_count(0, 0.9, 0.1), InvalidArgument);
    CHECK_THROWS_AS(discard_count(10, 0.0, 0.1), InvalidArgument);
    CHECK_THROWS_AS(discard_count(10, 1.1, 0.1), InvalidArgument);
    CHECK_THROWS_AS(discard_count(10, 0.9, 1.0), InvalidArgument);
    CHECK_THROWS_AS(discard_count(10, 0.9, 0.0), InvalidArgument);
}

TEST_CASE("single half-space examples") {
    std::vector<double> ten(10);
    std::iota(ten.begin(), ten.end(), 1.0);
    CHECK(tighten_projections(ten, 0) == 10.0);
    CHECK(tighten_projections(ten, 2) == 8.0);
    CHECK(greedy_oracle(ten, 2) == 8.0);
    std::vector<VectorXd> zeros(5, VectorXd::Zero(2));
    CHECK(tighten_halfspace(VectorXd::Ones(2), zeros, 0.9, 0.01) == 0.0);
    CHECK_THROWS_AS(tighten_projections(ten, 10), InvalidArgument);
    CHECK_THROWS_AS(tighten_projections(std::vector<double>{}, 0), InvalidArgument);
}

TEST_CASE("sort-and-drop matches the greedy loop, including ties") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> coarse(-3, 3);
    std::normal_distribution<double> fine(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + trial % 40;
        std::vector<double> proj(n);
        for (auto& v : proj) v = trial % 2 ? coarse(rng) : fine(rng);
        const std::size_t discard = trial % static_cast<int>(n);
        CHECK(tighten_projections(proj, discard) == greedy_oracle(proj, discard));
    }
}

TEST_CASE("kept samples satisfy the returned tightening") {
    std::mt19937_64 rng(13);
    std::vector<VectorXd> samples;
    for (int l = 0; l < 500; ++l) samples.push_back(testing::random_matrix(rng, 3, 1));
    const VectorXd h = testing::random_matrix(rng, 3, 1);
    const double c = tighten_halfspace(h, samples, 0.9, 1e-3);
    const auto Nd = discard_count(500, 0.9, 1e-3);
    std::size_t above = 0;
    for (const auto& xi : samples) above += h.dot(xi) > c;
    CHECK(above == Nd);
}

TEST_CASE("tightening is monotone in the discard count and the probability") {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> proj(2000);
    for (auto& v : proj) v = n(rng);
    double prev = INFINITY;
    for (std::size_t d = 0; d < 300; d += 7) {
        const double c = tighten_projections(proj, d);
        CHECK(c <= prev);
        prev = c;
    }
    std::vector<VectorXd> samples;
    for (double v : proj) samples.push_back(VectorXd::Constant(1, v));
    prev = -INFINITY;
    for (double p : {0.6, 0.8, 0.9, 0.95, 0.99, 1.0}) {
        const double c = tighten_halfspace(VectorXd::Ones(1), samples, p, 1e-3);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("normal quantile agrees with an erfc bisection") {
    for (double p : {0.001, 0.05, 0.3, 0.5, 0.75, 0.9, 0.975, 0.999999})
        CHECK(normal_quantile(p) == doctest::Approx(quantile_oracle(p)).epsilon(1e-10));
    CHECK(normal_quantile(0.9) == doctest::Approx(1.2816).epsilon(1e-4));
}

TEST_CASE("analytic tightening examples") {
    CHECK(analytic_tightening(VectorXd::Ones(2), MatrixXd::Zero(2, 2), 0.9) == 0.0);
    CHECK(analytic_tightening(VectorXd::Ones(1), MatrixXd::Identity(1, 1), 0.9) ==
          doctest::Approx(quantile_oracle(0.9)).epsilon(1e-10));
    MatrixXd S(2, 2);
    S << 2.0, 0.3, 0.3, 1.0;
    CHECK(analytic_tightening(Eigen::Vector2d(0.4, -1.0), S, 0.5) == doctest::Approx(0.0));
    S(0, 1) = 5.0;
    S(1, 0) = 5.0;
    CHECK_THROWS_AS(analytic_tightening(Eigen::Vector2d(1.0, 1.0), S, 0.9), InvalidArgument);
}

TEST_CASE("table entries equal direct single half-space calls") {
    std::mt19937_64 rng(15);
    const auto model = testing::random_network(rng, 3, 2);
    const auto cons = testing::box_constraints(model, 2.0, 1.0, 0.85);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto bank = generate_bank(iid(0.4), model, 6, 300, 2);
    const auto errors = simulate_error_bank(model, ctrl, bank);
    const double beta = 1e-2;
    const auto table = tighten_all(model, cons, errors, beta);
    for (std::size_t q = 0; q < cons.size(); ++q) {
        const auto& h = cons[q];
        const bool state = h.kind == ConstraintKind::State;
        for (std::size_t t = 0; t <= 6; ++t) {
            std::vector<VectorXd> slice;
            for (std::size_t l = 0; l < 300; ++l) {
                const VectorXd full = state ? VectorXd(errors.error(l, t)) : VectorXd(errors.feedback(l, t));
                const auto off = state ? model.state_offset(h.owner) : model.input_offset(h.owner);
                slice.push_back(full.segment(off, h.direction.size()));
            }
            CHECK(table.value(q, t) == tighten_halfspace(h.direction, slice, h.probability, beta));
            CHECK(table.entry(q, t).discarded == discard_count(300, h.probability, beta));
            if (t == 0) CHECK(table.value(q, t) == 0.0);
        }
    }
}

TEST_CASE("table is invariant to sample order and thread count") {
    std::mt19937_64 rng(16);
    const auto model = testing::random_network(rng, 3, 1);
    const auto cons = testing::box_constraints(model, 1.0, 1.0, 0.9);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto bank = generate_bank(iid(1.0), model, 5, 200, 4);
    std::vector<std::size_t> perm(200);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ScenarioBank shuffled(200, 5, bank.subsystem_dims());
    for (std::size_t l = 0; l < 200; ++l)
        for (std::size_t t = 0; t <= 5; ++t) shuffled.at(l, t) = bank.at(perm[l], t);
    const auto a = tighten_all(model, cons, simulate_error_bank(model, ctrl, bank), 1e-3);
    const auto b = tighten_all(model, cons, simulate_error_bank(model, ctrl, shuffled), 1e-3, 3);
    CHECK(a == b);
}

TEST_CASE("scenario tightening approaches the Gaussian quantile") {
    const auto model = scalar_loop(1.0);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const ConstraintSet cons({{0, ConstraintKind::State, VectorXd::Ones(1), 0.9},
                              {0, ConstraintKind::Input, VectorXd::Ones(1), 0.9}});
    const auto errors = simulate_error_bank(model, ctrl, generate_bank(iid(1.0), model, 6, 10000, 5));
    const auto scen = tighten_all(model, cons, errors, 1e-6);
    const auto anal = tighten_analytic(model, cons, ctrl, propagate_error_covariance(model, ctrl, iid(1.0), 6));
    for (std::size_t q = 0; q < 2; ++q)
        for (std::size_t t = 2; t <= 6; ++t)
            CHECK(std::abs(scen.value(q, t) - anal.value(q, t)) <= 0.1 * std::max(anal.value(q, t), 0.1));
    CHECK(anal.value(0, 2) == doctest::Approx(quantile_oracle(0.9) * std::sqrt(1.25)).epsilon(1e-10));
    CHECK(anal.value(1, 2) == doctest::Approx(quantile_oracle(0.9) * 0.5 * std::sqrt(1.25)).epsilon(1e-10));
}

TEST_CASE("tightening CSV round-trips and refuses incomplete tables") {
    std::mt19937_64 rng(17);
    const auto model = testing::random_network(rng, 2, 2);
    const auto cons = testing::box_constraints(model, 1.0, 1.0, 0.9);
    const auto ctrl = TubeController::scalar_heuristic(model, -0.5);
    const auto table = tighten_all(model, cons, simulate_error_bank(model, ctrl, generate_bank(iid(1.0), model, 4, 50, 6)), 0.05);
    const auto path = (std::filesystem::temp_directory_path() / "dsmpc_table.csv").string();
    save_tightening(table, path);
    CHECK(load_tightening(path, cons) == table);
    auto more = cons.all();
    more.push_back({0, ConstraintKind::State, VectorXd::Constant(static_cast<Eigen::Index>(model.subsystem(0).state_dim), 0.3), 0.9});
    CHECK_THROWS_AS(load_tightening(path, ConstraintSet(more)), IoError);
    std::remove(path.c_str());
}
