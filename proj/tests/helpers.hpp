#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "dsmpc/disturbance.hpp"
#include "dsmpc/error_sim.hpp"
#include "dsmpc/mpc.hpp"
#include "dsmpc/tightening.hpp"
#include "dsmpc/network_model.hpp"
#include "dsmpc/qp.hpp"

namespace testing {

using dsmpc::MatrixXd;
using dsmpc::VectorXd;

inline MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

inline dsmpc::SparseMatrix sparse(const MatrixXd& m) { return m.sparseView(); }

/// Strictly convex QP with a known strictly feasible point.
inline dsmpc::QpProblem random_qp(std::mt19937_64& rng, int n, int me, int mi) {
    dsmpc::QpProblem qp;
    const MatrixXd L = random_matrix(rng, n, n);
    qp.H = sparse(L * L.transpose() + 0.1 * MatrixXd::Identity(n, n));
    qp.f = random_matrix(rng, n, 1, 3.0);
    const VectorXd x0 = random_matrix(rng, n, 1);
    const MatrixXd A = random_matrix(rng, me, n);
    const MatrixXd C = random_matrix(rng, mi, n);
    qp.A_eq = sparse(A);
    qp.b_eq = A * x0;
    qp.C = sparse(C);
    std::uniform_real_distribution<double> slack(0.0, 0.5);
    qp.d = C * x0;
    for (int k = 0; k < mi; ++k) qp.d(k) += slack(rng);
    return qp;
}

/// Exhaustive active-set enumeration; only for tiny problems.
inline bool brute_force_qp(const dsmpc::QpProblem& qp, VectorXd& best) {
    const MatrixXd H(qp.H), A(qp.A_eq), C(qp.C);
    const auto n = qp.f.size(), me = qp.b_eq.size(), mi = qp.d.size();
    double best_obj = std::numeric_limits<double>::infinity();
    bool found = false;
    for (long mask = 0; mask < (1L << mi); ++mask) {
        std::vector<Eigen::Index> act;
        for (Eigen::Index k = 0; k < mi; ++k)
            if (mask & (1L << k)) act.push_back(k);
        const auto m = me + static_cast<Eigen::Index>(act.size());
        if (m > n) continue;
        MatrixXd K = MatrixXd::Zero(n + m, n + m);
        VectorXd rhs(n + m);
        K.topLeftCorner(n, n) = H;
        rhs.head(n) = -qp.f;
        for (Eigen::Index r = 0; r < me; ++r) {
            K.block(n + r, 0, 1, n) = A.row(r);
            K.block(0, n + r, n, 1) = A.row(r).transpose();
            rhs(n + r) = qp.b_eq(r);
        }
        for (std::size_t q = 0; q < act.size(); ++q) {
            const auto r = me + static_cast<Eigen::Index>(q);
            K.block(n + r, 0, 1, n) = C.row(act[q]);
            K.block(0, n + r, n, 1) = C.row(act[q]).transpose();
            rhs(n + r) = qp.d(act[q]);
        }
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (lu.rank() < n + m) continue;
        const VectorXd sol = lu.solve(rhs);
        const VectorXd x = sol.head(n);
        bool ok = mi == 0 || (C * x - qp.d).maxCoeff() <= 1e-9;
        for (std::size_t q = 0; q < act.size(); ++q) ok = ok && sol(n + me + static_cast<Eigen::Index>(q)) >= -1e-9;
        if (!ok) continue;
        const double obj = qp.objective(x);
        if (obj < best_obj) {
            best_obj = obj;
            best = x;
            found = true;
        }
    }
    return found;
}

/// Random network with identity B and G and small off-diagonal couplings.
inline dsmpc::NetworkModel random_network(std::mt19937_64& rng, std::size_t M, std::size_t max_dim = 2,
                                          double edge_probability = 0.6) {
    std::uniform_int_distribution<std::size_t> dim(1, max_dim);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::size_t> n(M);
    for (auto& v : n) v = dim(rng);
    std::vector<dsmpc::SubsystemModel> subs(M);
    for (std::size_t i = 0; i < M; ++i) {
        auto& s = subs[i];
        s.index = i;
        s.state_dim = n[i];
        s.input_dim = n[i];
        s.disturbance_dim = n[i];
        s.B = MatrixXd::Identity(n[i], n[i]);
        s.G = MatrixXd::Identity(n[i], n[i]);
        s.couplings.push_back({i, random_matrix(rng, n[i], n[i], 0.3)});
        for (std::size_t j = 0; j < M; ++j)
            if (j != i && unit(rng) < edge_probability) s.couplings.push_back({j, random_matrix(rng, n[i], n[j], 0.05)});
    }
    return dsmpc::NetworkModel(subs);
}

/// Rejection-samples random networks until A + gain I passes the Gersgorin test.
inline dsmpc::NetworkModel stable_network(std::mt19937_64& rng, std::size_t M, std::size_t max_dim = 2, double gain = -0.5,
                                          double edge_probability = 0.6) {
    for (;;) {
        auto m = random_network(rng, M, max_dim, edge_probability);
        const MatrixXd closed = m.dense_A() + gain * MatrixXd::Identity(m.dense_A().rows(), m.dense_A().cols());
        if (dsmpc::gersgorin_stable(closed)) return m;
    }
}

/// Box constraints |x_i| <= xb and |u_i| <= ub componentwise at probability p.
inline dsmpc::ConstraintSet box_constraints(const dsmpc::NetworkModel& model, double xb, double ub, double p) {
    std::vector<dsmpc::HalfSpace> hs;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& s = model.subsystem(i);
        for (std::size_t r = 0; r < s.state_dim; ++r)
            for (double sign : {1.0, -1.0}) {
                VectorXd h = VectorXd::Zero(static_cast<Eigen::Index>(s.state_dim));
                h(static_cast<Eigen::Index>(r)) = sign / xb;
                hs.push_back({i, dsmpc::ConstraintKind::State, h, p});
            }
        for (std::size_t r = 0; r < s.input_dim; ++r)
            for (double sign : {1.0, -1.0}) {
                VectorXd h = VectorXd::Zero(static_cast<Eigen::Index>(s.input_dim));
                h(static_cast<Eigen::Index>(r)) = sign / ub;
                hs.push_back({i, dsmpc::ConstraintKind::Input, h, p});
            }
    }
    return dsmpc::ConstraintSet(hs);
}

/// K_i = gain * I on the own block, zero on neighbors.
inline dsmpc::TubeController diagonal_controller(const dsmpc::NetworkModel& model, double gain) {
    return dsmpc::TubeController::scalar_heuristic(model, gain);
}

inline dsmpc::DisturbanceSpec iid_gaussian(double sigma, double mean = 0.0) {
    dsmpc::DisturbanceSpec s;
    s.kind = dsmpc::DisturbanceKind::IidGaussian;
    s.mean = VectorXd::Constant(1, mean);
    s.covariance = MatrixXd::Constant(1, 1, sigma * sigma);
    return s;
}

/// Q = q I, R = r I, P = q I for every agent.
inline dsmpc::CostSpec scaled_cost(const dsmpc::NetworkModel& model, double q, double r, std::size_t samples) {
    dsmpc::CostSpec c;
    c.cost_samples = samples;
    for (const auto& s : model.subsystems()) {
        const auto n = static_cast<Eigen::Index>(s.state_dim), m = static_cast<Eigen::Index>(s.input_dim);
        c.weights.push_back({q * MatrixXd::Identity(n, n), r * MatrixXd::Identity(m, m), q * MatrixXd::Identity(n, n)});
    }
    return c;
}

/// Setup with an all-zero tightening table over `task_horizon`.
inline dsmpc::MpcSetup make_setup(const dsmpc::NetworkModel& model, const dsmpc::ConstraintSet& constraints,
                                  const dsmpc::DisturbanceSpec& disturbance, std::size_t horizon,
                                  std::size_t task_horizon, double gain = -0.5, double q = 1.0, double r = 1.0,
                                  std::size_t cost_samples = 5) {
    dsmpc::MpcSetup s;
    s.model = model;
    s.constraints = constraints;
    s.controller = dsmpc::TubeController::scalar_heuristic(model, gain);
    s.cost = scaled_cost(model, q, r, cost_samples);
    s.disturbance = disturbance;
    s.horizon = horizon;
    s.tightening = dsmpc::TighteningTable(constraints, task_horizon, 1e-3);
    return s;
}

/// Replaces the table with a scenario tightening from a fresh bank.
inline void tighten_setup(dsmpc::MpcSetup& setup, std::size_t samples, double beta, std::uint64_t seed) {
    const auto task = setup.tightening.task_horizon();
    const auto bank = dsmpc::generate_bank(setup.disturbance, setup.model, task, samples, seed);
    const auto errors = dsmpc::simulate_error_bank(setup.model, setup.controller, bank);
    setup.tightening = dsmpc::tighten_all(setup.model, setup.constraints, errors, beta);
}

}  // namespace testing
