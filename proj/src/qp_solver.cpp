#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "dsmpc/errors.hpp"
#include "dsmpc/qp.hpp"

namespace dsmpc {

using Eigen::VectorXd;
using RowMajorMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

const char* to_string(VariableKind kind) { return kind == VariableKind::NominalState ? "z" : "v"; }

const char* to_string(RowKind kind) {
    switch (kind) {
        case RowKind::Initial: return "initial";
        case RowKind::Dynamics: return "dynamics";
        case RowKind::Terminal: return "terminal";
        case RowKind::StateBound: return "state";
        case RowKind::InputBound: return "input";
    }
    return "?";
}

const char* to_string(SolveStatus status) {
    switch (status) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::MaxIterations: return "max-iterations";
    }
    return "?";
}

double QpProblem::objective(const VectorXd& x) const { return 0.5 * x.dot(H * x) + f.dot(x) + constant; }

void QpProblem::check_dimensions() const {
    const auto n = f.size();
    auto fail = [](const std::string& what) { throw DimensionMismatch("QP: " + what); };
    if (H.rows() != n || H.cols() != n) fail("H does not match the variable count");
    if (A_eq.cols() != n && A_eq.rows() > 0) fail("A_eq has wrong column count");
    if (A_eq.rows() != b_eq.size()) fail("A_eq and b_eq disagree");
    if (C.cols() != n && C.rows() > 0) fail("C has wrong column count");
    if (C.rows() != d.size()) fail("C and d disagree");
}

namespace {

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

SparseMatrix safe_cols(const SparseMatrix& m, Eigen::Index cols) {
    if (m.cols() == cols) return m;
    SparseMatrix out(m.rows(), cols);
    return out;
}

struct IpmResult {
    SolveStatus status = SolveStatus::MaxIterations;
    VectorXd x, y, lambda;
    std::size_t iterations = 0;
    std::vector<double> primal, dual;
};

// Interior point on min 1/2 x'Hx + f'x s.t. Ax = b, Cx <= d.
class InteriorPoint {
public:
    InteriorPoint(const SparseMatrix& H, const VectorXd& f, const SparseMatrix& A, const VectorXd& b,
                  const SparseMatrix& C, const VectorXd& d, const SolverOptions& opt)
        : H_(H), f_(f), A_(A), b_(b), C_(C), d_(d), opt_(opt) {
        n_ = f.size();
        me_ = b.size();
        mi_ = d.size();
    }

    IpmResult run() {
        IpmResult res;
        if (n_ == 0) {
            res.x = VectorXd::Zero(0);
            res.y = VectorXd::Zero(me_);
            res.lambda = VectorXd::Zero(mi_);
            const bool ok = inf_norm(b_) <= opt_.feasibility_tolerance && (mi_ == 0 || d_.minCoeff() >= -opt_.feasibility_tolerance);
            res.status = ok ? SolveStatus::Optimal : SolveStatus::Infeasible;
            return res;
        }
        build_pattern();

        VectorXd x, y;
        // Start from the minimizer of 1/2 x'Hx + f'x + 1/2 |Cx - d|^2 on Ax = b.
        {
            if (!factor(VectorXd::Ones(mi_))) return failed(res);
            VectorXd rhs(n_ + me_ + mi_);
            rhs << -f_, b_, d_;
            const VectorXd sol = solve(rhs);
            x = sol.head(n_);
            y = sol.segment(n_, me_);
        }
        VectorXd s = d_ - C_ * x;
        for (Eigen::Index k = 0; k < mi_; ++k) s(k) = std::max(s(k), 1.0);
        VectorXd lam = VectorXd::Ones(mi_);

        const double tol_e = opt_.tolerance * (1.0 + inf_norm(b_));
        const double tol_i = opt_.tolerance * (1.0 + inf_norm(d_));
        const double tol_d = opt_.tolerance * (1.0 + inf_norm(f_));
        int stalls = 0;

        for (std::size_t it = 0; it < opt_.max_iterations; ++it) {
            res.iterations = it;
            const VectorXd rd = H_ * x + f_ + A_.transpose() * y + C_.transpose() * lam;
            const VectorXd re = A_ * x - b_;
            const VectorXd ri = C_ * x + s - d_;
            const double mu = mi_ > 0 ? s.dot(lam) / static_cast<double>(mi_) : 0.0;
            const double pres = std::max(inf_norm(re), inf_norm(ri));
            res.primal.push_back(pres);
            res.dual.push_back(inf_norm(rd));
            if (inf_norm(re) <= tol_e && inf_norm(ri) <= tol_i && inf_norm(rd) <= tol_d && mu <= opt_.tolerance) {
                res.status = SolveStatus::Optimal;
                res.x = x;
                res.y = y;
                res.lambda = lam;
                return res;
            }
            if (inf_norm(x) > 1e12) {
                res.status = SolveStatus::Unbounded;
                res.x = x;
                return res;
            }
            if (farkas_certificate(y, lam)) {
                res.status = SolveStatus::Infeasible;
                res.x = x;
                res.y = y;
                res.lambda = lam;
                return res;
            }

            if (!factor(s.cwiseQuotient(lam))) return failed(res);

            // Predictor.
            VectorXd rc = s.cwiseProduct(lam);
            VectorXd dx, dy, dlam, ds;
            direction(s, lam, rd, re, ri, rc, dx, dy, dlam, ds);
            double alpha = mi_ > 0 ? max_step(s, ds, lam, dlam) : 1.0;
            if (mi_ > 0) {
                const double mu_aff = (s + alpha * ds).dot(lam + alpha * dlam) / static_cast<double>(mi_);
                const double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
                // Corrector with second-order term.
                rc = s.cwiseProduct(lam) + ds.cwiseProduct(dlam) - VectorXd::Constant(mi_, sigma * mu);
                direction(s, lam, rd, re, ri, rc, dx, dy, dlam, ds);
                alpha = std::min(1.0, 0.99 * max_step(s, ds, lam, dlam));
            }
            x += alpha * dx;
            y += alpha * dy;
            if (mi_ > 0) {
                s += alpha * ds;
                lam += alpha * dlam;
                s = s.cwiseMax(1e-300);
                lam = lam.cwiseMax(1e-300);
            }
            stalls = alpha < 1e-10 ? stalls + 1 : 0;
            if (stalls > 5) break;
        }
        res.status = SolveStatus::MaxIterations;
        res.x = x;
        res.y = y;
        res.lambda = lam;
        return res;
    }

private:
    IpmResult failed(IpmResult& res) {
        res.status = SolveStatus::MaxIterations;
        res.x = VectorXd::Zero(n_);
        res.y = VectorXd::Zero(me_);
        res.lambda = VectorXd::Zero(mi_);
        return res;
    }

    bool farkas_certificate(const VectorXd& y, const VectorXd& lam) const {
        const double scale = std::max(inf_norm(y), inf_norm(lam));
        if (scale < 1e8) return false;
        const VectorXd yh = y / scale;
        const VectorXd lh = lam / scale;
        const double ray = inf_norm(A_.transpose() * yh + C_.transpose() * lh);
        const double gap = b_.dot(yh) + d_.dot(lh);
        return ray <= 1e-6 && gap < -1e-8;
    }

    static double max_step(const VectorXd& s, const VectorXd& ds, const VectorXd& lam, const VectorXd& dlam) {
        double a = 1.0;
        for (Eigen::Index k = 0; k < s.size(); ++k) {
            if (ds(k) < 0) a = std::min(a, -s(k) / ds(k));
            if (dlam(k) < 0) a = std::min(a, -lam(k) / dlam(k));
        }
        return a;
    }

    // Fixed sparsity pattern of the lower triangle of the augmented KKT matrix
    // [H, A', C'; A, 0, 0; C, 0, -S/Lambda].
    void build_pattern() {
        std::vector<Triplet> trip;
        for (Eigen::Index c = 0; c < H_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(H_, c); it; ++it)
                if (it.row() >= it.col()) trip.emplace_back(it.row(), it.col(), 0.0);
        for (Eigen::Index k = 0; k < n_ + me_ + mi_; ++k) trip.emplace_back(k, k, 0.0);
        for (Eigen::Index c = 0; c < A_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(A_, c); it; ++it) trip.emplace_back(n_ + it.row(), it.col(), 0.0);
        for (Eigen::Index c = 0; c < C_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(C_, c); it; ++it) trip.emplace_back(n_ + me_ + it.row(), it.col(), 0.0);
        kkt_.resize(n_ + me_ + mi_, n_ + me_ + mi_);
        kkt_.setFromTriplets(trip.begin(), trip.end());
        kkt_.makeCompressed();
        ldlt_.analyzePattern(kkt_);
    }

    void fill(const VectorXd& ratio, double reg) {
        std::fill(kkt_.valuePtr(), kkt_.valuePtr() + kkt_.nonZeros(), 0.0);
        for (Eigen::Index c = 0; c < H_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(H_, c); it; ++it)
                if (it.row() >= it.col()) kkt_.coeffRef(it.row(), it.col()) += it.value();
        for (Eigen::Index k = 0; k < n_; ++k) kkt_.coeffRef(k, k) += reg;
        for (Eigen::Index k = 0; k < me_; ++k) kkt_.coeffRef(n_ + k, n_ + k) -= reg;
        for (Eigen::Index k = 0; k < mi_; ++k) kkt_.coeffRef(n_ + me_ + k, n_ + me_ + k) -= ratio(k) + reg;
        for (Eigen::Index c = 0; c < A_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(A_, c); it; ++it) kkt_.coeffRef(n_ + it.row(), it.col()) += it.value();
        for (Eigen::Index c = 0; c < C_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(C_, c); it; ++it) kkt_.coeffRef(n_ + me_ + it.row(), it.col()) += it.value();
    }

    // ratio = s / lambda.
    bool factor(const VectorXd& ratio) {
        ratio_ = ratio;
        double reg = opt_.regularization;
        for (int attempt = 0; attempt < 8; ++attempt, reg *= 100.0) {
            fill(ratio, reg);
            ldlt_.factorize(kkt_);
            if (ldlt_.info() == Eigen::Success) return true;
        }
        return false;
    }

    // Unregularized augmented KKT product.
    VectorXd apply(const VectorXd& v) const {
        const auto x = v.head(n_);
        const auto y = v.segment(n_, me_);
        const auto l = v.tail(mi_);
        VectorXd out(n_ + me_ + mi_);
        out.head(n_) = H_ * x + A_.transpose() * y + C_.transpose() * l;
        out.segment(n_, me_) = A_ * x;
        out.tail(mi_) = C_ * x - ratio_.cwiseProduct(l);
        return out;
    }

    VectorXd solve(const VectorXd& rhs) {
        VectorXd sol = ldlt_.solve(rhs);
        for (int refine = 0; refine < 5; ++refine) {
            const VectorXd res = rhs - apply(sol);
            if (inf_norm(res) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
            sol += ldlt_.solve(res);
        }
        return sol;
    }

    void direction(const VectorXd& s, const VectorXd& lam, const VectorXd& rd, const VectorXd& re, const VectorXd& ri,
                   const VectorXd& rc, VectorXd& dx, VectorXd& dy, VectorXd& dlam, VectorXd& ds) {
        VectorXd rhs(n_ + me_ + mi_);
        rhs.head(n_) = -rd;
        rhs.segment(n_, me_) = -re;
        if (mi_ > 0) rhs.tail(mi_) = -ri + rc.cwiseQuotient(lam);
        const VectorXd sol = solve(rhs);
        dx = sol.head(n_);
        dy = sol.segment(n_, me_);
        dlam = sol.tail(mi_);
        if (mi_ > 0)
            ds = -(rc + s.cwiseProduct(dlam)).cwiseQuotient(lam);
        else
            ds.resize(0);
    }

    const SparseMatrix& H_;
    const VectorXd& f_;
    const SparseMatrix& A_;
    const VectorXd& b_;
    const SparseMatrix& C_;
    const VectorXd& d_;
    SolverOptions opt_;
    Eigen::Index n_ = 0, me_ = 0, mi_ = 0;
    SparseMatrix kkt_;
    VectorXd ratio_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// Minimum total violation of Ax = b, Cx <= d via an elastic program.
double phase_one(const SparseMatrix& A, const VectorXd& b, const SparseMatrix& C, const VectorXd& d,
                 const SolverOptions& opt, std::vector<std::size_t>& violated) {
    const auto n = A.cols() > 0 ? A.cols() : C.cols();
    const auto me = b.size();
    const auto mi = d.size();
    const auto N = n + 2 * me + mi;
    std::vector<Triplet> trip;
    for (Eigen::Index k = 0; k < N; ++k) trip.emplace_back(k, k, 1e-8);
    SparseMatrix H(N, N);
    H.setFromTriplets(trip.begin(), trip.end());
    VectorXd f = VectorXd::Zero(N);
    f.tail(2 * me + mi).setOnes();
    trip.clear();
    for (Eigen::Index c = 0; c < A.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(A, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index r = 0; r < me; ++r) {
        trip.emplace_back(r, n + r, -1.0);
        trip.emplace_back(r, n + me + r, 1.0);
    }
    SparseMatrix Ae(me, N);
    Ae.setFromTriplets(trip.begin(), trip.end());
    trip.clear();
    for (Eigen::Index c = 0; c < C.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(C, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index r = 0; r < mi; ++r) trip.emplace_back(r, n + 2 * me + r, -1.0);
    for (Eigen::Index k = 0; k < 2 * me + mi; ++k) trip.emplace_back(mi + k, n + k, -1.0);
    SparseMatrix Ci(mi + 2 * me + mi, N);
    Ci.setFromTriplets(trip.begin(), trip.end());
    VectorXd di = VectorXd::Zero(mi + 2 * me + mi);
    di.head(mi) = d;
    SolverOptions o = opt;
    o.tolerance = std::max(opt.tolerance, 1e-10);
    auto res = InteriorPoint(H, f, Ae, b, Ci, di, o).run();
    if (res.x.size() != N) return std::numeric_limits<double>::infinity();
    const double tol = opt.feasibility_tolerance;
    for (Eigen::Index r = 0; r < me; ++r)
        if (res.x(n + r) + res.x(n + me + r) > tol) violated.push_back(static_cast<std::size_t>(r));
    for (Eigen::Index r = 0; r < mi; ++r)
        if (res.x(n + 2 * me + r) > tol) violated.push_back(static_cast<std::size_t>(me + r));
    return res.x.tail(2 * me + mi).sum();
}

}  // namespace

SolveReport solve_centralized(const QpProblem& qp, const SolverOptions& options) {
    qp.check_dimensions();
    const Eigen::Index n = qp.f.size();
    const Eigen::Index me = qp.b_eq.size();
    const Eigen::Index mi = qp.d.size();
    const SparseMatrix A = safe_cols(qp.A_eq, n);
    const SparseMatrix C = safe_cols(qp.C, n);
    const RowMajorMatrix Arow(A);
    const RowMajorMatrix Crow(C);

    SolveReport report;

    // Presolve: fix variables determined by singleton equality rows.
    std::vector<int> unfixed_count(me, 0);
    std::vector<char> fixed(n, 0);
    VectorXd value = VectorXd::Zero(n);
    for (Eigen::Index r = 0; r < me; ++r)
        for (RowMajorMatrix::InnerIterator it(Arow, r); it; ++it)
            if (it.value() != 0.0) ++unfixed_count[r];
    std::vector<std::pair<Eigen::Index, Eigen::Index>> fixings;  // (variable, row) in fixing order
    std::vector<char> row_used(me, 0);
    std::deque<Eigen::Index> queue;
    for (Eigen::Index r = 0; r < me; ++r)
        if (unfixed_count[r] == 1) queue.push_back(r);
    while (!queue.empty()) {
        const auto r = queue.front();
        queue.pop_front();
        if (row_used[r] || unfixed_count[r] != 1) continue;
        Eigen::Index var = -1;
        double coef = 0.0, rest = 0.0;
        for (RowMajorMatrix::InnerIterator it(Arow, r); it; ++it) {
            if (it.value() == 0.0) continue;
            if (fixed[it.col()])
                rest += it.value() * value(it.col());
            else {
                var = it.col();
                coef = it.value();
            }
        }
        row_used[r] = 1;
        fixed[var] = 1;
        value(var) = (qp.b_eq(r) - rest) / coef;
        fixings.emplace_back(var, r);
        for (SparseMatrix::InnerIterator it(A, var); it; ++it)
            if (it.value() != 0.0 && --unfixed_count[it.row()] == 1) queue.push_back(it.row());
    }

    auto row_slack = [&](const RowMajorMatrix& M, Eigen::Index r, double rhs) {
        double acc = 0.0;
        for (RowMajorMatrix::InnerIterator it(M, r); it; ++it) acc += it.value() * value(it.col());
        return rhs - acc;
    };
    const double ftol = options.feasibility_tolerance;
    std::vector<Eigen::Index> kept_eq, kept_in;
    for (Eigen::Index r = 0; r < me; ++r) {
        if (row_used[r]) continue;
        if (unfixed_count[r] == 0) {
            if (std::abs(row_slack(Arow, r, qp.b_eq(r))) > ftol * (1.0 + std::abs(qp.b_eq(r))))
                report.violated_rows.push_back(static_cast<std::size_t>(r));
            continue;
        }
        kept_eq.push_back(r);
    }
    for (Eigen::Index r = 0; r < mi; ++r) {
        bool any = false;
        for (RowMajorMatrix::InnerIterator it(Crow, r); it; ++it)
            if (it.value() != 0.0 && !fixed[it.col()]) any = true;
        if (!any) {
            if (row_slack(Crow, r, qp.d(r)) < -ftol * (1.0 + std::abs(qp.d(r))))
                report.violated_rows.push_back(static_cast<std::size_t>(me + r));
            continue;
        }
        kept_in.push_back(r);
    }
    if (!report.violated_rows.empty()) {
        report.status = SolveStatus::Infeasible;
        report.x = value;
        report.primal_infeasibility = inf_norm(VectorXd::Zero(0));
        for (auto r : report.violated_rows) {
            const double v = r < static_cast<std::size_t>(me)
                                 ? std::abs(row_slack(Arow, static_cast<Eigen::Index>(r), qp.b_eq(r)))
                                 : -row_slack(Crow, static_cast<Eigen::Index>(r - me), qp.d(r - me));
            report.primal_infeasibility = std::max(report.primal_infeasibility, v);
        }
        return report;
    }

    std::vector<Eigen::Index> free_of(n, -1), free_vars;
    for (Eigen::Index k = 0; k < n; ++k)
        if (!fixed[k]) {
            free_of[k] = static_cast<Eigen::Index>(free_vars.size());
            free_vars.push_back(k);
        }
    const Eigen::Index nf = static_cast<Eigen::Index>(free_vars.size());

    std::vector<Triplet> trip;
    VectorXd fr(nf);
    for (Eigen::Index k = 0; k < nf; ++k) fr(k) = qp.f(free_vars[k]);
    for (Eigen::Index c = 0; c < qp.H.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(qp.H, c); it; ++it) {
            const auto rf = free_of[it.row()];
            const auto cf = free_of[it.col()];
            if (rf >= 0 && cf >= 0)
                trip.emplace_back(rf, cf, it.value());
            else if (rf >= 0)
                fr(rf) += it.value() * value(it.col());
        }
    SparseMatrix Hr(nf, nf);
    Hr.setFromTriplets(trip.begin(), trip.end());

    auto reduce_rows = [&](const RowMajorMatrix& M, const VectorXd& rhs, const std::vector<Eigen::Index>& rows,
                           SparseMatrix& out, VectorXd& out_rhs) {
        trip.clear();
        out_rhs.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            double r = rhs(rows[k]);
            for (RowMajorMatrix::InnerIterator it(M, rows[k]); it; ++it) {
                if (free_of[it.col()] >= 0)
                    trip.emplace_back(static_cast<Eigen::Index>(k), free_of[it.col()], it.value());
                else
                    r -= it.value() * value(it.col());
            }
            out_rhs(static_cast<Eigen::Index>(k)) = r;
        }
        out.resize(static_cast<Eigen::Index>(rows.size()), nf);
        out.setFromTriplets(trip.begin(), trip.end());
    };
    SparseMatrix Ar, Cr;
    VectorXd br, dr;
    reduce_rows(Arow, qp.b_eq, kept_eq, Ar, br);
    reduce_rows(Crow, qp.d, kept_in, Cr, dr);

    auto ipm = InteriorPoint(Hr, fr, Ar, br, Cr, dr, options).run();
    report.iterations = ipm.iterations;
    report.primal_residuals = ipm.primal;
    report.dual_residuals = ipm.dual;
    report.status = ipm.status;

    if (ipm.status == SolveStatus::MaxIterations || ipm.status == SolveStatus::Infeasible) {
        std::vector<std::size_t> bad;
        const double violation = phase_one(Ar, br, Cr, dr, options, bad);
        const double scale = 1.0 + std::max(inf_norm(br), inf_norm(dr));
        if (violation > ftol * scale) {
            report.status = SolveStatus::Infeasible;
            report.primal_infeasibility = violation;
            for (auto r : bad)
                report.violated_rows.push_back(r < kept_eq.size() ? static_cast<std::size_t>(kept_eq[r])
                                                                  : static_cast<std::size_t>(me + kept_in[r - kept_eq.size()]));
        } else {
            report.status = SolveStatus::MaxIterations;
        }
    }

    report.x = value;
    report.y_eq = VectorXd::Zero(me);
    report.lambda_in = VectorXd::Zero(mi);
    if (ipm.x.size() == nf)
        for (Eigen::Index k = 0; k < nf; ++k) report.x(free_vars[k]) = ipm.x(k);
    if (ipm.y.size() == static_cast<Eigen::Index>(kept_eq.size()))
        for (std::size_t k = 0; k < kept_eq.size(); ++k) report.y_eq(kept_eq[k]) = ipm.y(static_cast<Eigen::Index>(k));
    if (ipm.lambda.size() == static_cast<Eigen::Index>(kept_in.size()))
        for (std::size_t k = 0; k < kept_in.size(); ++k)
            report.lambda_in(kept_in[k]) = ipm.lambda(static_cast<Eigen::Index>(k));

    // Multipliers of the presolved rows, recovered from stationarity in
    // reverse fixing order.
    VectorXd g = qp.H * report.x + qp.f + A.transpose() * report.y_eq + C.transpose() * report.lambda_in;
    for (auto it = fixings.rbegin(); it != fixings.rend(); ++it) {
        const auto [var, row] = *it;
        const double coef = Arow.coeff(row, var);
        const double yr = -g(var) / coef;
        report.y_eq(row) = yr;
        for (RowMajorMatrix::InnerIterator e(Arow, row); e; ++e) g(e.col()) += yr * e.value();
    }
    report.objective = qp.objective(report.x);
    return report;
}

KktResiduals kkt_residuals(const QpProblem& qp, const VectorXd& x, const VectorXd& y, const VectorXd& lambda) {
    KktResiduals r;
    const auto n = qp.f.size();
    const SparseMatrix A = safe_cols(qp.A_eq, n);
    const SparseMatrix C = safe_cols(qp.C, n);
    r.stationarity = inf_norm(qp.H * x + qp.f + A.transpose() * y + C.transpose() * lambda);
    r.equality = inf_norm(A * x - qp.b_eq);
    if (qp.d.size() > 0) {
        const VectorXd slack = C * x - qp.d;
        r.inequality = std::max(0.0, slack.maxCoeff());
        r.complementarity = inf_norm(lambda.cwiseProduct(slack));
        r.min_multiplier = lambda.minCoeff();
    }
    return r;
}

std::vector<std::size_t> violated_rows(const QpProblem& qp, const VectorXd& x, double tol) {
    std::vector<std::size_t> out;
    const auto n = qp.f.size();
    const VectorXd eq = safe_cols(qp.A_eq, n) * x - qp.b_eq;
    for (Eigen::Index r = 0; r < eq.size(); ++r)
        if (std::abs(eq(r)) > tol) out.push_back(static_cast<std::size_t>(r));
    const VectorXd in = safe_cols(qp.C, n) * x - qp.d;
    for (Eigen::Index r = 0; r < in.size(); ++r)
        if (in(r) > tol) out.push_back(static_cast<std::size_t>(eq.size() + r));
    return out;
}

}  // namespace dsmpc
