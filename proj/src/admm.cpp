#include "dsmpc/admm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/parallel.hpp"

namespace dsmpc {

using RowMajorMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

std::vector<std::size_t> AgentSubproblem::copied_agents() const {
    std::vector<std::size_t> out;
    for (std::size_t l = own_count; l < variables.size(); ++l)
        if (out.empty() || out.back() != owners[l]) out.push_back(owners[l]);
    return out;
}

std::vector<AgentSubproblem> partition_problem(const QpProblem& qp, const NetworkModel& model) {
    qp.check_dimensions();
    if (!qp.annotated() || qp.eq_rows.size() != qp.num_equalities() || qp.in_rows.size() != qp.num_inequalities())
        throw InvalidArgument("partition needs a QP with agent annotations");
    if (qp.agents != model.size()) throw DimensionMismatch("QP agent count does not match the network");
    const std::size_t M = qp.agents;
    const std::size_t n = qp.num_variables();

    std::vector<std::vector<std::size_t>> own(M), own_states(M);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& tag = qp.variables[k];
        if (tag.agent >= M) throw InvalidArgument("variable tagged with unknown agent");
        own[tag.agent].push_back(k);
        if (tag.kind == VariableKind::NominalState) own_states[tag.agent].push_back(k);
    }
    std::vector<char> has_holder(M, 0);
    for (std::size_t i = 0; i < M; ++i)
        for (auto j : model.strict_neighbors(i)) has_holder[j] = 1;

    for (Eigen::Index c = 0; c < qp.H.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(qp.H, c); it; ++it)
            if (it.value() != 0.0 &&
                qp.variables[static_cast<std::size_t>(it.row())].agent != qp.variables[static_cast<std::size_t>(it.col())].agent)
                throw InvalidArgument("objective couples variables of different agents");

    const RowMajorMatrix Arow(qp.A_eq.cols() == static_cast<Eigen::Index>(n) ? qp.A_eq : SparseMatrix(qp.b_eq.size(), n));
    const RowMajorMatrix Crow(qp.C.cols() == static_cast<Eigen::Index>(n) ? qp.C : SparseMatrix(qp.d.size(), n));

    std::vector<AgentSubproblem> out(M);
    for (std::size_t i = 0; i < M; ++i) {
        auto& sp = out[i];
        sp.agent = i;
        sp.variables = own[i];
        sp.own_count = own[i].size();
        sp.owners.assign(sp.own_count, i);
        for (auto k : own[i])
            sp.shared.push_back(has_holder[i] && qp.variables[k].kind == VariableKind::NominalState ? 1 : 0);
        for (auto j : model.strict_neighbors(i))
            for (auto k : own_states[j]) {
                sp.variables.push_back(k);
                sp.owners.push_back(j);
                sp.shared.push_back(1);
            }
        std::map<std::size_t, Eigen::Index> local;
        for (std::size_t l = 0; l < sp.variables.size(); ++l) local[sp.variables[l]] = static_cast<Eigen::Index>(l);
        const auto nl = static_cast<Eigen::Index>(sp.variables.size());

        auto take_rows = [&](const RowMajorMatrix& M_, const VectorXd& rhs, const std::vector<RowTag>& tags,
                             std::vector<std::size_t>& rows, SparseMatrix& mat, VectorXd& vec) {
            std::vector<Triplet> trip;
            for (std::size_t r = 0; r < tags.size(); ++r) {
                if (tags[r].agent != i) continue;
                const auto lr = static_cast<Eigen::Index>(rows.size());
                for (RowMajorMatrix::InnerIterator it(M_, static_cast<Eigen::Index>(r)); it; ++it) {
                    const auto found = local.find(static_cast<std::size_t>(it.col()));
                    if (found == local.end()) {
                        if (it.value() == 0.0) continue;
                        throw InvalidArgument("row of agent " + std::to_string(i) + " touches variable " +
                                              std::to_string(it.col()) + " outside its neighborhood");
                    }
                    trip.emplace_back(lr, found->second, it.value());
                }
                rows.push_back(r);
            }
            mat.resize(static_cast<Eigen::Index>(rows.size()), nl);
            mat.setFromTriplets(trip.begin(), trip.end());
            vec.resize(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t k = 0; k < rows.size(); ++k) vec(static_cast<Eigen::Index>(k)) = rhs(static_cast<Eigen::Index>(rows[k]));
        };
        take_rows(Arow, qp.b_eq, qp.eq_rows, sp.eq_rows, sp.A, sp.b);
        // Copies of a neighbor's z(0) also carry the owner's initial rows.
        {
            std::vector<Triplet> trip;
            for (Eigen::Index c = 0; c < sp.A.outerSize(); ++c)
                for (SparseMatrix::InnerIterator it(sp.A, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
            std::vector<double> rhs(sp.b.data(), sp.b.data() + sp.b.size());
            for (std::size_t r = 0; r < qp.eq_rows.size(); ++r) {
                const auto& tag = qp.eq_rows[r];
                if (tag.kind != RowKind::Initial || tag.agent == i) continue;
                bool inside = true;
                std::vector<Triplet> row;
                for (RowMajorMatrix::InnerIterator it(Arow, static_cast<Eigen::Index>(r)); it && inside; ++it) {
                    const auto found = local.find(static_cast<std::size_t>(it.col()));
                    inside = found != local.end();
                    if (inside) row.emplace_back(static_cast<Eigen::Index>(rhs.size()), found->second, it.value());
                }
                if (!inside || row.empty()) continue;
                trip.insert(trip.end(), row.begin(), row.end());
                rhs.push_back(qp.b_eq(static_cast<Eigen::Index>(r)));
                sp.eq_rows.push_back(r);
            }
            sp.A.resize(static_cast<Eigen::Index>(rhs.size()), nl);
            sp.A.setFromTriplets(trip.begin(), trip.end());
            sp.b = Eigen::Map<VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
        }
        take_rows(Crow, qp.d, qp.in_rows, sp.in_rows, sp.C, sp.d);

        std::vector<Triplet> trip;
        sp.f = VectorXd::Zero(nl);
        for (std::size_t l = 0; l < sp.own_count; ++l) {
            const auto g = static_cast<Eigen::Index>(sp.variables[l]);
            sp.f(static_cast<Eigen::Index>(l)) = qp.f(g);
            for (SparseMatrix::InnerIterator it(qp.H, g); it; ++it)
                trip.emplace_back(local.at(static_cast<std::size_t>(it.row())), static_cast<Eigen::Index>(l), it.value());
        }
        sp.H.resize(nl, nl);
        sp.H.setFromTriplets(trip.begin(), trip.end());
    }
    return out;
}

void MessageBus::post(Message message) {
    audit_.push_back({message.round, message.phase, message.from, message.to, message.values.size()});
    pending_.push_back(std::move(message));
}

void MessageBus::deliver() {
    for (auto& m : pending_) inbox_.at(m.to).push_back(std::move(m));
    pending_.clear();
}

void MessageBus::clear_inboxes() {
    for (auto& box : inbox_) box.clear();
}

std::vector<MessageBus::Record> non_edge_messages(const MessageBus& bus, const NetworkModel& model) {
    std::vector<MessageBus::Record> out;
    for (const auto& r : bus.audit()) {
        const auto a = model.strict_neighbors(r.from);
        const auto b = model.strict_neighbors(r.to);
        const bool edge = std::binary_search(a.begin(), a.end(), r.to) || std::binary_search(b.begin(), b.end(), r.from);
        if (!edge || r.from == r.to) out.push_back(r);
    }
    return out;
}

SolveReport solve_admm(const QpProblem& qp, const NetworkModel& model, const AdmmOptions& options, MessageBus* bus) {
    return solve_admm(qp, partition_problem(qp, model), options, bus);
}

SolveReport solve_admm(const QpProblem& qp, const std::vector<AgentSubproblem>& agents, const AdmmOptions& options,
                       MessageBus* bus) {
    if (!(options.rho > 0.0)) throw InvalidArgument("ADMM penalty must be positive");
    const std::size_t M = agents.size();
    MessageBus local_bus(M);
    MessageBus& net = bus ? *bus : local_bus;
    if (bus) *bus = MessageBus(M);

    // Holders of each owner's shared block, and where the block sits locally.
    std::vector<std::vector<std::size_t>> holders(M);
    std::vector<std::vector<std::size_t>> own_shared(M);  // local indices in the owner
    std::vector<std::map<std::size_t, std::size_t>> copy_start(M);  // holder: owner -> first local copy index
    for (std::size_t i = 0; i < M; ++i) {
        const auto& sp = agents[i];
        if (sp.agent != i) throw InvalidArgument("subproblems must be ordered by agent");
        for (std::size_t l = 0; l < sp.own_count; ++l)
            if (sp.shared[l]) own_shared[i].push_back(l);
        for (std::size_t l = sp.own_count; l < sp.variables.size(); ++l)
            if (!copy_start[i].count(sp.owners[l])) {
                copy_start[i][sp.owners[l]] = l;
                holders[sp.owners[l]].push_back(i);
            }
    }
    for (std::size_t i = 0; i < M; ++i)
        for (const auto& [j, start] : copy_start[i]) {
            std::size_t count = 0;
            for (std::size_t l = start; l < agents[i].variables.size() && agents[i].owners[l] == j; ++l) ++count;
            if (count != own_shared[j].size())
                throw InvalidArgument("copy block of agent " + std::to_string(j) + " held by " + std::to_string(i) +
                                      " does not match its shared variables");
        }

    std::vector<VectorXd> x(M), u(M), zl(M);
    std::size_t shared_total = 0;
    for (std::size_t i = 0; i < M; ++i) {
        const auto nl = static_cast<Eigen::Index>(agents[i].variables.size());
        x[i] = VectorXd::Zero(nl);
        u[i] = VectorXd::Zero(nl);
        zl[i] = VectorXd::Zero(nl);
        for (auto s : agents[i].shared) shared_total += s ? 1 : 0;
    }

    SolveReport report;
    report.status = SolveStatus::MaxIterations;
    double rho = options.rho;
    std::vector<SolveReport> local(M);

    for (std::size_t round = 0; round < options.max_iterations; ++round) {
        parallel_for(M, options.threads, [&](std::size_t i) {
            const auto& sp = agents[i];
            QpProblem lq;
            lq.H = sp.H;
            lq.f = sp.f;
            for (Eigen::Index l = 0; l < lq.f.size(); ++l)
                if (sp.shared[static_cast<std::size_t>(l)]) {
                    lq.H.coeffRef(l, l) += rho;
                    lq.f(l) += rho * (u[i](l) - zl[i](l));
                }
            lq.A_eq = sp.A;
            lq.b_eq = sp.b;
            lq.C = sp.C;
            lq.d = sp.d;
            local[i] = solve_centralized(lq, options.local);
            if (local[i].x.size() == lq.f.size()) x[i] = local[i].x;
        });
        bool failed = false;
        for (std::size_t i = 0; i < M && !failed; ++i) {
            if (local[i].status == SolveStatus::Optimal) continue;
            failed = true;
            report.status = local[i].status == SolveStatus::Infeasible ? SolveStatus::Infeasible : SolveStatus::MaxIterations;
            for (auto r : local[i].violated_rows)
                report.violated_rows.push_back(r < agents[i].eq_rows.size()
                                                   ? agents[i].eq_rows[r]
                                                   : qp.num_equalities() + agents[i].in_rows[r - agents[i].eq_rows.size()]);
            report.primal_infeasibility = std::max(report.primal_infeasibility, local[i].primal_infeasibility);
            report.iterations = round + 1;
        }
        if (failed) break;

        {
            RoundTraffic traffic;
            // Gather: holders send x + u on their copies to the owner.
            for (std::size_t i = 0; i < M; ++i)
                for (const auto& [j, start] : copy_start[i]) {
                    Message m{round, 0, i, j, {}};
                    m.values.resize(own_shared[j].size());
                    for (std::size_t s = 0; s < m.values.size(); ++s) {
                        const auto l = static_cast<Eigen::Index>(start + s);
                        m.values[s] = x[i](l) + u[i](l);
                    }
                    traffic.payload += m.values.size();
                    ++traffic.messages;
                    net.post(std::move(m));
                }
            net.deliver();

            double dz2 = 0.0;
            std::vector<VectorXd> consensus(M);
            for (std::size_t j = 0; j < M; ++j) {
                const auto& os = own_shared[j];
                VectorXd avg(static_cast<Eigen::Index>(os.size()));
                for (std::size_t s = 0; s < os.size(); ++s) avg(static_cast<Eigen::Index>(s)) = x[j](static_cast<Eigen::Index>(os[s])) + u[j](static_cast<Eigen::Index>(os[s]));
                double count = 1.0;
                for (const auto& m : net.inbox(j)) {
                    for (std::size_t s = 0; s < os.size(); ++s) avg(static_cast<Eigen::Index>(s)) += m.values[s];
                    count += 1.0;
                }
                avg /= count;
                for (std::size_t s = 0; s < os.size(); ++s) {
                    const auto l = static_cast<Eigen::Index>(os[s]);
                    const double diff = avg(static_cast<Eigen::Index>(s)) - zl[j](l);
                    dz2 += diff * diff;
                    zl[j](l) = avg(static_cast<Eigen::Index>(s));
                }
                consensus[j] = std::move(avg);
            }
            net.clear_inboxes();

            // Scatter: owners return the consensus value to every holder.
            for (std::size_t j = 0; j < M; ++j)
                for (auto i : holders[j]) {
                    Message m{round, 1, j, i, std::vector<double>(consensus[j].data(), consensus[j].data() + consensus[j].size())};
                    traffic.payload += m.values.size();
                    ++traffic.messages;
                    net.post(std::move(m));
                }
            net.deliver();
            for (std::size_t i = 0; i < M; ++i) {
                for (const auto& m : net.inbox(i)) {
                    const auto start = copy_start[i].at(m.from);
                    for (std::size_t s = 0; s < m.values.size(); ++s) {
                        const auto l = static_cast<Eigen::Index>(start + s);
                        const double diff = m.values[s] - zl[i](l);
                        dz2 += diff * diff;
                        zl[i](l) = m.values[s];
                    }
                }
            }
            net.clear_inboxes();

            double r2 = 0.0, xn2 = 0.0, zn2 = 0.0, un2 = 0.0;
            for (std::size_t i = 0; i < M; ++i)
                for (Eigen::Index l = 0; l < x[i].size(); ++l) {
                    if (!agents[i].shared[static_cast<std::size_t>(l)]) continue;
                    const double diff = x[i](l) - zl[i](l);
                    u[i](l) += diff;
                    r2 += diff * diff;
                    xn2 += x[i](l) * x[i](l);
                    zn2 += zl[i](l) * zl[i](l);
                    un2 += u[i](l) * u[i](l);
                }
            const double r = std::sqrt(r2);
            const double s = rho * std::sqrt(dz2);
            report.primal_residuals.push_back(r);
            report.dual_residuals.push_back(s);
            report.penalties.push_back(rho);
            report.traffic.push_back(traffic);
            report.iterations = round + 1;

            const double root = std::sqrt(static_cast<double>(shared_total));
            const double eps_pri = root * options.eps_abs + options.eps_rel * std::max(std::sqrt(xn2), std::sqrt(zn2));
            const double eps_dual = root * options.eps_abs + options.eps_rel * rho * std::sqrt(un2);
            if (r <= eps_pri && s <= eps_dual) {
                report.status = SolveStatus::Optimal;
                break;
            }
            if (options.adaptive) {
                double scale = 1.0;
                if (r > options.balance_threshold * s)
                    scale = options.balance_factor;
                else if (s > options.balance_threshold * r)
                    scale = 1.0 / options.balance_factor;
                if (scale != 1.0) {
                    rho *= scale;
                    for (auto& ui : u) ui /= scale;
                }
            }
        }
    }

    report.x = VectorXd::Zero(static_cast<Eigen::Index>(qp.num_variables()));
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t l = 0; l < agents[i].own_count; ++l) {
            const auto g = static_cast<Eigen::Index>(agents[i].variables[l]);
            const auto li = static_cast<Eigen::Index>(l);
            report.x(g) = agents[i].shared[l] ? zl[i](li) : x[i](li);
        }
    report.y_eq = VectorXd::Zero(static_cast<Eigen::Index>(qp.num_equalities()));
    report.lambda_in = VectorXd::Zero(static_cast<Eigen::Index>(qp.num_inequalities()));
    report.objective = qp.objective(report.x);
    return report;
}

void save_residual_history(const SolveReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "round,primal,dual,rho,messages,payload\n";
    for (std::size_t k = 0; k < report.primal_residuals.size(); ++k) {
        out << k << ',' << format_double(report.primal_residuals[k]) << ',' << format_double(report.dual_residuals[k])
            << ',' << format_double(k < report.penalties.size() ? report.penalties[k] : 0.0) << ',';
        if (k < report.traffic.size())
            out << report.traffic[k].messages << ',' << report.traffic[k].payload << '\n';
        else
            out << "0,0\n";
    }
}

void save_message_audit(const MessageBus& bus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "round,phase,from,to,payload\n";
    for (const auto& r : bus.audit())
        out << r.round << ',' << (r.phase == 0 ? "gather" : "scatter") << ',' << r.from << ',' << r.to << ','
            << r.payload << '\n';
}

}  // namespace dsmpc
