#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dsmpc/network_model.hpp"
#include "dsmpc/qp.hpp"

namespace dsmpc {

/// One agent's share of an annotated QP: its own variables followed by local
/// copies of its strict neighbors' nominal states.
struct AgentSubproblem {
    std::size_t agent = 0;
    std::vector<std::size_t> variables;  // global indices, own block first
    std::size_t own_count = 0;
    std::vector<std::size_t> owners;     // owning agent per local variable
    std::vector<char> shared;            // local entry takes part in consensus
    std::vector<std::size_t> eq_rows;    // global row indices; neighbors' initial rows repeat here
    std::vector<std::size_t> in_rows;

    SparseMatrix H;
    VectorXd f;
    SparseMatrix A;
    VectorXd b;
    SparseMatrix C;
    VectorXd d;

    std::size_t copy_count() const { return variables.size() - own_count; }
    std::vector<std::size_t> copied_agents() const;
};

/// Splits an annotated QP along the neighbor graph. Throws InvalidArgument if
/// the annotation is missing, the objective couples agents, or a row touches a
/// variable outside the owner's neighborhood.
std::vector<AgentSubproblem> partition_problem(const QpProblem& qp, const NetworkModel& model);

struct Message {
    std::size_t round = 0;
    int phase = 0;  // 0: holder -> owner proposals, 1: owner -> holder consensus
    std::size_t from = 0;
    std::size_t to = 0;
    std::vector<double> values;
};

/// Round-based in-process transport. Every posted message is kept for audit;
/// payload values are only reachable through the receiver's inbox.
class MessageBus {
public:
    explicit MessageBus(std::size_t agents = 0) : inbox_(agents) {}

    void post(Message message);
    /// Delivers everything posted since the last delivery.
    void deliver();
    const std::vector<Message>& inbox(std::size_t agent) const { return inbox_.at(agent); }
    void clear_inboxes();

    struct Record {
        std::size_t round;
        int phase;
        std::size_t from;
        std::size_t to;
        std::size_t payload;
    };
    const std::vector<Record>& audit() const { return audit_; }

private:
    std::vector<std::vector<Message>> inbox_;
    std::vector<Message> pending_;
    std::vector<Record> audit_;
};

/// Messages whose endpoints are not neighbors in either direction.
std::vector<MessageBus::Record> non_edge_messages(const MessageBus& bus, const NetworkModel& model);

struct AdmmOptions {
    double rho = 1.0;
    double eps_abs = 1e-7;
    double eps_rel = 1e-6;
    std::size_t max_iterations = 20000;
    bool adaptive = true;
    double balance_threshold = 10.0;
    double balance_factor = 2.0;
    std::size_t threads = 1;
    SolverOptions local;
};

/// Consensus ADMM with scaled duals. Status is MaxIterations when the round
/// budget runs out; the partial iterate is still returned.
SolveReport solve_admm(const QpProblem& qp, const std::vector<AgentSubproblem>& agents, const AdmmOptions& options,
                       MessageBus* bus = nullptr);
SolveReport solve_admm(const QpProblem& qp, const NetworkModel& model, const AdmmOptions& options,
                       MessageBus* bus = nullptr);

/// round,primal,dual,rho,messages,payload
void save_residual_history(const SolveReport& report, const std::string& path);
/// round,phase,from,to,payload
void save_message_audit(const MessageBus& bus, const std::string& path);

}  // namespace dsmpc
