#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "dsmpc/errors.hpp"
#include "dsmpc/experiment.hpp"
#include "dsmpc/json_util.hpp"

namespace fs = std::filesystem;
using namespace dsmpc;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string solver;
    std::size_t threads = 1;
    std::string tightening;  // reuse a saved table instead of recomputing
    std::string logs;
};

std::size_t worker_count(std::size_t requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

Experiment load(const Globals& g, bool benchmark_default = false) {
    Experiment ex;
    if (!g.config.empty()) {
        ex = load_experiment(g.config);
    } else if (benchmark_default) {
        ex = experiment_from_json(nlohmann::json{{"benchmark", nlohmann::json::object()}, {"seed", 1}});
    } else {
        throw InvalidConfig("--config is required for this command");
    }
    if (g.seed) override_seed(ex, *g.seed);
    if (!g.solver.empty()) override_solver(ex, solver_kind_from_string(g.solver));
    return ex;
}

std::string out_path(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

void ensure_out(const Globals& g) {
    std::error_code ec;
    fs::create_directories(g.out, ec);
    if (ec) throw IoError("cannot create " + g.out + ": " + ec.message());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TighteningTable obtain_tightening(const Globals& g, const Experiment& ex, std::size_t threads) {
    if (!g.tightening.empty()) return load_tightening(g.tightening, ex.setup.constraints);
    auto table = compute_tightening(ex, threads);
    ensure_out(g);
    save_tightening(table, out_path(g, "tightening.csv"));
    return table;
}

int cmd_generate(const Globals& g) {
    const auto ex = load(g);
    const auto threads = worker_count(g.threads);
    write_model_files(ex, g.out);
    const auto bank = tightening_bank(ex, threads);
    save_bank(bank, out_path(g, "bank"));
    std::cout << "agents " << ex.setup.model.size() << ", states " << ex.setup.model.total_states() << ", bank "
              << bank.count() << " x " << bank.task_horizon() + 1 << " steps, config " << ex.config_hash << '\n';
    if (ex.benchmark)
        std::cout << "side length " << ex.side_length << ", mean degree " << ex.mean_degree << '\n';
    return 0;
}

int cmd_tighten(const Globals& g) {
    const auto ex = load(g);
    const auto threads = worker_count(g.threads);
    ensure_out(g);
    const auto table = compute_tightening(ex, threads);
    save_tightening(table, out_path(g, "tightening.csv"));
    double cx = 0.0, cu = 0.0;
    for (std::size_t q = 0; q < table.constraints().size(); ++q)
        for (std::size_t t = 0; t <= table.task_horizon(); ++t) {
            auto& c = table.constraints()[q].kind == ConstraintKind::State ? cx : cu;
            c = std::max(c, table.value(q, t));
        }
    std::cout << "tightened " << table.constraints().size() << " half-spaces over " << table.task_horizon() + 1
              << " steps, max c^x " << cx << ", max c^u " << cu << '\n';
    return 0;
}

int cmd_simulate(const Globals& g) {
    const auto ex = load(g);
    const auto threads = worker_count(g.threads);
    const auto table = obtain_tightening(g, ex, threads);
    const auto start = std::chrono::steady_clock::now();
    const auto logs = run_simulation(ex, table, threads);
    const auto dir = g.logs.empty() ? out_path(g, "logs") : g.logs;
    write_logs(logs, dir);
    std::cout << logs.size() << " run(s) of " << logs.front().steps.size() << " steps with the "
              << to_string(ex.mpc.solver) << " solver in " << seconds_since(start) << " s, logs in " << dir << '\n';
    return 0;
}

int cmd_report(const Globals& g) {
    const auto ex = load(g);
    const auto threads = worker_count(g.threads);
    const auto dir = g.logs.empty() ? out_path(g, "logs") : g.logs;
    const auto logs = read_logs(dir);
    TighteningTable table;
    if (!g.tightening.empty())
        table = load_tightening(g.tightening, ex.setup.constraints);
    else if (fs::exists(out_path(g, "tightening.csv")))
        table = load_tightening(out_path(g, "tightening.csv"), ex.setup.constraints);
    else
        table = compute_tightening(ex, threads);
    const auto report = build_report(ex, table, logs);
    write_report(ex, report, g.out);
    std::cout << report.summary(ex).dump(2) << '\n';
    return 0;
}

int cmd_benchmark(const Globals& g) {
    auto ex = load(g, true);
    const auto threads = worker_count(g.threads);
    auto start = std::chrono::steady_clock::now();
    write_model_files(ex, g.out);
    std::cout << "generate: " << ex.setup.model.size() << " agents";
    if (ex.benchmark) std::cout << ", side length " << ex.side_length << ", mean degree " << ex.mean_degree;
    std::cout << " (" << seconds_since(start) << " s)\n";

    start = std::chrono::steady_clock::now();
    const auto table = obtain_tightening(g, ex, threads);
    std::cout << "tighten: N_s = " << ex.tightening.samples << " (" << seconds_since(start) << " s)\n";

    start = std::chrono::steady_clock::now();
    const auto logs = run_simulation(ex, table, threads);
    write_logs(logs, g.logs.empty() ? out_path(g, "logs") : g.logs);
    std::cout << "simulate: " << logs.size() << " run(s) x " << logs.front().steps.size() << " steps ("
              << seconds_since(start) << " s)\n";

    const auto report = build_report(ex, table, logs);
    write_report(ex, report, g.out);
    std::cout << "report: max state violation frequency " << report.violations.max_frequency(ConstraintKind::State)
              << ", max input violation frequency " << report.violations.max_frequency(ConstraintKind::Input)
              << ", nominal tightened violations " << report.nominal_state_violations << " (state) "
              << report.nominal_input_violations << " (input)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed stochastic MPC with indirect feedback"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "experiment config (JSON)");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--solver", g.solver, "central or admm")->check(CLI::IsMember({"central", "admm"}));
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str();

    auto* generate = app.add_subcommand("generate", "write the network, constraints, controller and tightening bank");
    auto* tighten = app.add_subcommand("tighten", "compute the tightening table (tightening.csv)");
    auto* simulate = app.add_subcommand("simulate", "closed-loop Monte-Carlo runs (logs/run_XXXX.csv/.json)");
    auto* report = app.add_subcommand("report", "violation statistics from saved logs");
    auto* bench = app.add_subcommand("benchmark", "end-to-end data-center pipeline");
    for (auto* sub : {simulate, report, bench})
        sub->add_option("--tightening", g.tightening, "reuse a saved tightening table");
    for (auto* sub : {simulate, report, bench}) sub->add_option("--logs", g.logs, "log directory (default <out>/logs)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code(ErrorCategory::InvalidArgument);
    }

    try {
        if (generate->parsed()) return cmd_generate(g);
        if (tighten->parsed()) return cmd_tighten(g);
        if (simulate->parsed()) return cmd_simulate(g);
        if (report->parsed()) return cmd_report(g);
        if (bench->parsed()) return cmd_benchmark(g);
    } catch (const InfeasibleProblem& e) {
        std::cerr << "infeasible: " << e.what();
        if (!e.violated_rows().empty()) {
            std::cerr << " (rows";
            for (std::size_t k = 0; k < e.violated_rows().size() && k < 10; ++k) std::cerr << ' ' << e.violated_rows()[k];
            std::cerr << ')';
        }
        std::cerr << '\n';
        return exit_code(e.category());
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
