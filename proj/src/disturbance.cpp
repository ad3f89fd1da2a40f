#include "dsmpc/disturbance.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/json_util.hpp"
#include "dsmpc/parallel.hpp"

namespace dsmpc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Symmetric square-root factor S with S S^T = cov; tolerates PSD input.
MatrixXd sqrt_factor(const MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

VectorXd draw_normal(std::mt19937_64& rng, const MatrixXd& factor) {
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd z(factor.cols());
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
    return factor * z;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

ScenarioBank::ScenarioBank(std::size_t count, std::size_t task_horizon, std::vector<std::size_t> subsystem_dims)
    : count_(count),
      task_horizon_(task_horizon),
      dim_(std::accumulate(subsystem_dims.begin(), subsystem_dims.end(), std::size_t{0})),
      subsystem_dims_(std::move(subsystem_dims)),
      data_(count * (task_horizon + 1) * dim_, 0.0) {}

Eigen::Map<const VectorXd> ScenarioBank::at(std::size_t sample, std::size_t t) const {
    return {data_.data() + (sample * (task_horizon_ + 1) + t) * dim_, static_cast<Eigen::Index>(dim_)};
}

Eigen::Map<VectorXd> ScenarioBank::at(std::size_t sample, std::size_t t) {
    return {data_.data() + (sample * (task_horizon_ + 1) + t) * dim_, static_cast<Eigen::Index>(dim_)};
}

std::vector<VectorXd> ScenarioBank::trajectory(std::size_t sample) const {
    std::vector<VectorXd> out;
    out.reserve(task_horizon_ + 1);
    for (std::size_t t = 0; t <= task_horizon_; ++t) out.emplace_back(at(sample, t));
    return out;
}

bool ScenarioBank::operator==(const ScenarioBank& other) const {
    return count_ == other.count_ && task_horizon_ == other.task_horizon_ &&
           subsystem_dims_ == other.subsystem_dims_ && data_ == other.data_ && seed == other.seed;
}

const char* to_string(DisturbanceKind kind) {
    switch (kind) {
        case DisturbanceKind::IidGaussian: return "iid-gaussian";
        case DisturbanceKind::Ar1Gaussian: return "ar1-gaussian";
        case DisturbanceKind::PeriodicMeanAr1: return "periodic-mean-ar1";
        case DisturbanceKind::EmpiricalFile: return "empirical-file";
    }
    return "?";
}

DisturbanceKind disturbance_kind_from_string(const std::string& s) {
    if (s == "iid-gaussian") return DisturbanceKind::IidGaussian;
    if (s == "ar1-gaussian") return DisturbanceKind::Ar1Gaussian;
    if (s == "periodic-mean-ar1") return DisturbanceKind::PeriodicMeanAr1;
    if (s == "empirical-file") return DisturbanceKind::EmpiricalFile;
    throw InvalidConfig("unknown disturbance kind '" + s + "'");
}

VectorXd DisturbanceSpec::mean_at(std::size_t t, std::size_t dim) const {
    VectorXd mu = VectorXd::Zero(dim);
    if (mean.size() == 1)
        mu.setConstant(mean(0));
    else if (static_cast<std::size_t>(mean.size()) == dim)
        mu = mean;
    if (kind == DisturbanceKind::PeriodicMeanAr1 && amplitude != 0.0)
        mu.array() += amplitude * std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) + phase) / period);
    return mu;
}

MatrixXd DisturbanceSpec::innovation_covariance(std::size_t dim) const {
    if (covariance.size() == 0) return MatrixXd::Zero(dim, dim);
    if (covariance.size() == 1) return covariance(0, 0) * MatrixXd::Identity(dim, dim);
    return covariance;
}

MatrixXd DisturbanceSpec::stationary_covariance(std::size_t dim) const {
    const double r = effective_rho();
    return innovation_covariance(dim) / (1.0 - r * r);
}

void validate_spec(const DisturbanceSpec& spec, std::size_t dim) {
    if (spec.kind == DisturbanceKind::EmpiricalFile) {
        if (!spec.empirical) throw InvalidArgument("empirical-file disturbance has no loaded bank");
        if (spec.empirical->dim() != dim)
            throw InvalidArgument("empirical bank dimension " + std::to_string(spec.empirical->dim()) +
                                  " does not match network disturbance dimension " + std::to_string(dim));
        if (spec.nearest_k == 0) throw InvalidArgument("nearest_k must be positive");
        return;
    }
    if (!(std::abs(spec.rho) < 1.0)) throw InvalidArgument("AR(1) coefficient must satisfy |rho| < 1");
    if (spec.mean.size() != 0 && spec.mean.size() != 1 && static_cast<std::size_t>(spec.mean.size()) != dim)
        throw InvalidArgument("mean has length " + std::to_string(spec.mean.size()) + ", expected 1 or " +
                              std::to_string(dim));
    if (spec.kind == DisturbanceKind::PeriodicMeanAr1 && !(spec.period > 0.0))
        throw InvalidArgument("period must be positive");
    const auto& c = spec.covariance;
    if (c.size() > 1 && (static_cast<std::size_t>(c.rows()) != dim || static_cast<std::size_t>(c.cols()) != dim))
        throw InvalidArgument("covariance must be " + std::to_string(dim) + "x" + std::to_string(dim));
    const MatrixXd full = spec.innovation_covariance(dim);
    if (!full.isApprox(full.transpose(), 1e-12) && (full - full.transpose()).norm() > 1e-12)
        throw InvalidArgument("covariance is not symmetric");
    if (dim > 0) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(full, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
        if (eig.eigenvalues().minCoeff() < -1e-10 * scale) throw InvalidArgument("covariance is not PSD");
    }
}

DisturbanceSpec disturbance_from_json(const nlohmann::json& doc, const std::string& base_dir) {
    DisturbanceSpec spec;
    spec.kind = disturbance_kind_from_string(doc.value("kind", std::string("iid-gaussian")));
    if (doc.contains("mean")) spec.mean = vector_from_json(doc.at("mean"), "disturbance mean");
    spec.amplitude = doc.value("amplitude", 0.0);
    spec.period = doc.value("period", 48.0);
    spec.phase = doc.value("phase", 0.0);
    spec.rho = doc.value("rho", 0.0);
    if (doc.contains("covariance")) {
        spec.covariance = matrix_from_json(doc.at("covariance"), "disturbance covariance");
    } else if (doc.contains("sigma")) {
        const double s = doc.at("sigma").get<double>();
        spec.covariance = MatrixXd::Constant(1, 1, s * s);
    }
    spec.nearest_k = doc.value("k", std::size_t{10});
    spec.history_window = doc.value("history_window", std::size_t{4});
    if (spec.kind == DisturbanceKind::EmpiricalFile) {
        spec.file = doc.at("file").get<std::string>();
        auto path = std::filesystem::path(spec.file);
        if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
        spec.empirical = std::make_shared<const ScenarioBank>(load_bank(path.string()));
    }
    return spec;
}

nlohmann::json disturbance_to_json(const DisturbanceSpec& spec) {
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    if (spec.mean.size() > 0) j["mean"] = vector_to_json(spec.mean);
    j["amplitude"] = spec.amplitude;
    j["period"] = spec.period;
    j["phase"] = spec.phase;
    j["rho"] = spec.rho;
    if (spec.covariance.size() > 0) j["covariance"] = matrix_to_json(spec.covariance);
    if (spec.kind == DisturbanceKind::EmpiricalFile) {
        j["file"] = spec.file;
        j["k"] = spec.nearest_k;
        j["history_window"] = spec.history_window;
    }
    return j;
}

ScenarioBank generate_bank(const DisturbanceSpec& spec, const NetworkModel& model, std::size_t task_horizon,
                           std::size_t count, std::uint64_t seed, std::size_t threads) {
    if (task_horizon < 1) throw InvalidArgument("task horizon must be at least 1");
    if (count < 1) throw InvalidArgument("sample count must be at least 1");
    const auto dim = model.total_disturbances();
    validate_spec(spec, dim);
    std::vector<std::size_t> dims;
    for (const auto& s : model.subsystems()) dims.push_back(s.disturbance_dim);
    ScenarioBank bank(count, task_horizon, dims);
    bank.seed = seed;
    bank.generator = disturbance_to_json(spec);

    if (spec.kind == DisturbanceKind::EmpiricalFile) {
        const auto& source = *spec.empirical;
        if (source.task_horizon() < task_horizon)
            throw InvalidArgument("empirical bank is shorter than the task horizon");
        parallel_for(count, threads, [&](std::size_t l) {
            std::mt19937_64 rng(derive_seed(seed, 1, l));
            std::uniform_int_distribution<std::size_t> pick(0, source.count() - 1);
            const auto src = pick(rng);
            for (std::size_t t = 0; t <= task_horizon; ++t) bank.at(l, t) = source.at(src, t);
        });
        return bank;
    }

    const double r = spec.effective_rho();
    const MatrixXd innovation = sqrt_factor(spec.innovation_covariance(dim));
    const MatrixXd stationary = sqrt_factor(spec.stationary_covariance(dim));
    std::vector<VectorXd> means;
    for (std::size_t t = 0; t <= task_horizon; ++t) means.push_back(spec.mean_at(t, dim));

    parallel_for(count, threads, [&](std::size_t l) {
        std::mt19937_64 rng(derive_seed(seed, 0, l));
        VectorXd dev = draw_normal(rng, stationary);
        bank.at(l, 0) = means[0] + dev;
        for (std::size_t t = 1; t <= task_horizon; ++t) {
            dev = r * dev + draw_normal(rng, innovation);
            bank.at(l, t) = means[t] + dev;
        }
    });
    return bank;
}

MatrixXd PredictionSamples::subsystem(const NetworkModel& model, std::size_t i) const {
    const auto p = model.subsystem(i).disturbance_dim;
    const auto off = model.disturbance_offset(i);
    MatrixXd out(count_, (horizon_ + 1) * p);
    for (std::size_t s = 0; s < count_; ++s)
        for (std::size_t k = 0; k <= horizon_; ++k) out.row(s).segment(k * p, p) = at(s, k).segment(off, p).transpose();
    return out;
}

PredictionSamples conditional_samples(const DisturbanceSpec& spec, const std::vector<VectorXd>& history,
                                      std::size_t t, std::size_t horizon, std::size_t count, std::uint64_t seed,
                                      std::size_t dim, std::optional<std::uint64_t> draw_index) {
    if (horizon < 1) throw InvalidArgument("prediction horizon must be at least 1");
    validate_spec(spec, dim);
    const bool conditional = spec.kind != DisturbanceKind::IidGaussian;
    if (conditional && t > 0 && history.size() < t)
        throw InvalidArgument("conditional sampling at t = " + std::to_string(t) + " needs " + std::to_string(t) +
                              " realized disturbances, got " + std::to_string(history.size()));
    PredictionSamples out(count, horizon, dim);
    std::mt19937_64 rng(derive_seed(seed, 2, draw_index.value_or(t)));

    if (spec.kind == DisturbanceKind::EmpiricalFile) {
        const auto& bank = *spec.empirical;
        if (bank.task_horizon() < t + horizon) throw InvalidArgument("empirical bank does not cover t + N");
        // Rank stored scenarios by distance of their recent history to the realized one.
        const std::size_t window = std::min(t, spec.history_window);
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t l = 0; l < bank.count(); ++l) {
            double d2 = 0.0;
            for (std::size_t s = t - window; s < t; ++s) d2 += (bank.at(l, s) - history[s]).squaredNorm();
            ranked.emplace_back(d2, l);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const auto k = window == 0 ? bank.count() : std::min(spec.nearest_k, bank.count());
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        for (std::size_t s = 0; s < count; ++s) {
            const auto src = ranked[pick(rng)].second;
            for (std::size_t j = 0; j <= horizon; ++j) out.at(s, j) = bank.at(src, t + j);
        }
        return out;
    }

    const double r = spec.effective_rho();
    const MatrixXd innovation = sqrt_factor(spec.innovation_covariance(dim));
    const MatrixXd stationary = sqrt_factor(spec.stationary_covariance(dim));
    for (std::size_t s = 0; s < count; ++s) {
        VectorXd dev;
        if (t == 0 || r == 0.0) {
            dev = draw_normal(rng, stationary);
        } else {
            dev = r * (history[t - 1] - spec.mean_at(t - 1, dim)) + draw_normal(rng, innovation);
        }
        out.at(s, 0) = spec.mean_at(t, dim) + dev;
        for (std::size_t k = 1; k <= horizon; ++k) {
            dev = r * dev + draw_normal(rng, innovation);
            out.at(s, k) = spec.mean_at(t + k, dim) + dev;
        }
    }
    return out;
}

void save_bank(const ScenarioBank& bank, const std::string& prefix) {
    const std::string csv_path = prefix + ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path);
    csv << "sample,t";
    for (std::size_t k = 0; k < bank.dim(); ++k) csv << ",w" << k;
    csv << '\n';
    for (std::size_t l = 0; l < bank.count(); ++l)
        for (std::size_t t = 0; t <= bank.task_horizon(); ++t) {
            csv << l << ',' << t;
            const auto w = bank.at(l, t);
            for (Eigen::Index k = 0; k < w.size(); ++k) csv << ',' << format_double(w(k));
            csv << '\n';
        }
    nlohmann::json header;
    header["format"] = "dsmpc-scenario-bank";
    header["csv"] = std::filesystem::path(csv_path).filename().string();
    header["count"] = bank.count();
    header["task_horizon"] = bank.task_horizon();
    header["subsystem_dims"] = bank.subsystem_dims();
    header["seed"] = bank.seed;
    header["generator"] = bank.generator;
    write_json_file(prefix + ".json", header);
}

ScenarioBank load_bank(const std::string& header_path) {
    std::string path = header_path;
    if (std::filesystem::path(path).extension() != ".json") path += ".json";
    const auto header = read_json_file(path);
    ScenarioBank bank(header.at("count").get<std::size_t>(), header.at("task_horizon").get<std::size_t>(),
                      header.at("subsystem_dims").get<std::vector<std::size_t>>());
    bank.seed = header.value("seed", std::uint64_t{0});
    bank.generator = header.value("generator", nlohmann::json::object());
    const auto csv_path = std::filesystem::path(path).parent_path() / header.at("csv").get<std::string>();
    std::ifstream csv(csv_path);
    if (!csv) throw IoError("cannot open " + csv_path.string());
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string cell;
        std::getline(is, cell, ',');
        const auto l = std::stoul(cell);
        std::getline(is, cell, ',');
        const auto t = std::stoul(cell);
        if (l >= bank.count() || t > bank.task_horizon()) throw IoError("bank row out of range in " + csv_path.string());
        auto w = bank.at(l, t);
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            if (!std::getline(is, cell, ',')) throw IoError("short bank row in " + csv_path.string());
            w(k) = std::strtod(cell.c_str(), nullptr);
        }
        ++rows;
    }
    if (rows != bank.count() * (bank.task_horizon() + 1)) throw IoError("bank CSV is incomplete: " + csv_path.string());
    return bank;
}

}  // namespace dsmpc
