#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmpc/network_model.hpp"

namespace dsmpc {

/// N_s stacked disturbance trajectories w(0..N̄), stored sample-major then
/// time-major, each time slice contiguous over the stacked disturbance.
class ScenarioBank {
public:
    ScenarioBank() = default;
    ScenarioBank(std::size_t count, std::size_t task_horizon, std::vector<std::size_t> subsystem_dims);

    std::size_t count() const { return count_; }
    std::size_t task_horizon() const { return task_horizon_; }
    std::size_t dim() const { return dim_; }
    const std::vector<std::size_t>& subsystem_dims() const { return subsystem_dims_; }

    Eigen::Map<const VectorXd> at(std::size_t sample, std::size_t t) const;
    Eigen::Map<VectorXd> at(std::size_t sample, std::size_t t);
    /// w(0..N̄) of one sample as a vector of stacked slices.
    std::vector<VectorXd> trajectory(std::size_t sample) const;

    const std::vector<double>& raw() const { return data_; }

    std::uint64_t seed = 0;
    nlohmann::json generator;  // provenance: the spec that produced the bank

    bool operator==(const ScenarioBank& other) const;

private:
    std::size_t count_ = 0;
    std::size_t task_horizon_ = 0;
    std::size_t dim_ = 0;
    std::vector<std::size_t> subsystem_dims_;
    std::vector<double> data_;
};

enum class DisturbanceKind { IidGaussian, Ar1Gaussian, PeriodicMeanAr1, EmpiricalFile };

struct DisturbanceSpec {
    DisturbanceKind kind = DisturbanceKind::IidGaussian;
    // Mean: constant `mean` (length P, or 1 to broadcast) plus, for the
    // periodic kind, amplitude * sin(2 pi (t + phase) / period).
    VectorXd mean;
    double amplitude = 0.0;
    double period = 48.0;
    double phase = 0.0;
    /// Innovation covariance (P x P, or 1x1 broadcast as sigma^2 I).
    MatrixXd covariance;
    double rho = 0.0;

    // empirical-file
    std::string file;
    std::shared_ptr<const ScenarioBank> empirical;
    std::size_t nearest_k = 10;
    std::size_t history_window = 4;

    double effective_rho() const { return kind == DisturbanceKind::IidGaussian ? 0.0 : rho; }
    VectorXd mean_at(std::size_t t, std::size_t dim) const;
    MatrixXd innovation_covariance(std::size_t dim) const;
    /// Covariance of w(t) - mu(t) under the stationary AR(1) law.
    MatrixXd stationary_covariance(std::size_t dim) const;
};

const char* to_string(DisturbanceKind kind);
DisturbanceKind disturbance_kind_from_string(const std::string& s);

/// Throws InvalidArgument on non-PSD covariance, |rho| >= 1, bad dimensions.
void validate_spec(const DisturbanceSpec& spec, std::size_t dim);

DisturbanceSpec disturbance_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
nlohmann::json disturbance_to_json(const DisturbanceSpec& spec);

ScenarioBank generate_bank(const DisturbanceSpec& spec, const NetworkModel& model, std::size_t task_horizon,
                           std::size_t count, std::uint64_t seed, std::size_t threads = 1);

/// Stacked prediction samples w(k|t), k = 0..N, for `count` draws.
class PredictionSamples {
public:
    PredictionSamples() = default;
    PredictionSamples(std::size_t count, std::size_t horizon, std::size_t dim)
        : count_(count), horizon_(horizon), dim_(dim), data_(count * (horizon + 1) * dim, 0.0) {}

    std::size_t count() const { return count_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t dim() const { return dim_; }
    Eigen::Map<const VectorXd> at(std::size_t sample, std::size_t k) const {
        return {data_.data() + (sample * (horizon_ + 1) + k) * dim_, static_cast<Eigen::Index>(dim_)};
    }
    Eigen::Map<VectorXd> at(std::size_t sample, std::size_t k) {
        return {data_.data() + (sample * (horizon_ + 1) + k) * dim_, static_cast<Eigen::Index>(dim_)};
    }
    /// W_i(t) for one subsystem: rows are samples, blocks of p_i per k.
    MatrixXd subsystem(const NetworkModel& model, std::size_t i) const;

private:
    std::size_t count_ = 0;
    std::size_t horizon_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Draws from the law of w(t..t+N) given the realized w(0..t-1). Gaussian
/// AR(1) kinds use the exact conditional; empirical banks use k-nearest
/// history matching with whole-network block resampling. The random stream is
/// (seed, draw_index), with draw_index defaulting to t.
PredictionSamples conditional_samples(const DisturbanceSpec& spec, const std::vector<VectorXd>& history,
                                      std::size_t t, std::size_t horizon, std::size_t count, std::uint64_t seed,
                                      std::size_t dim, std::optional<std::uint64_t> draw_index = std::nullopt);

/// Writes `<prefix>.csv` (sample,t,w_0..w_{P-1}) and `<prefix>.json` header.
void save_bank(const ScenarioBank& bank, const std::string& prefix);
/// Loads from the JSON header path (or `<prefix>.json`).
ScenarioBank load_bank(const std::string& header_path);

/// Deterministic substream seed for (seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace dsmpc
