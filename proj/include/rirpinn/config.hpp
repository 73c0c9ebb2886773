#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rirpinn/network.hpp"
#include "rirpinn/trainer.hpp"

namespace rirpinn {

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    Eigen::Vector3d room_dims{6.0, 4.0, 2.7};
    double room_t60 = 0.38;
    double room_rho = 0.0;  // 0 derives the coefficient from room.t60
    double room_c = 343.0;
    int room_max_order = 4;

    Eigen::Vector3d source_pos{0.0, 1.5, 0.0};

    int array_count = 100;
    double array_radius = 0.15;
    double region_half_width = 0.15;

    double fs = 8000.0;
    int samples = 400;
    double snr_db = 20.0;

    int net_width = 256;
    double net_omega0 = 7.0;

    std::vector<Activation> sweep_activations{Activation::sine, Activation::tanh};
    std::vector<bool> sweep_residual{false, true};
    std::vector<int> sweep_depths{6, 10, 14, 18};

    TrainConfig train;

    int eval_grid_per_axis = 14;
    std::vector<double> eval_bands{0.0, 1000.0, 2000.0, 3000.0, 4000.0};
    double eval_t_split = 0.025;
    std::vector<double> eval_slices_z{-0.0115, -0.15};
    double eval_sphere_radius = 0.15;

    void validate() const;
};

// Flat key=value text; '#' comments; unknown or duplicate keys are rejected.
ExperimentConfig parse_experiment_config(
    const std::string& text,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

ExperimentConfig load_experiment_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Canonical form: fixed key order, round-trip exact values. Parsing the
// output reproduces the config.
std::string serialize_config(const ExperimentConfig& config);

// One "key=value" per element, as accepted on the command line.
std::pair<std::string, std::string> split_override(const std::string& arg);

struct SweepEntry {
    Activation activation = Activation::sine;
    bool residual = false;
    int depth = 6;

    std::string id() const;  // e.g. sine-res-n6
    std::string method() const;  // e.g. sine-res
    std::uint64_t code() const;
};

std::vector<SweepEntry> sweep_entries(const ExperimentConfig& config);

NetworkConfig network_config_for(const ExperimentConfig& config,
                                 const SweepEntry& entry);
TrainConfig train_config_for(const ExperimentConfig& config,
                             const SweepEntry& entry);

}  // namespace rirpinn
