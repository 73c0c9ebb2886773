#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rirpinn/network.hpp"
#include "rirpinn/room.hpp"

namespace rirpinn {

struct TrainConfig {
    double lambda = 1e-6;
    std::int64_t iterations = 50000;
    int collocation_count = 100;
    // PDE batch pairs every collocation point with every stride-th sample.
    int collocation_time_stride = 1;
    double lr_init = 1e-4;
    double lr_decay = 0.98;
    std::int64_t lr_period = 100;
    double lr_floor = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    double amplitude_scale = 0.5;
    std::int64_t checkpoint_interval = 1000;
    int threads = 0;         // 0 picks hardware concurrency
    int chunk_samples = 512; // rows per tape chunk; part of the numeric recipe

    void validate() const;
};

struct OptimizerState {
    ModelParams m;
    ModelParams v;
    std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const NetworkConfig& config);

struct TrajectoryRow {
    std::int64_t iteration = 0;
    double l_err = 0.0;
    double l_pde = 0.0;
    double l_total = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

struct LossTrajectory {
    std::vector<TrajectoryRow> rows;

    bool all_finite() const;
};

// Mean squared error normalized by the microphone count only.
double loss_err(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& targets, Eigen::Index mic_count);

// Wave-equation residual power, (1/point_count) * sum r^2, with jet second
// derivatives converted to physical units through the normalization map.
double loss_pde(const std::vector<Jet4>& jets, double c,
                const NormalizationMap& norm_map, Eigen::Index point_count);

double total_loss(double l_err, double l_pde, double lambda);

double lr_schedule(std::int64_t iteration, const TrainConfig& config);

// In-place Adam with bias correction; validates every gradient tensor before
// touching any parameter.
void adam_step(ModelParams& params, const ParamGradients& grads,
               OptimizerState& state, double lr, const TrainConfig& config);

// Targets are scaled so the global peak equals amplitude_scale; an all-zero
// dataset keeps gain 1.
double amplitude_gain_for(const RirDataset& dataset, double amplitude_scale);

struct TrainSession {
    std::string checkpoint_path; // empty: no checkpoint files
    std::string log_path;        // empty: no CSV log
    std::string dataset_id;
    const Checkpoint* resume = nullptr;
};

struct TrainResult {
    ModelParams params;
    LossTrajectory trajectory;
    OptimizerState opt;
    double amplitude_gain = 1.0;
    std::int64_t iterations_done = 0;
};

TrainResult train(const RirDataset& dataset, const NetworkConfig& net_config,
                  const TrainConfig& train_config,
                  const TrainSession& session = {});

}  // namespace rirpinn
