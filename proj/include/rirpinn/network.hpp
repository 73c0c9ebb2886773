#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rirpinn/common.hpp"
#include "rirpinn/geometry.hpp"
#include "rirpinn/jet.hpp"

namespace rirpinn {

enum class Activation { sine, tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct NetworkConfig {
    Activation activation = Activation::sine;
    bool residual = false;
    int hidden_layers = 6;
    int width = 64;
    double omega0 = 7.0;
    int input_dim = 4;
    std::uint64_t seed = 0;

    void validate() const;
    // Hidden affine maps plus the scalar output head.
    int layer_count() const { return hidden_layers + 1; }
};

struct ModelParams {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    bool all_finite() const;
    Eigen::Index parameter_count() const;
};

ModelParams init_params(const NetworkConfig& config);

void check_param_shapes(const ModelParams& params, const NetworkConfig& config);

// Input jets carry the normalized coordinate, a standard-basis gradient and
// zero second derivatives.
JetBatch make_input_batch(const Eigen::Ref<const Eigen::MatrixXd>& points,
                          bool with_derivs);

// Emits the network onto the tape and returns the node of the width-1 output.
// force_zero_skip drops every residual skip addition, not just the first.
int forward_on_tape(Tape& tape, const ModelParams& params,
                    const NetworkConfig& config, int input_node,
                    bool force_zero_skip = false);

std::vector<Jet4> forward_jets(const ModelParams& params,
                               const NetworkConfig& config,
                               const Eigen::Ref<const Eigen::MatrixXd>& points);

Eigen::VectorXd forward_value(const ModelParams& params,
                              const NetworkConfig& config,
                              const Eigen::Ref<const Eigen::MatrixXd>& points);

struct Checkpoint {
    NetworkConfig config;
    ModelParams params;
    std::int64_t iteration = 0;
    double amplitude_gain = 1.0;
    NormalizationMap normalization;
    std::string dataset_id;
    bool has_adam = false;
    ModelParams adam_m;
    ModelParams adam_v;
    std::int64_t adam_step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rirpinn
