#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "rirpinn/common.hpp"

namespace rirpinn {

// Value plus first and pure second derivatives along the four normalized
// input axes (t, x, y, z). No cross terms: the wave operator only needs the
// diagonal of the Hessian, and one single-direction jet per axis carries it
// exactly.
struct Jet4 {
    double value = 0.0;
    Eigen::Vector4d grad = Eigen::Vector4d::Zero();
    Eigen::Vector4d second = Eigen::Vector4d::Zero();
};

// Batch of jets over S samples and `width` neurons. Values are an S x w
// matrix; the eight derivative planes (4 gradient, then 4 second, axis order
// t,x,y,z) are stacked row blocks of one (8S) x w matrix so an affine layer
// is two GEMMs. A value-only batch has an empty `der`; the value pipeline is
// then bit-identical to the jet pipeline's value component because it runs
// the same shaped operations.
class JetBatch {
public:
    JetBatch() = default;

    static JetBatch values(Eigen::MatrixXd vals);
    static JetBatch zeros(Eigen::Index samples, Eigen::Index width,
                          bool with_derivs);
    static JetBatch from_jets(const std::vector<Jet4>& jets);  // width 1

    Eigen::Index samples() const { return val.rows(); }
    Eigen::Index width() const { return val.cols(); }
    bool has_derivs() const { return der.size() > 0; }

    auto grad(int axis) {
        return der.middleRows(Eigen::Index(axis) * val.rows(), val.rows());
    }
    auto grad(int axis) const {
        return der.middleRows(Eigen::Index(axis) * val.rows(), val.rows());
    }
    auto second(int axis) {
        return der.middleRows(Eigen::Index(4 + axis) * val.rows(), val.rows());
    }
    auto second(int axis) const {
        return der.middleRows(Eigen::Index(4 + axis) * val.rows(), val.rows());
    }

    Jet4 jet_at(Eigen::Index sample, Eigen::Index col) const;
    std::vector<Jet4> column_jets(Eigen::Index col = 0) const;

    Eigen::MatrixXd val;  // S x w
    Eigen::MatrixXd der;  // 8S x w, or empty for value-only batches
    int node = -1;        // producing tape node, -1 if detached
};

// Gradients for every registered (weights, bias) slot, in registration order.
struct ParamGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    void add(const ParamGradients& other);
    bool all_finite() const;
};

// A scalar produced on a tape; `node` ties it to its recorded dependencies.
struct TapeScalar {
    double value = 0.0;
    int node = -1;
};

// Linear record of the forward computation. Nodes store their outputs and
// whatever intermediates the adjoint pass needs. Weight/bias arguments are
// captured by reference and must outlive the tape (the convenience wrappers
// below copy instead, so temporaries are safe there). Distinct parameter
// tensors get distinct gradient slots, keyed by storage address, so a layer
// reused across several forward branches accumulates into one slot.
class Tape {
public:
    int input(JetBatch batch);
    int affine(int in, const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias);
    int sine(int in, double omega0);
    int tanh(int in);
    int scale(int in, double alpha);
    int scale_add(int a, int b, double alpha);

    // scale * sum((value - target)^2) over a width-1 batch
    int mse(int in, Eigen::VectorXd targets, double scale);
    // scale * sum(r^2) with r = inv_c2*axis_sq[0]*d2/dt2 - sum_i axis_sq[i]*d2/dxi2,
    // axis_sq holding the squared normalized-to-physical derivative factors
    int wave_residual(int in, double inv_c2, const Eigen::Vector4d& axis_sq,
                      double scale);
    // weighted sum of scalar nodes; zero-coefficient terms are skipped in the
    // adjoint pass so they contribute nothing, bit-exactly
    int combine(std::vector<std::pair<int, double>> terms);

    const JetBatch& out(int node) const;
    double scalar_value(int node) const;
    int node_count() const { return int(nodes_.size()); }
    int param_slots() const { return int(slots_.size()); }

    // Adjoint pass from a scalar loss node. Deterministic accumulation order.
    ParamGradients backprop(int loss_node) const;

    // Recompute every node in place from the leaves; a correct record
    // reproduces all outputs bit-exactly.
    void replay();

    // Copy W/b into tape-owned storage and build an affine node on them.
    int affine_owned(int in, Eigen::MatrixXd weights, Eigen::VectorXd bias);

private:
    enum class Op {
        input,
        affine,
        sine,
        tanh,
        scale,
        scale_add,
        mse,
        wave_residual,
        combine
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        double alpha = 0.0;  // sine omega0, scale/scale_add factor
        const Eigen::MatrixXd* weights = nullptr;
        const Eigen::VectorXd* bias = nullptr;
        int slot = -1;
        JetBatch out;
        Eigen::MatrixXd cos_cache;  // sine only
        double value = 0.0;         // scalar ops
        double scale = 0.0;
        Eigen::VectorXd targets;
        Eigen::VectorXd residual;  // wave_residual cache
        double inv_c2 = 0.0;
        Eigen::Vector4d axis_sq = Eigen::Vector4d::Zero();
        std::vector<std::pair<int, double>> terms;
    };

    int push(Node n);
    void compute(Node& n) const;
    int slot_for(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias);
    void check_jet_node(int id, const char* who) const;

    std::vector<Node> nodes_;
    std::vector<std::pair<const Eigen::MatrixXd*, const Eigen::VectorXd*>> slots_;
    std::vector<std::unique_ptr<Eigen::MatrixXd>> owned_weights_;
    std::vector<std::unique_ptr<Eigen::VectorXd>> owned_biases_;
};

// Spec-shaped convenience API. Each call records on the tape and returns a
// copy of the node output tagged with its node id, so chained calls stay
// connected for backprop.
JetBatch jet_affine(const JetBatch& input, const Eigen::MatrixXd& weights,
                    const Eigen::VectorXd& bias, Tape& tape);
JetBatch jet_sine(const JetBatch& input, double omega0, Tape& tape);
JetBatch jet_tanh(const JetBatch& input, Tape& tape);
JetBatch jet_scale_add(const JetBatch& a, const JetBatch& b, double alpha,
                       Tape& tape);
TapeScalar mse_loss(const JetBatch& prediction, const Eigen::VectorXd& targets,
                    double scale, Tape& tape);
TapeScalar wave_residual_loss(const JetBatch& jets, double inv_c2,
                              const Eigen::Vector4d& axis_sq, double scale,
                              Tape& tape);
TapeScalar combine_losses(const std::vector<std::pair<TapeScalar, double>>& terms,
                          Tape& tape);
ParamGradients backprop(const Tape& tape, const TapeScalar& loss);

}  // namespace rirpinn
