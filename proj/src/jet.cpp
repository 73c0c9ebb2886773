#include "rirpinn/jet.hpp"

#include <cmath>
#include <string>

#include "rirpinn/fastmath.hpp"

namespace rirpinn {

JetBatch JetBatch::values(Eigen::MatrixXd vals) {
    JetBatch b;
    b.val = std::move(vals);
    return b;
}

JetBatch JetBatch::zeros(Eigen::Index samples, Eigen::Index width,
                         bool with_derivs) {
    JetBatch b;
    b.val = Eigen::MatrixXd::Zero(samples, width);
    if (with_derivs) b.der = Eigen::MatrixXd::Zero(8 * samples, width);
    return b;
}

JetBatch JetBatch::from_jets(const std::vector<Jet4>& jets) {
    JetBatch b = zeros(Eigen::Index(jets.size()), 1, true);
    for (Eigen::Index i = 0; i < b.samples(); ++i) {
        b.val(i, 0) = jets[std::size_t(i)].value;
        for (int a = 0; a < 4; ++a) {
            b.grad(a)(i, 0) = jets[std::size_t(i)].grad[a];
            b.second(a)(i, 0) = jets[std::size_t(i)].second[a];
        }
    }
    return b;
}

Jet4 JetBatch::jet_at(Eigen::Index sample, Eigen::Index col) const {
    Jet4 j;
    j.value = val(sample, col);
    if (has_derivs())
        for (int a = 0; a < 4; ++a) {
            j.grad[a] = grad(a)(sample, col);
            j.second[a] = second(a)(sample, col);
        }
    return j;
}

std::vector<Jet4> JetBatch::column_jets(Eigen::Index col) const {
    std::vector<Jet4> out(static_cast<std::size_t>(samples()));
    for (Eigen::Index i = 0; i < samples(); ++i) out[std::size_t(i)] = jet_at(i, col);
    return out;
}

void ParamGradients::add(const ParamGradients& other) {
    if (other.weights.size() != weights.size() ||
        other.biases.size() != biases.size())
        throw UsageError("ParamGradients::add: slot count mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += other.weights[i];
    for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += other.biases[i];
}

bool ParamGradients::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

int Tape::slot_for(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias) {
    for (std::size_t i = 0; i < slots_.size(); ++i)
        if (slots_[i].first == &weights && slots_[i].second == &bias)
            return int(i);
    slots_.emplace_back(&weights, &bias);
    return int(slots_.size()) - 1;
}

void Tape::check_jet_node(int id, const char* who) const {
    if (id < 0 || id >= int(nodes_.size()))
        throw UsageError(std::string(who) + ": input node id out of range");
    Op op = nodes_[std::size_t(id)].op;
    if (op == Op::mse || op == Op::wave_residual || op == Op::combine)
        throw UsageError(std::string(who) + ": input node is a scalar, not a batch");
}

int Tape::push(Node n) {
    compute(n);
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

int Tape::input(JetBatch batch) {
    if (!batch.val.allFinite() || (batch.has_derivs() && !batch.der.allFinite()))
        throw NumericError("tape input batch contains non-finite values");
    if (batch.has_derivs() && batch.der.rows() != 8 * batch.val.rows())
        throw UsageError("tape input: derivative block count is not 8 per sample");
    Node n;
    n.op = Op::input;
    n.out = std::move(batch);
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

int Tape::affine(int in, const Eigen::MatrixXd& weights,
                 const Eigen::VectorXd& bias) {
    check_jet_node(in, "jet_affine");
    Node n;
    n.op = Op::affine;
    n.a = in;
    n.weights = &weights;
    n.bias = &bias;
    n.slot = slot_for(weights, bias);
    const JetBatch& x = nodes_[std::size_t(in)].out;
    if (x.width() != weights.rows())
        throw ConfigError("affine layer " + std::to_string(n.slot) +
                          ": input width " + std::to_string(x.width()) +
                          " does not match weight rows " +
                          std::to_string(weights.rows()));
    if (bias.size() != weights.cols())
        throw ConfigError("affine layer " + std::to_string(n.slot) +
                          ": bias length " + std::to_string(bias.size()) +
                          " does not match weight cols " +
                          std::to_string(weights.cols()));
    return push(std::move(n));
}

int Tape::affine_owned(int in, Eigen::MatrixXd weights, Eigen::VectorXd bias) {
    owned_weights_.push_back(std::make_unique<Eigen::MatrixXd>(std::move(weights)));
    owned_biases_.push_back(std::make_unique<Eigen::VectorXd>(std::move(bias)));
    return affine(in, *owned_weights_.back(), *owned_biases_.back());
}

int Tape::sine(int in, double omega0) {
    check_jet_node(in, "jet_sine");
    if (!(omega0 > 0.0)) throw DomainError("jet_sine: omega0 must be > 0");
    Node n;
    n.op = Op::sine;
    n.a = in;
    n.alpha = omega0;
    return push(std::move(n));
}

int Tape::tanh(int in) {
    check_jet_node(in, "jet_tanh");
    Node n;
    n.op = Op::tanh;
    n.a = in;
    return push(std::move(n));
}

int Tape::scale(int in, double alpha) {
    check_jet_node(in, "scale");
    Node n;
    n.op = Op::scale;
    n.a = in;
    n.alpha = alpha;
    return push(std::move(n));
}

int Tape::scale_add(int a, int b, double alpha) {
    check_jet_node(a, "jet_scale_add");
    check_jet_node(b, "jet_scale_add");
    const JetBatch& xa = nodes_[std::size_t(a)].out;
    const JetBatch& xb = nodes_[std::size_t(b)].out;
    if (xa.width() != xb.width())
        throw ConfigError("jet_scale_add: widths differ (" +
                          std::to_string(xa.width()) + " vs " +
                          std::to_string(xb.width()) + ")");
    if (xa.samples() != xb.samples())
        throw ConfigError("jet_scale_add: sample counts differ");
    if (xa.has_derivs() != xb.has_derivs())
        throw UsageError("jet_scale_add: one operand carries derivatives, the other does not");
    Node n;
    n.op = Op::scale_add;
    n.a = a;
    n.b = b;
    n.alpha = alpha;
    return push(std::move(n));
}

int Tape::mse(int in, Eigen::VectorXd targets, double scale) {
    check_jet_node(in, "mse");
    const JetBatch& x = nodes_[std::size_t(in)].out;
    if (x.width() != 1) throw UsageError("mse: prediction batch must have width 1");
    if (targets.size() != x.samples())
        throw DomainError("loss_err: prediction and target lengths differ (" +
                          std::to_string(x.samples()) + " vs " +
                          std::to_string(targets.size()) + ")");
    Node n;
    n.op = Op::mse;
    n.a = in;
    n.targets = std::move(targets);
    n.scale = scale;
    return push(std::move(n));
}

int Tape::wave_residual(int in, double inv_c2, const Eigen::Vector4d& axis_sq,
                        double scale) {
    check_jet_node(in, "wave_residual");
    const JetBatch& x = nodes_[std::size_t(in)].out;
    if (x.width() != 1)
        throw UsageError("wave_residual: jet batch must have width 1");
    if (!x.has_derivs())
        throw UsageError("wave_residual: jet batch carries no derivatives");
    Node n;
    n.op = Op::wave_residual;
    n.a = in;
    n.inv_c2 = inv_c2;
    n.axis_sq = axis_sq;
    n.scale = scale;
    return push(std::move(n));
}

int Tape::combine(std::vector<std::pair<int, double>> terms) {
    for (const auto& [id, coeff] : terms) {
        (void)coeff;
        if (id < 0 || id >= int(nodes_.size()))
            throw UsageError("combine: term node id out of range");
        Op op = nodes_[std::size_t(id)].op;
        if (op != Op::mse && op != Op::wave_residual && op != Op::combine)
            throw UsageError("combine: term is not a scalar node");
    }
    Node n;
    n.op = Op::combine;
    n.terms = std::move(terms);
    return push(std::move(n));
}

void Tape::compute(Node& n) const {
    switch (n.op) {
        case Op::input:
            break;
        case Op::affine: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            n.out.val.noalias() = x.val * (*n.weights);
            n.out.val.rowwise() += n.bias->transpose();
            if (x.has_derivs())
                n.out.der.noalias() = x.der * (*n.weights);
            else
                n.out.der.resize(0, 0);
            break;
        }
        case Op::sine: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            const Eigen::Index s = x.samples();
            const double w = n.alpha;
            Eigen::MatrixXd arg = w * x.val;
            n.out.val.resize(s, x.width());
            n.cos_cache.resize(s, x.width());
            fastmath::sincos_mat(arg, n.out.val, n.cos_cache);
            if (x.has_derivs()) {
                n.out.der.resize(8 * s, x.width());
                const auto u = n.out.val.array();
                const auto c = n.cos_cache.array();
                for (int i = 0; i < 4; ++i) {
                    const auto g = x.grad(i).array();
                    n.out.grad(i) = (w * c * g).matrix();
                    n.out.second(i) =
                        (w * c * x.second(i).array() - (w * w) * u * g * g).matrix();
                }
            } else {
                n.out.der.resize(0, 0);
            }
            break;
        }
        case Op::tanh: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            const Eigen::Index s = x.samples();
            n.out.val.resize(s, x.width());
            fastmath::tanh_mat(x.val, n.out.val);
            if (x.has_derivs()) {
                n.out.der.resize(8 * s, x.width());
                const auto u = n.out.val.array();
                Eigen::ArrayXXd d = 1.0 - u * u;
                for (int i = 0; i < 4; ++i) {
                    const auto g = x.grad(i).array();
                    n.out.grad(i) = (d * g).matrix();
                    n.out.second(i) =
                        (d * x.second(i).array() - 2.0 * u * d * g * g).matrix();
                }
            } else {
                n.out.der.resize(0, 0);
            }
            break;
        }
        case Op::scale: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            n.out.val = n.alpha * x.val;
            if (x.has_derivs())
                n.out.der = n.alpha * x.der;
            else
                n.out.der.resize(0, 0);
            break;
        }
        case Op::scale_add: {
            const JetBatch& xa = nodes_[std::size_t(n.a)].out;
            const JetBatch& xb = nodes_[std::size_t(n.b)].out;
            n.out.val = n.alpha * (xa.val + xb.val);
            if (xa.has_derivs())
                n.out.der = n.alpha * (xa.der + xb.der);
            else
                n.out.der.resize(0, 0);
            break;
        }
        case Op::mse: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            n.value = n.scale * (x.val.col(0) - n.targets).squaredNorm();
            break;
        }
        case Op::wave_residual: {
            const JetBatch& x = nodes_[std::size_t(n.a)].out;
            n.residual = n.inv_c2 * n.axis_sq[0] * x.second(0).col(0) -
                         n.axis_sq[1] * x.second(1).col(0) -
                         n.axis_sq[2] * x.second(2).col(0) -
                         n.axis_sq[3] * x.second(3).col(0);
            if (!n.residual.allFinite())
                throw NumericError("wave residual is non-finite");
            n.value = n.scale * n.residual.squaredNorm();
            break;
        }
        case Op::combine: {
            double acc = 0.0;
            for (const auto& [id, coeff] : n.terms)
                acc += coeff * nodes_[std::size_t(id)].value;
            n.value = acc;
            break;
        }
    }
}

const JetBatch& Tape::out(int node) const {
    if (node < 0 || node >= int(nodes_.size()))
        throw UsageError("Tape::out: node id out of range");
    const Node& n = nodes_[std::size_t(node)];
    if (n.op == Op::mse || n.op == Op::wave_residual || n.op == Op::combine)
        throw UsageError("Tape::out: node is a scalar");
    return n.out;
}

double Tape::scalar_value(int node) const {
    if (node < 0 || node >= int(nodes_.size()))
        throw UsageError("Tape::scalar_value: node id out of range");
    const Node& n = nodes_[std::size_t(node)];
    if (n.op != Op::mse && n.op != Op::wave_residual && n.op != Op::combine)
        throw UsageError("Tape::scalar_value: node is not a scalar");
    return n.value;
}

void Tape::replay() {
    for (auto& n : nodes_) compute(n);
}

namespace {

// Per-node adjoint buffers, allocated on first touch.
struct Adj {
    Eigen::MatrixXd val;
    Eigen::MatrixXd der;
    double s = 0.0;
    bool jet = false;
};

void ensure_jet(Adj& a, const JetBatch& like) {
    if (a.jet) return;
    a.val = Eigen::MatrixXd::Zero(like.samples(), like.width());
    if (like.has_derivs())
        a.der = Eigen::MatrixXd::Zero(8 * like.samples(), like.width());
    a.jet = true;
}

}  // namespace

ParamGradients Tape::backprop(int loss_node) const {
    if (loss_node < 0 || loss_node >= int(nodes_.size()))
        throw UsageError("backprop: loss value has no recorded dependencies on this tape");
    {
        Op op = nodes_[std::size_t(loss_node)].op;
        if (op != Op::mse && op != Op::wave_residual && op != Op::combine)
            throw UsageError("backprop: loss node is not a tape scalar");
    }

    ParamGradients grads;
    grads.weights.reserve(slots_.size());
    grads.biases.reserve(slots_.size());
    for (const auto& [w, b] : slots_) {
        grads.weights.push_back(Eigen::MatrixXd::Zero(w->rows(), w->cols()));
        grads.biases.push_back(Eigen::VectorXd::Zero(b->size()));
    }

    std::vector<Adj> adj(nodes_.size());
    adj[std::size_t(loss_node)].s = 1.0;

    for (int id = loss_node; id >= 0; --id) {
        const Node& n = nodes_[std::size_t(id)];
        Adj& a = adj[std::size_t(id)];
        if (!a.jet && a.s == 0.0) continue;
        switch (n.op) {
            case Op::input:
                break;
            case Op::affine: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                ain.val.noalias() += a.val * n.weights->transpose();
                if (x.has_derivs())
                    ain.der.noalias() += a.der * n.weights->transpose();
                grads.weights[std::size_t(n.slot)].noalias() +=
                    x.val.transpose() * a.val;
                if (x.has_derivs())
                    grads.weights[std::size_t(n.slot)].noalias() +=
                        x.der.transpose() * a.der;
                grads.biases[std::size_t(n.slot)] +=
                    a.val.colwise().sum().transpose();
                break;
            }
            case Op::sine: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                const Eigen::Index s = x.samples();
                const double w = n.alpha;
                const auto u = n.out.val.array();
                const auto c = n.cos_cache.array();
                ain.val.array() += w * c * a.val.array();
                if (x.has_derivs()) {
                    for (int i = 0; i < 4; ++i) {
                        const auto g = x.grad(i).array();
                        const auto s2 = x.second(i).array();
                        auto ag = a.der.middleRows(Eigen::Index(i) * s, s).array();
                        auto as = a.der.middleRows(Eigen::Index(4 + i) * s, s).array();
                        ain.val.array() += -(w * w) * u * g * ag -
                                           ((w * w) * u * s2 + (w * w * w) * c * g * g) * as;
                        ain.der.middleRows(Eigen::Index(i) * s, s).array() +=
                            w * c * ag - 2.0 * (w * w) * u * g * as;
                        ain.der.middleRows(Eigen::Index(4 + i) * s, s).array() +=
                            w * c * as;
                    }
                }
                break;
            }
            case Op::tanh: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                const Eigen::Index s = x.samples();
                const auto u = n.out.val.array();
                Eigen::ArrayXXd d = 1.0 - u * u;
                ain.val.array() += d * a.val.array();
                if (x.has_derivs()) {
                    for (int i = 0; i < 4; ++i) {
                        const auto g = x.grad(i).array();
                        const auto s2 = x.second(i).array();
                        auto ag = a.der.middleRows(Eigen::Index(i) * s, s).array();
                        auto as = a.der.middleRows(Eigen::Index(4 + i) * s, s).array();
                        ain.val.array() += -2.0 * u * d * g * ag -
                                           (2.0 * u * d * s2 + 2.0 * d * (d - 2.0 * u * u) * g * g) * as;
                        ain.der.middleRows(Eigen::Index(i) * s, s).array() +=
                            d * ag - 4.0 * u * d * g * as;
                        ain.der.middleRows(Eigen::Index(4 + i) * s, s).array() +=
                            d * as;
                    }
                }
                break;
            }
            case Op::scale: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                ain.val += n.alpha * a.val;
                if (x.has_derivs()) ain.der += n.alpha * a.der;
                break;
            }
            case Op::scale_add: {
                const JetBatch& xa = nodes_[std::size_t(n.a)].out;
                const JetBatch& xb = nodes_[std::size_t(n.b)].out;
                Adj& aa = adj[std::size_t(n.a)];
                Adj& ab = adj[std::size_t(n.b)];
                ensure_jet(aa, xa);
                ensure_jet(ab, xb);
                aa.val += n.alpha * a.val;
                ab.val += n.alpha * a.val;
                if (xa.has_derivs()) {
                    aa.der += n.alpha * a.der;
                    ab.der += n.alpha * a.der;
                }
                break;
            }
            case Op::mse: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                ain.val.col(0) +=
                    (2.0 * n.scale * a.s) * (x.val.col(0) - n.targets);
                break;
            }
            case Op::wave_residual: {
                const JetBatch& x = nodes_[std::size_t(n.a)].out;
                Adj& ain = adj[std::size_t(n.a)];
                ensure_jet(ain, x);
                const Eigen::Index s = x.samples();
                ain.der.middleRows(4 * s, s).col(0) +=
                    (2.0 * n.scale * n.inv_c2 * n.axis_sq[0] * a.s) * n.residual;
                for (int i = 1; i < 4; ++i)
                    ain.der.middleRows(Eigen::Index(4 + i) * s, s).col(0) -=
                        (2.0 * n.scale * n.axis_sq[i] * a.s) * n.residual;
                break;
            }
            case Op::combine: {
                for (const auto& [id2, coeff] : n.terms)
                    if (coeff != 0.0) adj[std::size_t(id2)].s += coeff * a.s;
                break;
            }
        }
    }
    return grads;
}

namespace {
int attach(const JetBatch& b, Tape& tape) {
    return b.node >= 0 ? b.node : tape.input(b);
}
}  // namespace

JetBatch jet_affine(const JetBatch& input, const Eigen::MatrixXd& weights,
                    const Eigen::VectorXd& bias, Tape& tape) {
    int id = tape.affine_owned(attach(input, tape), weights, bias);
    JetBatch out = tape.out(id);
    out.node = id;
    return out;
}

JetBatch jet_sine(const JetBatch& input, double omega0, Tape& tape) {
    int id = tape.sine(attach(input, tape), omega0);
    JetBatch out = tape.out(id);
    out.node = id;
    return out;
}

JetBatch jet_tanh(const JetBatch& input, Tape& tape) {
    int id = tape.tanh(attach(input, tape));
    JetBatch out = tape.out(id);
    out.node = id;
    return out;
}

JetBatch jet_scale_add(const JetBatch& a, const JetBatch& b, double alpha,
                       Tape& tape) {
    int id = tape.scale_add(attach(a, tape), attach(b, tape), alpha);
    JetBatch out = tape.out(id);
    out.node = id;
    return out;
}

TapeScalar mse_loss(const JetBatch& prediction, const Eigen::VectorXd& targets,
                    double scale, Tape& tape) {
    int id = tape.mse(attach(prediction, tape), targets, scale);
    return {tape.scalar_value(id), id};
}

TapeScalar wave_residual_loss(const JetBatch& jets, double inv_c2,
                              const Eigen::Vector4d& axis_sq, double scale,
                              Tape& tape) {
    int id = tape.wave_residual(attach(jets, tape), inv_c2, axis_sq, scale);
    return {tape.scalar_value(id), id};
}

TapeScalar combine_losses(const std::vector<std::pair<TapeScalar, double>>& terms,
                          Tape& tape) {
    std::vector<std::pair<int, double>> ids;
    ids.reserve(terms.size());
    for (const auto& [ts, coeff] : terms) {
        if (ts.node < 0)
            throw UsageError("combine_losses: term was not recorded on the tape");
        ids.emplace_back(ts.node, coeff);
    }
    int id = tape.combine(std::move(ids));
    return {tape.scalar_value(id), id};
}

ParamGradients backprop(const Tape& tape, const TapeScalar& loss) {
    if (loss.node < 0)
        throw UsageError("backprop: loss value has no recorded dependencies");
    return tape.backprop(loss.node);
}

}  // namespace rirpinn
