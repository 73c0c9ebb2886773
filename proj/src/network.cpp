#include "rirpinn/network.hpp"

#include <cmath>
#include <utility>

#include <json.hpp>

#include "rirpinn/fastmath.hpp"
#include "rirpinn/io_util.hpp"
#include "rirpinn/rng.hpp"

namespace rirpinn {

using nlohmann::json;

const char* activation_name(Activation a) {
    return a == Activation::sine ? "sine" : "tanh";
}

Activation activation_from_name(const std::string& name) {
    if (name == "sine") return Activation::sine;
    if (name == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + name + "' (expected sine or tanh)");
}

void NetworkConfig::validate() const {
    if (input_dim != 4)
        throw ConfigError("network input dimension must be 4 (t, x, y, z)");
    if (hidden_layers <= 0 || hidden_layers % 2 != 0)
        throw ConfigError("hidden layer count must be a positive even integer, got " +
                          std::to_string(hidden_layers));
    if (width < 1)
        throw ConfigError("network width must be at least 1");
    if (activation == Activation::sine && !(omega0 > 0.0))
        throw ConfigError("omega0 must be positive for sine activation");
}

bool ModelParams::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

Eigen::Index ModelParams::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

namespace {

std::vector<std::pair<int, int>> layer_shapes(const NetworkConfig& cfg) {
    std::vector<std::pair<int, int>> shapes;
    shapes.reserve(static_cast<std::size_t>(cfg.layer_count()));
    shapes.emplace_back(cfg.input_dim, cfg.width);
    for (int n = 1; n < cfg.hidden_layers; ++n)
        shapes.emplace_back(cfg.width, cfg.width);
    shapes.emplace_back(cfg.width, 1);
    return shapes;
}

void validate_points(const Eigen::Ref<const Eigen::MatrixXd>& points) {
    if (points.cols() != 4)
        throw ConfigError("network input batch must have 4 columns (t, x, y, z), got " +
                          std::to_string(points.cols()));
    constexpr double tol = 1.0 + 1e-9;
    for (Eigen::Index j = 0; j < 4; ++j)
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            double v = points(i, j);
            if (!(std::abs(v) <= tol))
                throw DomainError("network input outside [-1, 1] at row " +
                                  std::to_string(i) + ", axis " + std::to_string(j) +
                                  " (value " + format_double(v) + ")");
        }
}

}  // namespace

ModelParams init_params(const NetworkConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    ModelParams p;
    const auto shapes = layer_shapes(cfg);
    p.weights.reserve(shapes.size());
    p.biases.reserve(shapes.size());
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const auto [fan_in, fan_out] = shapes[l];
        double bound;
        if (cfg.activation == Activation::sine)
            bound = l == 0 ? 1.0 / cfg.input_dim
                           : std::sqrt(6.0 / fan_in) / cfg.omega0;
        else
            bound = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_in, fan_out);
        for (Eigen::Index k = 0; k < w.size(); ++k)
            w.data()[k] = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return p;
}

void check_param_shapes(const ModelParams& p, const NetworkConfig& cfg) {
    const auto shapes = layer_shapes(cfg);
    if (p.weights.size() != shapes.size() || p.biases.size() != shapes.size())
        throw ConfigError("parameter layer count " + std::to_string(p.weights.size()) +
                          " does not match configured " + std::to_string(shapes.size()));
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (p.weights[l].rows() != shapes[l].first ||
            p.weights[l].cols() != shapes[l].second ||
            p.biases[l].size() != shapes[l].second)
            throw ConfigError("parameter shapes at layer " + std::to_string(l) +
                              " do not match the architecture");
    }
}

JetBatch make_input_batch(const Eigen::Ref<const Eigen::MatrixXd>& points,
                          bool with_derivs) {
    validate_points(points);
    JetBatch b = JetBatch::zeros(points.rows(), 4, with_derivs);
    b.val = points;
    if (with_derivs)
        for (int i = 0; i < 4; ++i) b.grad(i).col(i).setOnes();
    return b;
}

int forward_on_tape(Tape& tape, const ModelParams& p, const NetworkConfig& cfg,
                    int input_node, bool force_zero_skip) {
    cfg.validate();
    check_param_shapes(p, cfg);
    const bool sine = cfg.activation == Activation::sine;
    const double w0 = sine ? cfg.omega0 : 1.0;
    int cur = input_node;
    if (!cfg.residual) {
        for (int l = 0; l < cfg.hidden_layers; ++l) {
            int a = tape.affine(cur, p.weights[std::size_t(l)], p.biases[std::size_t(l)]);
            cur = sine ? tape.sine(a, w0) : tape.tanh(a);
        }
    } else {
        const int blocks = cfg.hidden_layers / 2;
        for (int r = 0; r < blocks; ++r) {
            const auto& w1 = p.weights[std::size_t(2 * r)];
            const auto& b1 = p.biases[std::size_t(2 * r)];
            const auto& w2 = p.weights[std::size_t(2 * r + 1)];
            const auto& b2 = p.biases[std::size_t(2 * r + 1)];
            int a1 = tape.affine(cur, w1, b1);
            int h = sine ? tape.sine(a1, w0) : tape.tanh(a1);
            int a2 = tape.affine(h, w2, b2);
            int pre = (sine && w0 != 1.0) ? tape.scale(a2, w0) : a2;
            // Block 1 has a 4-wide input that cannot be added to the hidden
            // width, so its skip is omitted.
            if (r > 0 && !force_zero_skip) pre = tape.scale_add(pre, cur, 1.0);
            int act = sine ? tape.sine(pre, 1.0) : tape.tanh(pre);
            cur = tape.scale(act, 0.5);
        }
    }
    const std::size_t head = std::size_t(cfg.hidden_layers);
    return tape.affine(cur, p.weights[head], p.biases[head]);
}

std::vector<Jet4> forward_jets(const ModelParams& p, const NetworkConfig& cfg,
                               const Eigen::Ref<const Eigen::MatrixXd>& points) {
    Tape tape;
    int in = tape.input(make_input_batch(points, true));
    int out = forward_on_tape(tape, p, cfg, in);
    return tape.out(out).column_jets(0);
}

Eigen::VectorXd forward_value(const ModelParams& p, const NetworkConfig& cfg,
                              const Eigen::Ref<const Eigen::MatrixXd>& points) {
    cfg.validate();
    check_param_shapes(p, cfg);
    validate_points(points);
    const bool sine = cfg.activation == Activation::sine;
    const double w0 = sine ? cfg.omega0 : 1.0;

    // Mirrors the tape ops statement for statement so the values come out
    // bit-identical to the jet path.
    auto affine = [&](std::size_t l, const Eigen::MatrixXd& in) {
        Eigen::MatrixXd out;
        out.noalias() = in * p.weights[l];
        out.rowwise() += p.biases[l].transpose();
        return out;
    };
    auto sine_act = [&](const Eigen::MatrixXd& in, double w) {
        Eigen::MatrixXd arg = w * in;
        Eigen::MatrixXd out(arg.rows(), arg.cols());
        fastmath::sin_mat(arg, out);
        return out;
    };
    auto tanh_act = [&](const Eigen::MatrixXd& in) {
        Eigen::MatrixXd out(in.rows(), in.cols());
        fastmath::tanh_mat(in, out);
        return out;
    };

    Eigen::MatrixXd cur = points;
    if (!cfg.residual) {
        for (int l = 0; l < cfg.hidden_layers; ++l) {
            Eigen::MatrixXd a = affine(std::size_t(l), cur);
            cur = sine ? sine_act(a, w0) : tanh_act(a);
        }
    } else {
        const int blocks = cfg.hidden_layers / 2;
        for (int r = 0; r < blocks; ++r) {
            Eigen::MatrixXd a1 = affine(std::size_t(2 * r), cur);
            Eigen::MatrixXd h = sine ? sine_act(a1, w0) : tanh_act(a1);
            Eigen::MatrixXd pre = affine(std::size_t(2 * r + 1), h);
            if (sine && w0 != 1.0) pre = (w0 * pre).eval();
            if (r > 0) pre = (1.0 * (pre + cur)).eval();
            Eigen::MatrixXd act = sine ? sine_act(pre, 1.0) : tanh_act(pre);
            cur = 0.5 * act;
        }
    }
    return affine(std::size_t(cfg.hidden_layers), cur).col(0);
}

namespace {

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd mat_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(what + ": expected a nested array");
    Eigen::MatrixXd m(Eigen::Index(j.size()), Eigen::Index(j[0].size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const json& row = j[std::size_t(i)];
        if (Eigen::Index(row.size()) != m.cols())
            throw ConfigError(what + ": ragged rows");
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(i, c) = row[std::size_t(c)].get<double>();
    }
    return m;
}

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + ": expected an array");
    Eigen::VectorXd v(Eigen::Index(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = j[std::size_t(i)].get<double>();
    return v;
}

json params_to_json(const ModelParams& p) {
    json doc;
    doc["weights"] = json::array();
    doc["biases"] = json::array();
    for (const auto& w : p.weights) doc["weights"].push_back(mat_to_json(w));
    for (const auto& b : p.biases) doc["biases"].push_back(vec_to_json(b));
    return doc;
}

ModelParams params_from_json(const json& doc, const std::string& what) {
    ModelParams p;
    for (const auto& w : doc.at("weights"))
        p.weights.push_back(mat_from_json(w, what + " weights"));
    for (const auto& b : doc.at("biases"))
        p.biases.push_back(vec_from_json(b, what + " biases"));
    return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json doc;
    doc["format"] = "rirpinn-checkpoint-1";
    doc["config"] = {{"activation", activation_name(ckpt.config.activation)},
                     {"residual", ckpt.config.residual},
                     {"hidden_layers", ckpt.config.hidden_layers},
                     {"width", ckpt.config.width},
                     {"omega0", ckpt.config.omega0},
                     {"input_dim", ckpt.config.input_dim},
                     {"seed", ckpt.config.seed}};
    doc["iteration"] = ckpt.iteration;
    doc["amplitude_gain"] = ckpt.amplitude_gain;
    doc["dataset_id"] = ckpt.dataset_id;
    doc["normalization"] = {{"lo", vec_to_json(ckpt.normalization.lo)},
                            {"hi", vec_to_json(ckpt.normalization.hi)}};
    doc["params"] = params_to_json(ckpt.params);
    if (ckpt.has_adam) {
        doc["adam"] = {{"step", ckpt.adam_step},
                       {"m", params_to_json(ckpt.adam_m)},
                       {"v", params_to_json(ckpt.adam_v)}};
    }
    write_text_file(path, doc.dump());
}

Checkpoint load_checkpoint(const std::string& path) {
    Checkpoint ckpt;
    try {
        json doc = json::parse(read_text_file(path));
        if (doc.at("format").get<std::string>() != "rirpinn-checkpoint-1")
            throw ConfigError("unrecognized checkpoint format in " + path);
        const json& c = doc.at("config");
        ckpt.config.activation =
            activation_from_name(c.at("activation").get<std::string>());
        ckpt.config.residual = c.at("residual").get<bool>();
        ckpt.config.hidden_layers = c.at("hidden_layers").get<int>();
        ckpt.config.width = c.at("width").get<int>();
        ckpt.config.omega0 = c.at("omega0").get<double>();
        ckpt.config.input_dim = c.at("input_dim").get<int>();
        ckpt.config.seed = c.at("seed").get<std::uint64_t>();
        ckpt.iteration = doc.at("iteration").get<std::int64_t>();
        ckpt.amplitude_gain = doc.at("amplitude_gain").get<double>();
        ckpt.dataset_id = doc.at("dataset_id").get<std::string>();
        Eigen::VectorXd lo = vec_from_json(doc.at("normalization").at("lo"),
                                           "checkpoint normalization lo");
        Eigen::VectorXd hi = vec_from_json(doc.at("normalization").at("hi"),
                                           "checkpoint normalization hi");
        if (lo.size() != 4 || hi.size() != 4)
            throw ConfigError("checkpoint normalization must have 4 axes");
        ckpt.normalization.lo = lo;
        ckpt.normalization.hi = hi;
        ckpt.params = params_from_json(doc.at("params"), "checkpoint");
        if (doc.contains("adam")) {
            ckpt.has_adam = true;
            ckpt.adam_step = doc.at("adam").at("step").get<std::int64_t>();
            ckpt.adam_m = params_from_json(doc.at("adam").at("m"), "checkpoint adam m");
            ckpt.adam_v = params_from_json(doc.at("adam").at("v"), "checkpoint adam v");
        }
    } catch (const json::exception& e) {
        throw ConfigError("failed to parse checkpoint " + path + ": " + e.what());
    }
    ckpt.config.validate();
    check_param_shapes(ckpt.params, ckpt.config);
    if (!ckpt.params.all_finite())
        throw ConfigError("checkpoint parameters contain non-finite values");
    if (ckpt.has_adam) {
        check_param_shapes(ckpt.adam_m, ckpt.config);
        check_param_shapes(ckpt.adam_v, ckpt.config);
    }
    return ckpt;
}

}  // namespace rirpinn
