#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "rirpinn/common.hpp"
#include "rirpinn/io_util.hpp"
#include "rirpinn/network.hpp"
#include "rirpinn/rng.hpp"
#include "support/testutil.hpp"

using namespace rirpinn;

namespace {

NetworkConfig make_config(Activation act, bool residual, int depth, int width,
                          std::uint64_t seed = 5) {
    NetworkConfig cfg;
    cfg.activation = act;
    cfg.residual = residual;
    cfg.hidden_layers = depth;
    cfg.width = width;
    cfg.omega0 = 7.0;
    cfg.seed = seed;
    return cfg;
}

Eigen::MatrixXd random_points(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd pts(n, 4);
    for (Eigen::Index i = 0; i < pts.size(); ++i)
        pts.data()[i] = rng.uniform(-0.95, 0.95);
    return pts;
}

// Kolmogorov-Smirnov distance against U(-bound, bound).
double ks_distance(std::vector<double> xs, double bound) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u = (xs[i] + bound) / (2.0 * bound);
        d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - u));
        d = std::max(d, std::abs(u - static_cast<double>(i) / n));
    }
    return d;
}

}  // namespace

TEST_CASE("configuration validation rejects malformed networks") {
    CHECK_THROWS_AS(make_config(Activation::sine, false, 3, 8).validate(),
                    ConfigError);  // odd depth
    CHECK_THROWS_AS(make_config(Activation::sine, false, 0, 8).validate(),
                    ConfigError);
    CHECK_THROWS_AS(make_config(Activation::sine, false, 2, 0).validate(),
                    ConfigError);
    NetworkConfig bad_omega = make_config(Activation::sine, false, 2, 8);
    bad_omega.omega0 = 0.0;
    CHECK_THROWS_AS(bad_omega.validate(), ConfigError);
    NetworkConfig bad_dim = make_config(Activation::sine, false, 2, 8);
    bad_dim.input_dim = 3;
    CHECK_THROWS_AS(bad_dim.validate(), ConfigError);
    make_config(Activation::tanh, true, 6, 16).validate();

    CHECK(std::string(activation_name(Activation::sine)) == "sine");
    CHECK(activation_from_name("tanh") == Activation::tanh);
    CHECK_THROWS_AS(activation_from_name("relu"), ConfigError);
}

TEST_CASE("initialization respects the per-layer bounds") {
    const NetworkConfig sine_cfg = make_config(Activation::sine, false, 4, 64);
    const ModelParams sine_p = init_params(sine_cfg);
    REQUIRE(sine_p.weights.size() == 5);

    const double first_bound = 1.0 / 4.0;
    CHECK(sine_p.weights[0].cwiseAbs().maxCoeff() <= first_bound);
    CHECK(sine_p.weights[0].cwiseAbs().maxCoeff() > 0.5 * first_bound);
    for (std::size_t l = 1; l < sine_p.weights.size(); ++l) {
        const double fan_in = static_cast<double>(sine_p.weights[l].rows());
        const double bound = std::sqrt(6.0 / fan_in) / 7.0;
        CHECK(sine_p.weights[l].cwiseAbs().maxCoeff() <= bound);
        CHECK(sine_p.weights[l].cwiseAbs().maxCoeff() > 0.5 * bound);
    }
    for (const auto& b : sine_p.biases) CHECK(b.cwiseAbs().maxCoeff() == 0.0);

    const NetworkConfig tanh_cfg = make_config(Activation::tanh, false, 4, 64);
    const ModelParams tanh_p = init_params(tanh_cfg);
    for (std::size_t l = 0; l < tanh_p.weights.size(); ++l) {
        const double fan_in = static_cast<double>(tanh_p.weights[l].rows());
        const double fan_out = static_cast<double>(tanh_p.weights[l].cols());
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        CHECK(tanh_p.weights[l].cwiseAbs().maxCoeff() <= bound);
    }

    const ModelParams again = init_params(sine_cfg);
    bool same = true;
    for (std::size_t l = 0; l < sine_p.weights.size(); ++l)
        if (!(again.weights[l].array() == sine_p.weights[l].array()).all())
            same = false;
    CHECK(same);
    NetworkConfig other = sine_cfg;
    other.seed = 6;
    const ModelParams differ = init_params(other);
    CHECK(!(differ.weights[0].array() == sine_p.weights[0].array()).all());
}

TEST_CASE("first-layer weights are uniform over the documented interval") {
    std::vector<double> draws;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        NetworkConfig cfg = make_config(Activation::sine, false, 2, 256, seed);
        const ModelParams p = init_params(cfg);
        for (Eigen::Index i = 0; i < p.weights[0].size(); ++i)
            draws.push_back(p.weights[0].data()[i]);
    }
    const double n = static_cast<double>(draws.size());
    const double d = ks_distance(std::move(draws), 0.25);
    // 1% critical value for the one-sample KS statistic.
    CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("parameter bookkeeping matches the architecture") {
    const NetworkConfig cfg = make_config(Activation::sine, false, 2, 8);
    const ModelParams p = init_params(cfg);
    CHECK(p.parameter_count() == (4 * 8 + 8) + (8 * 8 + 8) + (8 * 1 + 1));
    check_param_shapes(p, cfg);

    ModelParams wrong = p;
    wrong.weights[1] = Eigen::MatrixXd::Zero(8, 9);
    CHECK_THROWS_AS(check_param_shapes(wrong, cfg), ConfigError);
    ModelParams missing = p;
    missing.weights.pop_back();
    CHECK_THROWS_AS(check_param_shapes(missing, cfg), ConfigError);
}

TEST_CASE("zero weights give an identically zero sine network") {
    const NetworkConfig cfg = make_config(Activation::sine, false, 4, 8);
    ModelParams p = init_params(cfg);
    for (auto& w : p.weights) w.setZero();
    const Eigen::MatrixXd pts = random_points(10, 3);
    const Eigen::VectorXd vals = forward_value(p, cfg, pts);
    CHECK(vals.cwiseAbs().maxCoeff() == 0.0);
    const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
    for (const Jet4& jet : jets) {
        CHECK(jet.value == 0.0);
        CHECK(jet.grad.cwiseAbs().maxCoeff() == 0.0);
        CHECK(jet.second.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("width-one networks match hand-derived closed forms") {
    const double w1 = 0.31, b1 = -0.12, w2 = -0.57, b2 = 0.21;
    const double w3 = 1.7, b3 = 0.05;
    const double omega = 7.0;

    const auto set_params = [&](ModelParams& p) {
        p.weights[0].setZero();
        p.weights[0](0, 0) = w1;  // reads only the t coordinate
        p.biases[0](0) = b1;
        p.weights[1](0, 0) = w2;
        p.biases[1](0) = b2;
        p.weights[2](0, 0) = w3;
        p.biases[2](0) = b3;
    };

    Eigen::MatrixXd pts(3, 4);
    pts << 0.3, 0.9, -0.2, 0.4,
          -0.8, 0.1, 0.0, -0.5,
           0.05, -0.6, 0.7, 0.2;

    SUBCASE("plain sine") {
        const NetworkConfig cfg = make_config(Activation::sine, false, 2, 1);
        ModelParams p = init_params(cfg);
        set_params(p);
        const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
        for (Eigen::Index s = 0; s < pts.rows(); ++s) {
            const double t = pts(s, 0);
            const double a1 = w1 * t + b1;
            const double u1 = std::sin(omega * a1);
            const double du1 = omega * std::cos(omega * a1) * w1;
            const double ddu1 = -omega * omega * u1 * w1 * w1;
            const double a2 = w2 * u1 + b2;
            const double da2 = w2 * du1;
            const double dda2 = w2 * ddu1;
            const double u2 = std::sin(omega * a2);
            const double du2 = omega * std::cos(omega * a2) * da2;
            const double ddu2 = omega * std::cos(omega * a2) * dda2 -
                                omega * omega * u2 * da2 * da2;
            CHECK(std::abs(jets[s].value - (w3 * u2 + b3)) < 1e-12);
            CHECK(std::abs(jets[s].grad(0) - w3 * du2) < 1e-12);
            CHECK(std::abs(jets[s].second(0) - w3 * ddu2) < 1e-12);
            CHECK(jets[s].grad(1) == 0.0);
            CHECK(jets[s].second(2) == 0.0);
        }
    }

    SUBCASE("residual sine, one block") {
        const NetworkConfig cfg = make_config(Activation::sine, true, 2, 1);
        ModelParams p = init_params(cfg);
        set_params(p);
        const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
        for (Eigen::Index s = 0; s < pts.rows(); ++s) {
            const double t = pts(s, 0);
            const double a1 = w1 * t + b1;
            const double u1 = std::sin(omega * a1);
            const double du1 = omega * std::cos(omega * a1) * w1;
            const double ddu1 = -omega * omega * u1 * w1 * w1;
            const double a2 = w2 * u1 + b2;
            const double da2 = w2 * du1;
            const double dda2 = w2 * ddu1;
            // First block: no skip, h = 0.5 sin(omega a2).
            const double h = 0.5 * std::sin(omega * a2);
            const double dh = 0.5 * omega * std::cos(omega * a2) * da2;
            const double ddh =
                0.5 * (omega * std::cos(omega * a2) * dda2 -
                       omega * omega * std::sin(omega * a2) * da2 * da2);
            CHECK(std::abs(jets[s].value - (w3 * h + b3)) < 1e-12);
            CHECK(std::abs(jets[s].grad(0) - w3 * dh) < 1e-12);
            CHECK(std::abs(jets[s].second(0) - w3 * ddh) < 1e-12);
        }
    }

    SUBCASE("plain tanh") {
        const NetworkConfig cfg = make_config(Activation::tanh, false, 2, 1);
        ModelParams p = init_params(cfg);
        set_params(p);
        const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
        for (Eigen::Index s = 0; s < pts.rows(); ++s) {
            const double t = pts(s, 0);
            const double a1 = w1 * t + b1;
            const double u1 = std::tanh(a1);
            const double d1 = 1.0 - u1 * u1;
            const double du1 = d1 * w1;
            const double ddu1 = -2.0 * u1 * d1 * w1 * w1;
            const double a2 = w2 * u1 + b2;
            const double da2 = w2 * du1;
            const double dda2 = w2 * ddu1;
            const double u2 = std::tanh(a2);
            const double d2 = 1.0 - u2 * u2;
            const double du2 = d2 * da2;
            const double ddu2 = d2 * dda2 - 2.0 * u2 * d2 * da2 * da2;
            CHECK(std::abs(jets[s].value - (w3 * u2 + b3)) < 1e-12);
            CHECK(std::abs(jets[s].grad(0) - w3 * du2) < 1e-12);
            CHECK(std::abs(jets[s].second(0) - w3 * ddu2) < 1e-12);
        }
    }

    SUBCASE("residual tanh, one block") {
        const NetworkConfig cfg = make_config(Activation::tanh, true, 2, 1);
        ModelParams p = init_params(cfg);
        set_params(p);
        const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
        for (Eigen::Index s = 0; s < pts.rows(); ++s) {
            const double t = pts(s, 0);
            const double u1 = std::tanh(w1 * t + b1);
            const double a2 = w2 * u1 + b2;
            const double h = 0.5 * std::tanh(a2);
            CHECK(std::abs(jets[s].value - (w3 * h + b3)) < 1e-12);
        }
    }
}

TEST_CASE("residual skips add the previous block output unscaled") {
    // Two blocks, width 1: the second block's activation argument is
    // omega*a2 + h_prev, with h_prev NOT multiplied by omega.
    const double omega = 7.0;
    const NetworkConfig cfg = make_config(Activation::sine, true, 4, 1);
    ModelParams p = init_params(cfg);
    const double w[5] = {0.23, -0.41, 0.83, 0.49, 1.3};
    const double b[5] = {0.11, -0.07, 0.02, 0.31, -0.2};
    for (int l = 0; l < 5; ++l) {
        p.weights[l].setZero();
        p.weights[l](0, 0) = w[l];
        p.biases[l](0) = b[l];
    }

    Eigen::MatrixXd pts(2, 4);
    pts << 0.4, 0.0, 0.0, 0.0,
          -0.3, 0.0, 0.0, 0.0;
    const std::vector<Jet4> jets = forward_jets(p, cfg, pts);

    for (Eigen::Index s = 0; s < pts.rows(); ++s) {
        const double t = pts(s, 0);
        const double a1 = w[0] * t + b[0];
        const double a2 = w[1] * std::sin(omega * a1) + b[1];
        const double h0 = 0.5 * std::sin(omega * a2);
        const double a3 = w[2] * h0 + b[2];
        const double a4 = w[3] * std::sin(omega * a3) + b[3];
        const double h1 = 0.5 * std::sin(omega * a4 + h0);
        const double y = w[4] * h1 + b[4];
        CHECK(std::abs(jets[s].value - y) < 1e-12);
    }

    // Dropping every skip changes the two-block output...
    Tape with_skip, no_skip;
    const Eigen::MatrixXd batch = pts;
    const int in1 = with_skip.input(make_input_batch(batch, false));
    const int out1 = forward_on_tape(with_skip, p, cfg, in1, false);
    const int in2 = no_skip.input(make_input_batch(batch, false));
    const int out2 = forward_on_tape(no_skip, p, cfg, in2, true);
    CHECK(!(with_skip.out(out1).val.array() == no_skip.out(out2).val.array()).all());

    // ...but a single-block network has no skip to drop.
    const NetworkConfig one = make_config(Activation::sine, true, 2, 1);
    ModelParams q = init_params(one);
    Tape ta, tb;
    const int ia = ta.input(make_input_batch(batch, false));
    const int ib = tb.input(make_input_batch(batch, false));
    const int oa = forward_on_tape(ta, q, one, ia, false);
    const int ob = forward_on_tape(tb, q, one, ib, true);
    CHECK((ta.out(oa).val.array() == tb.out(ob).val.array()).all());
}

TEST_CASE("value forward is bit-identical to the jet value component") {
    const Eigen::MatrixXd pts = random_points(64, 17);
    for (Activation act : {Activation::sine, Activation::tanh}) {
        for (bool residual : {false, true}) {
            const NetworkConfig cfg = make_config(act, residual, 6, 16);
            const ModelParams p = init_params(cfg);
            const Eigen::VectorXd vals = forward_value(p, cfg, pts);
            const std::vector<Jet4> jets = forward_jets(p, cfg, pts);
            REQUIRE(vals.size() == static_cast<Eigen::Index>(jets.size()));
            bool identical = true;
            for (Eigen::Index i = 0; i < vals.size(); ++i)
                if (vals(i) != jets[static_cast<std::size_t>(i)].value)
                    identical = false;
            CHECK(identical);
        }
    }
}

TEST_CASE("forward rejects out-of-range inputs") {
    const NetworkConfig cfg = make_config(Activation::sine, false, 2, 4);
    const ModelParams p = init_params(cfg);
    Eigen::MatrixXd pts = random_points(3, 8);
    pts(2, 1) = 1.2;
    CHECK_THROWS_AS(forward_value(p, cfg, pts), DomainError);
    CHECK_THROWS_AS(forward_jets(p, cfg, pts), DomainError);
    Eigen::MatrixXd narrow(2, 3);
    narrow.setZero();
    CHECK_THROWS_AS(forward_value(p, cfg, narrow), ConfigError);
}

TEST_CASE("checkpoints round-trip every field bit-exactly") {
    testutil::ScratchDir tmp("checkpoint");
    const NetworkConfig cfg = make_config(Activation::tanh, true, 4, 6, 12);
    Checkpoint ck;
    ck.config = cfg;
    ck.params = init_params(cfg);
    ck.iteration = 12345;
    ck.amplitude_gain = 3.725290298461914e-09;
    ck.normalization = make_normalization(0.15, 400, 8000.0);
    ck.dataset_id = "00ff12ab34cd56ef";
    ck.has_adam = true;
    ck.adam_m = init_params(cfg);
    ck.adam_v = init_params(cfg);
    for (auto& w : ck.adam_v.weights) w = w.cwiseAbs();
    for (auto& b : ck.adam_v.biases) b = b.cwiseAbs();
    ck.adam_step = 777;

    const std::string path = (tmp.path / "ck.json").string();
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);

    CHECK(back.config.activation == cfg.activation);
    CHECK(back.config.residual == cfg.residual);
    CHECK(back.config.hidden_layers == cfg.hidden_layers);
    CHECK(back.config.width == cfg.width);
    CHECK(back.config.omega0 == cfg.omega0);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.iteration == ck.iteration);
    CHECK(back.amplitude_gain == ck.amplitude_gain);
    CHECK(back.dataset_id == ck.dataset_id);
    CHECK((back.normalization.lo.array() == ck.normalization.lo.array()).all());
    CHECK((back.normalization.hi.array() == ck.normalization.hi.array()).all());
    REQUIRE(back.has_adam);
    CHECK(back.adam_step == 777);
    for (std::size_t l = 0; l < ck.params.weights.size(); ++l) {
        CHECK((back.params.weights[l].array() == ck.params.weights[l].array()).all());
        CHECK((back.params.biases[l].array() == ck.params.biases[l].array()).all());
        CHECK((back.adam_m.weights[l].array() == ck.adam_m.weights[l].array()).all());
        CHECK((back.adam_v.weights[l].array() == ck.adam_v.weights[l].array()).all());
    }

    // Without optimizer state.
    ck.has_adam = false;
    save_checkpoint(ck, path);
    CHECK(!load_checkpoint(path).has_adam);
}

TEST_CASE("corrupted checkpoints are rejected") {
    testutil::ScratchDir tmp("checkpoint-bad");
    const NetworkConfig cfg = make_config(Activation::sine, false, 2, 4);
    Checkpoint ck;
    ck.config = cfg;
    ck.params = init_params(cfg);
    ck.normalization = make_normalization(0.15, 100, 4000.0);
    const std::string path = (tmp.path / "ck.json").string();

    save_checkpoint(ck, path);
    nlohmann::json doc = nlohmann::json::parse(read_text_file(path));
    doc["params"]["weights"][0][0][0] = "broken";
    write_text_file(path, doc.dump());
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);

    save_checkpoint(ck, path);
    doc = nlohmann::json::parse(read_text_file(path));
    doc["params"]["weights"][0][0].erase(0);
    write_text_file(path, doc.dump());
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);

    save_checkpoint(ck, path);
    doc = nlohmann::json::parse(read_text_file(path));
    doc["format"] = "something-else";
    write_text_file(path, doc.dump());
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);

    write_text_file(path, "not json at all");
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
}

TEST_CASE("input batches carry basis gradients and zero curvature") {
    const Eigen::MatrixXd pts = random_points(5, 77);
    const JetBatch batch = make_input_batch(pts, true);
    REQUIRE(batch.samples() == 5);
    REQUIRE(batch.width() == 4);
    for (Eigen::Index s = 0; s < 5; ++s) {
        for (Eigen::Index c = 0; c < 4; ++c) {
            const Jet4 jet = batch.jet_at(s, c);
            CHECK(jet.value == pts(s, c));
            for (int axis = 0; axis < 4; ++axis) {
                CHECK(jet.grad(axis) == (axis == c ? 1.0 : 0.0));
                CHECK(jet.second(axis) == 0.0);
            }
        }
    }
    const JetBatch plain = make_input_batch(pts, false);
    CHECK(!plain.has_derivs());
}
