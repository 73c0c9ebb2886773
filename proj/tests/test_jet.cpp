#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "rirpinn/common.hpp"
#include "rirpinn/jet.hpp"
#include "rirpinn/network.hpp"
#include "rirpinn/rng.hpp"
#include "support/finite_diff.hpp"

using namespace rirpinn;
using testutil::fd_first;
using testutil::fd_second;
using testutil::rel_err;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                              double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.uniform(-scale, scale);
    return m;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-scale, scale);
    return v;
}

Eigen::MatrixXd random_points(Eigen::Index n, Rng& rng, double box = 0.9) {
    return random_matrix(n, 4, rng, box);
}

}  // namespace

TEST_CASE("affine jets propagate exactly") {
    Rng rng(21);
    const Eigen::MatrixXd points = random_points(4, rng);
    const Eigen::MatrixXd W = random_matrix(4, 3, rng);
    const Eigen::VectorXd b = random_vector(3, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int out = tape.affine(in, W, b);
    const JetBatch& batch = tape.out(out);

    for (Eigen::Index s = 0; s < 4; ++s) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            const Jet4 jet = batch.jet_at(s, j);
            const double expect =
                (points.row(s) * W.col(j))(0) + b(j);
            CHECK(std::abs(jet.value - expect) < 1e-15);
            for (int axis = 0; axis < 4; ++axis) {
                CHECK(jet.grad(axis) == W(axis, j));
                CHECK(jet.second(axis) == 0.0);
            }
        }
    }
}

TEST_CASE("sine jets follow the chain rule formulas") {
    Rng rng(22);
    const double omega = 7.0;
    const Eigen::MatrixXd points = random_points(5, rng);
    const Eigen::MatrixXd W = random_matrix(4, 3, rng);
    const Eigen::VectorXd b = random_vector(3, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int aff = tape.affine(in, W, b);
    const int out = tape.sine(aff, omega);
    const JetBatch& batch = tape.out(out);

    for (Eigen::Index s = 0; s < 5; ++s) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            const double a = (points.row(s) * W.col(j))(0) + b(j);
            const Jet4 jet = batch.jet_at(s, j);
            CHECK(std::abs(jet.value - std::sin(omega * a)) < 1e-13);
            for (int axis = 0; axis < 4; ++axis) {
                const double g = W(axis, j);
                const double grad = omega * std::cos(omega * a) * g;
                const double second =
                    -omega * omega * std::sin(omega * a) * g * g;
                CHECK(std::abs(jet.grad(axis) - grad) < 1e-12);
                CHECK(std::abs(jet.second(axis) - second) < 1e-11);
            }
        }
    }
}

TEST_CASE("tanh jets follow the chain rule formulas") {
    Rng rng(23);
    const Eigen::MatrixXd points = random_points(5, rng);
    const Eigen::MatrixXd W = random_matrix(4, 3, rng);
    const Eigen::VectorXd b = random_vector(3, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int aff = tape.affine(in, W, b);
    const int out = tape.tanh(aff);
    const JetBatch& batch = tape.out(out);

    for (Eigen::Index s = 0; s < 5; ++s) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            const double a = (points.row(s) * W.col(j))(0) + b(j);
            const double u = std::tanh(a);
            const double d = 1.0 - u * u;
            const Jet4 jet = batch.jet_at(s, j);
            CHECK(std::abs(jet.value - u) < 1e-13);
            for (int axis = 0; axis < 4; ++axis) {
                const double g = W(axis, j);
                CHECK(std::abs(jet.grad(axis) - d * g) < 1e-13);
                CHECK(std::abs(jet.second(axis) + 2.0 * u * d * g * g) < 1e-12);
            }
        }
    }
}

TEST_CASE("scale and scale_add combine jets linearly") {
    Rng rng(24);
    const Eigen::MatrixXd points = random_points(3, rng);
    const Eigen::MatrixXd W = random_matrix(4, 4, rng);
    const Eigen::VectorXd b = random_vector(4, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int aff = tape.affine(in, W, b);
    const int s1 = tape.sine(aff, 2.0);
    const int summed = tape.scale_add(s1, in, 1.0);
    const int halved = tape.scale(summed, 0.5);

    const JetBatch& xs = tape.out(s1);
    const JetBatch& xin = tape.out(in);
    const JetBatch& xh = tape.out(halved);
    CHECK(((xs.val + xin.val) * 0.5 - xh.val).cwiseAbs().maxCoeff() == 0.0);
    CHECK(((xs.der + xin.der) * 0.5 - xh.der).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deep composite jets agree with finite differences") {
    Rng rng(25);
    const double omega = 7.0;
    const Eigen::MatrixXd W1 = random_matrix(4, 5, rng, 0.8);
    const Eigen::VectorXd b1 = random_vector(5, rng, 0.5);
    const Eigen::MatrixXd W2 = random_matrix(5, 5, rng, 0.8);
    const Eigen::VectorXd b2 = random_vector(5, rng, 0.5);
    const Eigen::MatrixXd W3 = random_matrix(5, 1, rng, 0.8);
    const Eigen::VectorXd b3 = random_vector(1, rng, 0.5);

    // Independent scalar evaluation with libm transcendentals.
    const auto ref = [&](const Eigen::RowVector4d& p) {
        Eigen::RowVectorXd h = p * W1 + b1.transpose();
        h = h.unaryExpr([&](double v) { return std::sin(omega * v); });
        h = (h * W2 + b2.transpose()).eval();
        h = h.unaryExpr([](double v) { return std::tanh(v); });
        return (h * W3)(0) + b3(0);
    };

    const Eigen::MatrixXd points = random_points(5, rng, 0.8);
    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int out = tape.affine(
        tape.tanh(tape.affine(tape.sine(tape.affine(in, W1, b1), omega), W2, b2)),
        W3, b3);
    const JetBatch& batch = tape.out(out);

    for (Eigen::Index s = 0; s < points.rows(); ++s) {
        const Eigen::RowVector4d base = points.row(s);
        const Jet4 jet = batch.jet_at(s, 0);
        CHECK(std::abs(jet.value - ref(base)) < 1e-12);
        for (int axis = 0; axis < 4; ++axis) {
            const auto along = [&](double t) {
                Eigen::RowVector4d p = base;
                p(axis) += t;
                return ref(p);
            };
            const double g = fd_first(along, 0.0, 1e-4);
            const double g2 = fd_second(along, 0.0, 1e-3);
            CHECK(rel_err(jet.grad(axis), g) < 1e-6);
            CHECK(rel_err(jet.second(axis), g2, 1e-4) < 1e-5);
        }
    }
}

TEST_CASE("value-only batches run the identical value pipeline") {
    Rng rng(26);
    const double omega = 7.0;
    const Eigen::MatrixXd points = random_points(16, rng);
    const Eigen::MatrixXd W1 = random_matrix(4, 6, rng);
    const Eigen::VectorXd b1 = random_vector(6, rng);
    const Eigen::MatrixXd W2 = random_matrix(6, 1, rng);
    const Eigen::VectorXd b2 = random_vector(1, rng);

    const auto run = [&](bool with_derivs) {
        Tape tape;
        const int in = tape.input(with_derivs
                                      ? make_input_batch(points, true)
                                      : JetBatch::values(points));
        const int out =
            tape.affine(tape.sine(tape.affine(in, W1, b1), omega), W2, b2);
        return Eigen::MatrixXd(tape.out(out).val);
    };

    const Eigen::MatrixXd with = run(true);
    const Eigen::MatrixXd without = run(false);
    CHECK((with.array() == without.array()).all());
}

TEST_CASE("mse gradients match finite differences of the tape loss") {
    Rng rng(27);
    const Eigen::MatrixXd points = random_points(6, rng);
    Eigen::MatrixXd W1 = random_matrix(4, 3, rng);
    Eigen::VectorXd b1 = random_vector(3, rng);
    Eigen::MatrixXd W2 = random_matrix(3, 1, rng);
    Eigen::VectorXd b2 = random_vector(1, rng);
    const Eigen::VectorXd targets = random_vector(6, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int out =
        tape.affine(tape.sine(tape.affine(in, W1, b1), 7.0), W2, b2);
    const int loss = tape.mse(out, targets, 1.0 / 3.0);
    const ParamGradients grads = tape.backprop(loss);
    REQUIRE(grads.weights.size() == 2);

    const auto loss_at = [&]() {
        tape.replay();
        return tape.scalar_value(loss);
    };

    const auto check_entry = [&](double& entry, double grad) {
        const double saved = entry;
        const auto f = [&](double v) {
            entry = v;
            return loss_at();
        };
        const double fd = fd_first(f, saved, 1e-5);
        entry = saved;
        CHECK(rel_err(grad, fd, 1e-7) < 1e-5);
    };

    for (Eigen::Index i = 0; i < W1.size(); ++i)
        check_entry(W1.data()[i], grads.weights[0].data()[i]);
    for (Eigen::Index i = 0; i < b1.size(); ++i)
        check_entry(b1(i), grads.biases[0](i));
    for (Eigen::Index i = 0; i < W2.size(); ++i)
        check_entry(W2.data()[i], grads.weights[1].data()[i]);
    check_entry(b2(0), grads.biases[1](0));
    loss_at();  // restore recorded state
}

TEST_CASE("wave residual matches a manual jet computation and its gradient "
          "matches finite differences") {
    Rng rng(28);
    const Eigen::MatrixXd points = random_points(5, rng);
    Eigen::MatrixXd W1 = random_matrix(4, 4, rng);
    Eigen::VectorXd b1 = random_vector(4, rng);
    Eigen::MatrixXd W2 = random_matrix(4, 1, rng);
    Eigen::VectorXd b2 = random_vector(1, rng);

    const double inv_c2 = 1.0 / (343.0 * 343.0);
    const Eigen::Vector4d axis_sq(1600.0, 44.4, 44.4, 44.4);
    const double scale = 1.0 / 5.0;

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int out =
        tape.affine(tape.sine(tape.affine(in, W1, b1), 7.0), W2, b2);
    const int loss = tape.wave_residual(out, inv_c2, axis_sq, scale);

    // Reference from the per-sample jets.
    double expect = 0.0;
    const std::vector<Jet4> jets = tape.out(out).column_jets(0);
    for (const Jet4& jet : jets) {
        double r = inv_c2 * axis_sq(0) * jet.second(0);
        for (int axis = 1; axis < 4; ++axis)
            r -= axis_sq(axis) * jet.second(axis);
        expect += r * r;
    }
    expect *= scale;
    CHECK(rel_err(tape.scalar_value(loss), expect) < 1e-14);

    const ParamGradients grads = tape.backprop(loss);
    const auto loss_at = [&]() {
        tape.replay();
        return tape.scalar_value(loss);
    };
    const auto check_entry = [&](double& entry, double grad) {
        const double saved = entry;
        const auto f = [&](double v) {
            entry = v;
            return loss_at();
        };
        const double fd = fd_first(f, saved, 1e-5);
        entry = saved;
        CHECK(rel_err(grad, fd, 1e-4) < 1e-4);
    };
    for (Eigen::Index i = 0; i < W1.size(); ++i)
        check_entry(W1.data()[i], grads.weights[0].data()[i]);
    for (Eigen::Index i = 0; i < b1.size(); ++i)
        check_entry(b1(i), grads.biases[0](i));
    for (Eigen::Index i = 0; i < W2.size(); ++i)
        check_entry(W2.data()[i], grads.weights[1].data()[i]);
    loss_at();
}

TEST_CASE("a zero combine coefficient leaves gradients bit-identical") {
    Rng rng(29);
    const Eigen::MatrixXd points = random_points(8, rng);
    const Eigen::MatrixXd W1 = random_matrix(4, 4, rng);
    const Eigen::VectorXd b1 = random_vector(4, rng);
    const Eigen::MatrixXd W2 = random_matrix(4, 1, rng);
    const Eigen::VectorXd b2 = random_vector(1, rng);
    const Eigen::VectorXd targets = random_vector(8, rng);
    const Eigen::Vector4d axis_sq(1600.0, 44.4, 44.4, 44.4);

    const auto build = [&](Tape& tape, bool with_wave) {
        const int in = tape.input(make_input_batch(points, true));
        const int out =
            tape.affine(tape.sine(tape.affine(in, W1, b1), 7.0), W2, b2);
        const int err = tape.mse(out, targets, 0.125);
        if (!with_wave) return err;
        const int wave = tape.wave_residual(out, 1e-5, axis_sq, 0.125);
        return tape.combine({{err, 1.0}, {wave, 0.0}});
    };

    Tape plain, ablated;
    const ParamGradients a = plain.backprop(build(plain, false));
    const ParamGradients b = ablated.backprop(build(ablated, true));
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        CHECK((a.weights[l].array() == b.weights[l].array()).all());
        CHECK((a.biases[l].array() == b.biases[l].array()).all());
    }
}

TEST_CASE("combine weights scalar losses and their adjoints") {
    Rng rng(30);
    const Eigen::MatrixXd points = random_points(6, rng);
    const Eigen::MatrixXd W1 = random_matrix(4, 4, rng);
    const Eigen::VectorXd b1 = random_vector(4, rng);
    const Eigen::MatrixXd W2 = random_matrix(4, 1, rng);
    const Eigen::VectorXd b2 = random_vector(1, rng);
    const Eigen::VectorXd targets = random_vector(6, rng);
    const Eigen::Vector4d axis_sq(100.0, 10.0, 10.0, 10.0);
    const double lambda = 1e-3;

    const auto forward = [&](Tape& tape) {
        const int in = tape.input(make_input_batch(points, true));
        return tape.affine(tape.sine(tape.affine(in, W1, b1), 7.0), W2, b2);
    };

    Tape tape;
    const int head = forward(tape);
    const int err = tape.mse(head, targets, 0.5);
    const int wave = tape.wave_residual(head, 1e-5, axis_sq, 0.25);
    const int total = tape.combine({{err, 1.0}, {wave, lambda}});
    CHECK(tape.scalar_value(total) ==
          doctest::Approx(tape.scalar_value(err) +
                          lambda * tape.scalar_value(wave))
              .epsilon(1e-15));

    const ParamGradients combined = tape.backprop(total);

    Tape t_err, t_wave;
    const ParamGradients g_err = t_err.backprop(
        t_err.mse(forward(t_err), targets, 0.5));
    const ParamGradients g_wave = t_wave.backprop(
        t_wave.wave_residual(forward(t_wave), 1e-5, axis_sq, 0.25));

    for (std::size_t l = 0; l < combined.weights.size(); ++l) {
        const Eigen::MatrixXd expect =
            g_err.weights[l] + lambda * g_wave.weights[l];
        CHECK((combined.weights[l] - expect).cwiseAbs().maxCoeff() <
              1e-12 * (1.0 + expect.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("replay reproduces outputs and sees parameter mutations") {
    Rng rng(31);
    const Eigen::MatrixXd points = random_points(7, rng);
    Eigen::MatrixXd W = random_matrix(4, 3, rng);
    const Eigen::VectorXd b = random_vector(3, rng);

    Tape tape;
    const int in = tape.input(make_input_batch(points, true));
    const int out = tape.sine(tape.affine(in, W, b), 7.0);
    const Eigen::MatrixXd before_val = tape.out(out).val;
    const Eigen::MatrixXd before_der = tape.out(out).der;

    tape.replay();
    CHECK((tape.out(out).val.array() == before_val.array()).all());
    CHECK((tape.out(out).der.array() == before_der.array()).all());

    W *= 2.0;
    tape.replay();
    Tape fresh;
    const int fin = fresh.input(make_input_batch(points, true));
    const int fout = fresh.sine(fresh.affine(fin, W, b), 7.0);
    CHECK((tape.out(out).val.array() == fresh.out(fout).val.array()).all());
    CHECK((tape.out(out).der.array() == fresh.out(fout).der.array()).all());
}

TEST_CASE("parameter slots deduplicate by storage identity") {
    Rng rng(32);
    const Eigen::MatrixXd points = random_points(4, rng);
    const Eigen::MatrixXd W = random_matrix(4, 4, rng);
    const Eigen::VectorXd b = random_vector(4, rng);
    const Eigen::MatrixXd W_copy = W;
    const Eigen::VectorXd b_copy = b;
    const Eigen::MatrixXd Wh = random_matrix(4, 1, rng);
    const Eigen::VectorXd bh = random_vector(1, rng);
    const Eigen::VectorXd targets = random_vector(4, rng);

    Tape shared;
    {
        const int in = shared.input(make_input_batch(points, true));
        const int b1 = shared.affine(shared.sine(shared.affine(in, W, b), 3.0),
                                     Wh, bh);
        const int b2 = shared.affine(shared.sine(shared.affine(in, W, b), 3.0),
                                     Wh, bh);
        const int loss = shared.combine({{shared.mse(b1, targets, 1.0), 1.0},
                                         {shared.mse(b2, targets, 1.0), 1.0}});
        CHECK(shared.param_slots() == 2);
        const ParamGradients g = shared.backprop(loss);

        Tape single;
        const int sin_ = single.input(make_input_batch(points, true));
        const int sb = single.affine(
            single.sine(single.affine(sin_, W, b), 3.0), Wh, bh);
        const ParamGradients g1 =
            single.backprop(single.mse(sb, targets, 1.0));
        // Two identical branches accumulate exactly twice the single gradient.
        CHECK(((g.weights[0] - 2.0 * g1.weights[0]).cwiseAbs().maxCoeff()) == 0.0);
        CHECK(((g.weights[1] - 2.0 * g1.weights[1]).cwiseAbs().maxCoeff()) == 0.0);
    }

    Tape distinct;
    const int in = distinct.input(make_input_batch(points, true));
    distinct.affine(in, W, b);
    distinct.affine(in, W_copy, b_copy);
    CHECK(distinct.param_slots() == 2);
}

TEST_CASE("tape rejects malformed usage with the documented errors") {
    Rng rng(33);
    const Eigen::MatrixXd points = random_points(3, rng);
    const Eigen::MatrixXd W = random_matrix(4, 2, rng);
    const Eigen::VectorXd b = random_vector(2, rng);

    {
        Tape tape;
        Eigen::MatrixXd bad = points;
        bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(tape.input(JetBatch::values(bad)), NumericError);
    }
    {
        Tape tape;
        JetBatch malformed = make_input_batch(points, true);
        malformed.der.conservativeResize(7 * points.rows(), 4);
        CHECK_THROWS_AS(tape.input(std::move(malformed)), UsageError);
    }
    {
        Tape tape;
        const int in = tape.input(make_input_batch(points, true));
        const Eigen::MatrixXd wrong = random_matrix(5, 2, rng);
        CHECK_THROWS_AS(tape.affine(in, wrong, b), ConfigError);
        const Eigen::VectorXd short_bias = random_vector(1, rng);
        CHECK_THROWS_AS(tape.affine(in, W, short_bias), ConfigError);
        CHECK_THROWS_AS(tape.sine(in, 0.0), DomainError);
        CHECK_THROWS_AS(tape.sine(in, -1.0), DomainError);

        const int wide = tape.affine(in, W, b);
        CHECK_THROWS_AS(tape.mse(wide, Eigen::VectorXd::Zero(3), 1.0),
                        UsageError);
        CHECK_THROWS_AS(tape.wave_residual(wide, 1.0,
                                           Eigen::Vector4d::Ones(), 1.0),
                        UsageError);
        CHECK_THROWS_AS(tape.combine({{in, 1.0}}), UsageError);
        CHECK_THROWS_AS(tape.backprop(in), UsageError);
        CHECK_THROWS_AS(tape.scalar_value(in), UsageError);

        const Eigen::MatrixXd head_w = random_matrix(2, 1, rng);
        const Eigen::VectorXd head_b = random_vector(1, rng);
        const int head = tape.affine(wide, head_w, head_b);
        CHECK_THROWS_AS(tape.mse(head, Eigen::VectorXd::Zero(5), 1.0),
                        DomainError);
        const int value_only = tape.input(JetBatch::values(points));
        const int vhead = tape.affine(
            tape.affine(value_only, W, b), head_w, head_b);
        CHECK_THROWS_AS(tape.wave_residual(vhead, 1.0,
                                           Eigen::Vector4d::Ones(), 1.0),
                        UsageError);
        const int loss = tape.mse(head, Eigen::VectorXd::Zero(3), 1.0);
        CHECK_THROWS_AS(tape.out(loss), UsageError);
    }
}

TEST_CASE("jet batch converters round-trip") {
    std::vector<Jet4> jets(3);
    for (int i = 0; i < 3; ++i) {
        jets[i].value = i + 0.5;
        jets[i].grad = Eigen::Vector4d(0.1 * i, 1.0, -2.0, 3.0 + i);
        jets[i].second = Eigen::Vector4d(-1.0, 0.25 * i, 2.0, 0.0);
    }
    const JetBatch batch = JetBatch::from_jets(jets);
    REQUIRE(batch.samples() == 3);
    REQUIRE(batch.width() == 1);
    CHECK(batch.has_derivs());
    const std::vector<Jet4> back = batch.column_jets(0);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[i].value == jets[i].value);
        CHECK((back[i].grad.array() == jets[i].grad.array()).all());
        CHECK((back[i].second.array() == jets[i].second.array()).all());
    }
}

TEST_CASE("spec-shaped wrappers stay connected for backprop") {
    Rng rng(34);
    const Eigen::MatrixXd points = random_points(5, rng);
    const Eigen::MatrixXd W1 = random_matrix(4, 3, rng);
    const Eigen::VectorXd b1 = random_vector(3, rng);
    const Eigen::MatrixXd W2 = random_matrix(3, 1, rng);
    const Eigen::VectorXd b2 = random_vector(1, rng);
    const Eigen::VectorXd targets = random_vector(5, rng);

    Tape tape;
    const JetBatch input = make_input_batch(points, true);
    const JetBatch h = jet_sine(jet_affine(input, W1, b1, tape), 7.0, tape);
    const JetBatch head = jet_affine(h, W2, b2, tape);
    const TapeScalar err = mse_loss(head, targets, 0.2, tape);
    const TapeScalar wave = wave_residual_loss(
        head, 1e-5, Eigen::Vector4d(100.0, 10.0, 10.0, 10.0), 0.2, tape);
    const TapeScalar total = combine_losses({{err, 1.0}, {wave, 1e-6}}, tape);
    CHECK(total.value == doctest::Approx(err.value + 1e-6 * wave.value)
                             .epsilon(1e-15));
    const ParamGradients grads = backprop(tape, total);
    CHECK(grads.weights.size() == 2);
    CHECK(grads.all_finite());
    bool nonzero = false;
    for (const auto& w : grads.weights)
        if (w.cwiseAbs().maxCoeff() > 0.0) nonzero = true;
    CHECK(nonzero);
}
