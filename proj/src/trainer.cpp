#include "rirpinn/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <utility>

#include "rirpinn/io_util.hpp"
#include "rirpinn/rng.hpp"

namespace rirpinn {

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
    if (iterations < 1) throw ConfigError("iterations must be positive");
    if (collocation_count < 1)
        throw ConfigError("collocation_count must be positive");
    if (collocation_time_stride < 1)
        throw ConfigError("collocation_time_stride must be positive");
    if (!(lr_init > 0.0)) throw ConfigError("lr_init must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0)
        throw ConfigError("lr_decay must be in (0, 1]");
    if (lr_period < 1) throw ConfigError("lr_period must be positive");
    if (!(lr_floor >= 0.0) || lr_floor > lr_init)
        throw ConfigError("lr_floor must be in [0, lr_init]");
    if (!(beta1 >= 0.0) || beta1 >= 1.0)
        throw ConfigError("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0) || beta2 >= 1.0)
        throw ConfigError("beta2 must be in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
    if (!(amplitude_scale > 0.0))
        throw ConfigError("amplitude_scale must be positive");
    if (checkpoint_interval < 0)
        throw ConfigError("checkpoint_interval must be nonnegative");
    if (threads < 0) throw ConfigError("threads must be nonnegative");
    if (chunk_samples < 1) throw ConfigError("chunk_samples must be positive");
}

OptimizerState make_optimizer_state(const NetworkConfig& cfg) {
    ModelParams shape = init_params(cfg);
    OptimizerState st;
    for (auto& w : shape.weights) {
        st.m.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        st.v.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (auto& b : shape.biases) {
        st.m.biases.push_back(Eigen::VectorXd::Zero(b.size()));
        st.v.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    }
    return st;
}

bool LossTrajectory::all_finite() const {
    for (const auto& r : rows)
        if (!std::isfinite(r.l_err) || !std::isfinite(r.l_pde) ||
            !std::isfinite(r.l_total) || !std::isfinite(r.lr))
            return false;
    return true;
}

double loss_err(const Eigen::VectorXd& predictions,
                const Eigen::VectorXd& targets, Eigen::Index mic_count) {
    if (predictions.size() != targets.size())
        throw DomainError("loss_err: prediction and target lengths differ (" +
                          std::to_string(predictions.size()) + " vs " +
                          std::to_string(targets.size()) + ")");
    if (mic_count < 1) throw DomainError("loss_err: mic_count must be positive");
    return (predictions - targets).squaredNorm() / double(mic_count);
}

double loss_pde(const std::vector<Jet4>& jets, double c,
                const NormalizationMap& norm_map, Eigen::Index point_count) {
    if (point_count < 1)
        throw DomainError("loss_pde: point_count must be positive");
    if (!(c > 0.0)) throw DomainError("loss_pde: speed of sound must be positive");
    const Eigen::Vector4d ds = norm_map.deriv_scale();
    const Eigen::Vector4d axis_sq = ds.cwiseProduct(ds);
    const double inv_c2 = 1.0 / (c * c);
    double sum = 0.0;
    for (const auto& j : jets) {
        for (int i = 0; i < 4; ++i)
            if (!std::isfinite(j.second[i]))
                throw NumericError("loss_pde: non-finite jet second derivative");
        double r = inv_c2 * axis_sq[0] * j.second[0] - axis_sq[1] * j.second[1] -
                   axis_sq[2] * j.second[2] - axis_sq[3] * j.second[3];
        sum += r * r;
    }
    return sum / double(point_count);
}

double total_loss(double l_err, double l_pde, double lambda) {
    return lambda == 0.0 ? l_err : l_err + lambda * l_pde;
}

double lr_schedule(std::int64_t iteration, const TrainConfig& cfg) {
    if (iteration < 0) throw UsageError("lr_schedule: negative iteration");
    double lr = cfg.lr_init *
                std::pow(cfg.lr_decay, double(iteration / cfg.lr_period));
    return std::max(cfg.lr_floor, lr);
}

namespace {

void adam_update(Eigen::Ref<Eigen::MatrixXd> theta,
                 const Eigen::Ref<const Eigen::MatrixXd>& g,
                 Eigen::Ref<Eigen::MatrixXd> m, Eigen::Ref<Eigen::MatrixXd> v,
                 double lr, double bc1, double bc2, const TrainConfig& cfg) {
    m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g.array();
    v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
    theta.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

ParamGradients zero_grads(const ModelParams& p) {
    ParamGradients g;
    for (const auto& w : p.weights)
        g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    for (const auto& b : p.biases)
        g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
    return g;
}

}  // namespace

void adam_step(ModelParams& params, const ParamGradients& grads,
               OptimizerState& state, double lr, const TrainConfig& cfg) {
    if (grads.weights.size() != params.weights.size() ||
        grads.biases.size() != params.biases.size())
        throw UsageError("adam_step: gradient slot count mismatch");
    for (std::size_t l = 0; l < grads.weights.size(); ++l)
        if (!grads.weights[l].allFinite())
            throw NumericError("adam_step: non-finite gradient in weights[" +
                               std::to_string(l) + "]");
    for (std::size_t l = 0; l < grads.biases.size(); ++l)
        if (!grads.biases[l].allFinite())
            throw NumericError("adam_step: non-finite gradient in biases[" +
                               std::to_string(l) + "]");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (std::size_t l = 0; l < params.weights.size(); ++l)
        adam_update(params.weights[l], grads.weights[l], state.m.weights[l],
                    state.v.weights[l], lr, bc1, bc2, cfg);
    for (std::size_t l = 0; l < params.biases.size(); ++l)
        adam_update(params.biases[l], grads.biases[l], state.m.biases[l],
                    state.v.biases[l], lr, bc1, bc2, cfg);
}

double amplitude_gain_for(const RirDataset& dataset, double amplitude_scale) {
    double peak = 0.0;
    for (const auto& sig : dataset.noisy)
        if (sig.samples.size() > 0)
            peak = std::max(peak, sig.samples.cwiseAbs().maxCoeff());
    if (peak == 0.0) return 1.0;
    return amplitude_scale / peak;
}

namespace {

struct ChunkOut {
    double value = 0.0;
    ParamGradients grads;
    bool has_grads = false;
};

// Chunks are computed by any worker but merged strictly in index order, so
// the totals do not depend on the thread count.
template <typename Fn, typename Merge>
void run_chunks_ordered(int jobs, int threads, Fn compute, Merge merge) {
    if (jobs <= 0) return;
    if (threads <= 1 || jobs == 1) {
        for (int j = 0; j < jobs; ++j) merge(j, compute(j));
        return;
    }
    std::mutex mu;
    std::condition_variable cv_ready, cv_space;
    std::map<int, ChunkOut> ready;
    std::exception_ptr err;
    std::atomic<int> next{0};
    int merged = 0;
    bool failed = false;
    const int window = 2 * threads;

    auto worker = [&]() {
        for (;;) {
            int j = next.fetch_add(1);
            if (j >= jobs) return;
            ChunkOut r;
            try {
                r = compute(j);
            } catch (...) {
                std::lock_guard lk(mu);
                if (!failed) {
                    failed = true;
                    err = std::current_exception();
                }
                cv_ready.notify_all();
                cv_space.notify_all();
                return;
            }
            std::unique_lock lk(mu);
            cv_space.wait(lk, [&] { return failed || j < merged + window; });
            if (failed) return;
            ready.emplace(j, std::move(r));
            cv_ready.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);

    {
        std::unique_lock lk(mu);
        for (int j = 0; j < jobs; ++j) {
            cv_ready.wait(lk, [&] { return failed || ready.count(j) > 0; });
            if (failed) break;
            ChunkOut r = std::move(ready.at(j));
            ready.erase(j);
            merged = j + 1;
            cv_space.notify_all();
            lk.unlock();
            merge(j, std::move(r));
            lk.lock();
        }
        if (failed) {
            // Unblock any workers still parked on the window.
            merged = jobs;
            cv_space.notify_all();
        }
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace

TrainResult train(const RirDataset& dataset, const NetworkConfig& net_cfg,
                  const TrainConfig& cfg, const TrainSession& session) {
    net_cfg.validate();
    cfg.validate();
    validate(dataset);

    const Eigen::Index mics = dataset.mic_positions.count();
    if (mics < 1) throw DomainError("training requires at least one microphone");
    const int t_samples = dataset.samples;
    const NormalizationMap& nm = dataset.normalization;

    double gain = session.resume ? session.resume->amplitude_gain
                                 : amplitude_gain_for(dataset, cfg.amplitude_scale);

    // Measurement batch, mic-major: rows m*T+v hold (t_v, x_m, y_m, z_m).
    Eigen::MatrixXd meas_phys(mics * t_samples, 4);
    Eigen::VectorXd targets(mics * t_samples);
    for (Eigen::Index m = 0; m < mics; ++m) {
        const Eigen::Vector3d p = dataset.mic_positions.positions.row(m);
        for (int v = 0; v < t_samples; ++v) {
            const Eigen::Index r = m * t_samples + v;
            meas_phys(r, 0) = double(v) / dataset.fs;
            meas_phys(r, 1) = p.x();
            meas_phys(r, 2) = p.y();
            meas_phys(r, 3) = p.z();
            targets[r] = dataset.noisy[std::size_t(m)].samples[v] * gain;
        }
    }
    const Eigen::MatrixXd meas_norm = nm.to_network(meas_phys);

    std::vector<int> strided_v;
    for (int v = 0; v < t_samples; v += cfg.collocation_time_stride)
        strided_v.push_back(v);
    const Eigen::Index colloc_rows =
        Eigen::Index(cfg.collocation_count) * Eigen::Index(strided_v.size());

    ModelParams params = session.resume ? session.resume->params
                                        : init_params(net_cfg);
    OptimizerState opt;
    std::int64_t start_iter = 0;
    if (session.resume) {
        start_iter = session.resume->iteration;
        if (session.resume->has_adam) {
            opt.m = session.resume->adam_m;
            opt.v = session.resume->adam_v;
            opt.step = session.resume->adam_step;
        } else {
            opt = make_optimizer_state(net_cfg);
        }
    } else {
        opt = make_optimizer_state(net_cfg);
    }

    const Eigen::Vector4d ds = nm.deriv_scale();
    const Eigen::Vector4d axis_sq = ds.cwiseProduct(ds);
    const double c = dataset.room.speed_of_sound;
    const double inv_c2 = 1.0 / (c * c);

    int threads = cfg.threads > 0
                      ? cfg.threads
                      : std::max(1u, std::thread::hardware_concurrency());

    const int chunk = cfg.chunk_samples;
    const int meas_jobs = int((meas_norm.rows() + chunk - 1) / chunk);
    const int colloc_jobs = int((colloc_rows + chunk - 1) / chunk);

    std::ofstream log;
    if (!session.log_path.empty()) {
        const bool append = session.resume != nullptr &&
                            std::filesystem::exists(session.log_path);
        log.open(session.log_path, append ? std::ios::app : std::ios::trunc);
        if (!log) throw ConfigError("cannot open training log " + session.log_path);
        if (!append) log << "iteration,l_err,l_pde,l_total,lr,wall_ms\n";
    }

    auto write_ckpt = [&](std::int64_t next_iteration) {
        if (session.checkpoint_path.empty()) return;
        Checkpoint ck;
        ck.config = net_cfg;
        ck.params = params;
        ck.iteration = next_iteration;
        ck.amplitude_gain = gain;
        ck.normalization = nm;
        ck.dataset_id = session.dataset_id;
        ck.has_adam = true;
        ck.adam_m = opt.m;
        ck.adam_v = opt.v;
        ck.adam_step = opt.step;
        save_checkpoint(ck, session.checkpoint_path);
    };

    TrainResult out;
    LossTrajectory& traj = out.trajectory;

    for (std::int64_t k = start_iter; k < cfg.iterations; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_schedule(k, cfg);

        PointSet cp = sample_collocation(dataset.region_half_width,
                                         cfg.collocation_count, cfg.seed,
                                         std::uint64_t(k));
        Eigen::MatrixXd colloc_phys(colloc_rows, 4);
        for (int pidx = 0; pidx < cfg.collocation_count; ++pidx) {
            const Eigen::Vector3d p = cp.positions.row(pidx);
            for (std::size_t s = 0; s < strided_v.size(); ++s) {
                const Eigen::Index r =
                    Eigen::Index(pidx) * Eigen::Index(strided_v.size()) +
                    Eigen::Index(s);
                colloc_phys(r, 0) = double(strided_v[s]) / dataset.fs;
                colloc_phys(r, 1) = p.x();
                colloc_phys(r, 2) = p.y();
                colloc_phys(r, 3) = p.z();
            }
        }
        const Eigen::MatrixXd colloc_norm = nm.to_network(colloc_phys);

        double l_err = 0.0;
        double l_pde = 0.0;
        ParamGradients grads = zero_grads(params);

        auto compute = [&](int j) -> ChunkOut {
            ChunkOut res;
            Tape tape;
            if (j < meas_jobs) {
                const Eigen::Index r0 = Eigen::Index(j) * chunk;
                const Eigen::Index len =
                    std::min<Eigen::Index>(chunk, meas_norm.rows() - r0);
                int in = tape.input(
                    make_input_batch(meas_norm.middleRows(r0, len), false));
                int head = forward_on_tape(tape, params, net_cfg, in);
                int ln = tape.mse(head, targets.segment(r0, len), 1.0 / double(mics));
                res.value = tape.scalar_value(ln);
                res.grads = tape.backprop(ln);
                res.has_grads = true;
            } else {
                const Eigen::Index r0 = Eigen::Index(j - meas_jobs) * chunk;
                const Eigen::Index len =
                    std::min<Eigen::Index>(chunk, colloc_rows - r0);
                int in = tape.input(
                    make_input_batch(colloc_norm.middleRows(r0, len), true));
                int head = forward_on_tape(tape, params, net_cfg, in);
                int wn = tape.wave_residual(head, inv_c2, axis_sq,
                                            1.0 / double(cfg.collocation_count));
                res.value = tape.scalar_value(wn);
                if (cfg.lambda != 0.0) {
                    int cn = tape.combine({{wn, cfg.lambda}});
                    res.grads = tape.backprop(cn);
                    res.has_grads = true;
                }
            }
            return res;
        };
        auto merge = [&](int j, ChunkOut r) {
            if (j < meas_jobs)
                l_err += r.value;
            else
                l_pde += r.value;
            if (r.has_grads) grads.add(r.grads);
        };

        try {
            run_chunks_ordered(meas_jobs + colloc_jobs, threads, compute, merge);
            const double l_total = total_loss(l_err, l_pde, cfg.lambda);
            if (!std::isfinite(l_total))
                throw NumericError("training loss became non-finite at iteration " +
                                   std::to_string(k));
            adam_step(params, grads, opt, lr, cfg);
            const double wall_ms =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
            traj.rows.push_back({k, l_err, l_pde, l_total, lr, wall_ms});
            if (log)
                log << k << ',' << format_double(l_err) << ','
                    << format_double(l_pde) << ',' << format_double(l_total)
                    << ',' << format_double(lr) << ',' << format_double(wall_ms)
                    << '\n';
        } catch (const NumericError&) {
            // Parameters were not updated this iteration; persist them as the
            // last good state before propagating.
            write_ckpt(k);
            if (log) log.flush();
            throw;
        }

        if (cfg.checkpoint_interval > 0 &&
            (k + 1) % cfg.checkpoint_interval == 0 && k + 1 < cfg.iterations) {
            write_ckpt(k + 1);
            if (log) log.flush();
        }
    }

    write_ckpt(cfg.iterations);
    if (log) log.flush();

    out.params = std::move(params);
    out.opt = std::move(opt);
    out.amplitude_gain = gain;
    out.iterations_done = cfg.iterations - start_iter;
    return out;
}

}  // namespace rirpinn
