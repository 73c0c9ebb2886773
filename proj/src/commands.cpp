#include "rirpinn/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rirpinn/geometry.hpp"
#include "rirpinn/io_util.hpp"
#include "rirpinn/network.hpp"
#include "rirpinn/rng.hpp"
#include "rirpinn/room.hpp"
#include "rirpinn/trainer.hpp"

namespace rirpinn {

namespace fs = std::filesystem;

std::string resolve_output_dir(const ExperimentConfig& config) {
    fs::path dir(config.output_dir);
    if (dir.is_relative()) {
        const char* root = std::getenv("RIRPINN_OUTPUT_ROOT");
        if (root != nullptr && *root != '\0') dir = fs::path(root) / dir;
    }
    return dir.string();
}

namespace {

RoomSpec room_from_config(const ExperimentConfig& config) {
    RoomSpec room;
    room.dimensions = config.room_dims;
    room.speed_of_sound = config.room_c;
    room.max_order = config.room_max_order;
    room.reflection_coeff =
        config.room_rho > 0.0
            ? config.room_rho
            : reflection_coeff_from_t60(config.room_dims, config.room_t60);
    validate(room);
    return room;
}

std::string default_dataset_path(const ExperimentConfig& config) {
    return (fs::path(resolve_output_dir(config)) / "dataset.json").string();
}

std::string dataset_id_for(const std::string& path) {
    return hex64(fnv1a_file(path));
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

template <typename Fn>
void parallel_for(Eigen::Index count, int threads, Fn&& fn) {
    if (count <= 0) return;
    int workers =
        static_cast<int>(std::min<Eigen::Index>(std::max(threads, 1), count));
    if (workers == 1) {
        for (Eigen::Index i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<Eigen::Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                for (Eigen::Index i = next.fetch_add(1); i < count;
                     i = next.fetch_add(1)) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void write_manifest(const ExperimentConfig& config, const RirDataset& dataset,
                    std::size_t image_count, const std::string& dataset_id,
                    const std::string& path) {
    std::ostringstream out;
    out << "dataset=dataset.json\n";
    out << "dataset_id=" << dataset_id << "\n";
    out << "microphones=" << dataset.mic_positions.count() << "\n";
    out << "images=" << image_count << "\n";
    out << "reflection_coeff=" << format_double(dataset.room.reflection_coeff)
        << "\n";
    out << "noise_seed=" << dataset.noise_seed << "\n";
    out << "--- config ---\n";
    out << serialize_config(config);
    write_text_file(path, out.str());
}

bool same_architecture(const NetworkConfig& a, const NetworkConfig& b) {
    return a.activation == b.activation && a.residual == b.residual &&
           a.hidden_layers == b.hidden_layers && a.width == b.width &&
           a.omega0 == b.omega0 && a.input_dim == b.input_dim &&
           a.seed == b.seed;
}

bool same_normalization(const NormalizationMap& a, const NormalizationMap& b) {
    return (a.lo.array() == b.lo.array()).all() &&
           (a.hi.array() == b.hi.array()).all();
}

std::string model_id_for(const NetworkConfig& config) {
    std::string id = activation_name(config.activation);
    id += config.residual ? "-res" : "-plain";
    id += "-n" + std::to_string(config.hidden_layers);
    return id;
}

std::vector<RirSignal> synthesize_truth(const RirDataset& dataset,
                                        const PointSet& grid, int threads) {
    const std::vector<ImageSource> images =
        image_sources(dataset.room, dataset.source);
    std::vector<RirSignal> truth(static_cast<std::size_t>(grid.count()));
    parallel_for(grid.count(), threads, [&](Eigen::Index p) {
        truth[static_cast<std::size_t>(p)] = synthesize_rir(
            images, grid.positions.row(p).transpose(), dataset.fs,
            dataset.samples, dataset.room.speed_of_sound);
    });
    return truth;
}

std::vector<RirSignal> predict_field(const Checkpoint& ckpt,
                                     const RirDataset& dataset,
                                     const PointSet& grid, int threads) {
    const Eigen::Index points = grid.count();
    const Eigen::Index length = dataset.samples;
    Eigen::MatrixXd phys(points * length, 4);
    for (Eigen::Index p = 0; p < points; ++p) {
        for (Eigen::Index v = 0; v < length; ++v) {
            const Eigen::Index r = p * length + v;
            phys(r, 0) = static_cast<double>(v) / dataset.fs;
            phys.row(r).segment<3>(1) = grid.positions.row(p);
        }
    }
    const Eigen::MatrixXd net = dataset.normalization.to_network(phys);

    Eigen::VectorXd values(net.rows());
    const Eigen::Index chunk = 8192;
    const Eigen::Index chunks = (net.rows() + chunk - 1) / chunk;
    parallel_for(chunks, threads, [&](Eigen::Index ci) {
        const Eigen::Index start = ci * chunk;
        const Eigen::Index rows = std::min(chunk, net.rows() - start);
        values.segment(start, rows) =
            forward_value(ckpt.params, ckpt.config, net.middleRows(start, rows));
    });
    if (!values.allFinite())
        throw NumericError("evaluation produced non-finite predictions");

    std::vector<RirSignal> estimates(static_cast<std::size_t>(points));
    const double inv_gain = 1.0 / ckpt.amplitude_gain;
    for (Eigen::Index p = 0; p < points; ++p) {
        RirSignal& sig = estimates[static_cast<std::size_t>(p)];
        sig.fs = dataset.fs;
        sig.samples = values.segment(p * length, length) * inv_gain;
    }
    return estimates;
}

MetricsReport build_report(const EvalBundle& bundle,
                           const ExperimentConfig& config,
                           const RirDataset& dataset, std::string model_id,
                           int depth, std::string dataset_id) {
    MetricsReport report;
    report.overall_nmse_db = nmse(bundle);
    report.bands = band_nmse(bundle, dataset.fs, config.eval_bands);
    const auto parts = split_interp_extrap(bundle, config.eval_sphere_radius);
    report.interp_nmse_db = nmse(parts.first);
    report.extrap_nmse_db = nmse(parts.second);
    const auto phases = split_early_late(bundle, config.eval_t_split, dataset.fs);
    report.early_nmse_db = nmse(phases.first);
    report.late_nmse_db = nmse(phases.second);
    for (double z : config.eval_slices_z)
        report.slices.push_back(spatial_nmse_map(bundle, z));
    report.per_frequency = nmse_per_frequency(bundle, dataset.fs);
    report.model_id = std::move(model_id);
    report.depth = depth;
    report.dataset_id = std::move(dataset_id);
    return report;
}

void write_report_files(const MetricsReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    write_metrics_json(report, (dir / "metrics.json").string());
    write_metrics_csv(report, (dir / "metrics.csv").string());
    write_frequency_csv(report.per_frequency,
                        (dir / "nmse_frequency.csv").string());
    for (const SpatialSlice& slice : report.slices) {
        const std::string stem = "slice_z" + format_double(slice.z);
        write_slice_csv(slice, (dir / (stem + ".csv")).string());
        write_slice_svg(slice, (dir / (stem + ".svg")).string());
    }
}

struct EvalTarget {
    fs::path dir;           // metrics files land here
    std::string ckpt_path;  // empty marks the oracle
};

}  // namespace

SimulateResult cmd_simulate(const ExperimentConfig& config) {
    config.validate();
    const fs::path out(resolve_output_dir(config));
    fs::create_directories(out);

    RirDataset dataset;
    dataset.room = room_from_config(config);
    dataset.source.position = config.source_pos;
    dataset.fs = config.fs;
    dataset.samples = config.samples;
    dataset.snr_db = config.snr_db;
    dataset.noise_seed = substream_seed(config.seed, 1);
    dataset.region_half_width = config.region_half_width;
    dataset.mic_positions = sphere_points(config.array_count, config.array_radius);
    dataset.normalization =
        make_normalization(config.region_half_width, config.samples, config.fs);

    const std::vector<ImageSource> images =
        image_sources(dataset.room, dataset.source);
    const std::size_t mics =
        static_cast<std::size_t>(dataset.mic_positions.count());
    dataset.clean.resize(mics);
    dataset.noisy.resize(mics);
    parallel_for(dataset.mic_positions.count(),
                 resolve_threads(config.train.threads), [&](Eigen::Index m) {
                     RirSignal clean = synthesize_rir(
                         images, dataset.mic_positions.positions.row(m).transpose(),
                         config.fs, config.samples, dataset.room.speed_of_sound);
                     dataset.noisy[static_cast<std::size_t>(m)] = add_noise(
                         clean, config.snr_db,
                         substream_seed(dataset.noise_seed,
                                        static_cast<std::uint64_t>(m)));
                     dataset.clean[static_cast<std::size_t>(m)] = std::move(clean);
                 });
    validate(dataset);

    const std::string ds_path = (out / "dataset.json").string();
    save_dataset(dataset, ds_path);
    const std::string ds_id = dataset_id_for(ds_path);

    write_point_csv(dataset.mic_positions, (out / "mic_positions.csv").string());
    write_text_file((out / "config_resolved.cfg").string(),
                    serialize_config(config));
    write_manifest(config, dataset, images.size(), ds_id,
                   (out / "manifest.txt").string());

    std::cout << "dataset " << ds_id << ": " << mics << " microphones, "
              << images.size() << " images, reflection coefficient "
              << format_double(dataset.room.reflection_coeff) << "\n"
              << "wrote " << ds_path << "\n";
    return SimulateResult{ds_path, ds_id};
}

void cmd_train(const ExperimentConfig& config, const TrainOptions& options) {
    config.validate();
    const fs::path out(resolve_output_dir(config));
    const std::string ds_path = options.dataset_path.empty()
                                    ? default_dataset_path(config)
                                    : options.dataset_path;
    if (!fs::exists(ds_path))
        throw ConfigError("dataset not found: " + ds_path +
                          " (run simulate first)");
    const RirDataset dataset = load_dataset(ds_path);
    const std::string ds_id = dataset_id_for(ds_path);

    std::vector<SweepEntry> entries = sweep_entries(config);
    if (!options.only.empty()) {
        std::vector<SweepEntry> keep;
        for (const std::string& want : options.only) {
            bool found = false;
            for (const SweepEntry& entry : entries) {
                if (entry.id() == want) {
                    keep.push_back(entry);
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("unknown sweep entry: " + want);
        }
        entries = std::move(keep);
    }

    for (const SweepEntry& entry : entries) {
        const fs::path run_dir = out / "runs" / entry.id();
        fs::create_directories(run_dir);
        const std::string ckpt_path = (run_dir / "checkpoint.json").string();
        const NetworkConfig net_cfg = network_config_for(config, entry);
        const TrainConfig train_cfg = train_config_for(config, entry);

        Checkpoint resume;
        bool have_resume = false;
        if (fs::exists(ckpt_path)) {
            resume = load_checkpoint(ckpt_path);
            if (!same_architecture(resume.config, net_cfg))
                throw ConfigError("existing checkpoint in " + run_dir.string() +
                                  " was built for a different network");
            if (resume.dataset_id != ds_id)
                throw ConfigError("existing checkpoint in " + run_dir.string() +
                                  " was trained on a different dataset");
            if (resume.iteration >= train_cfg.iterations) {
                std::cout << entry.id() << ": complete at iteration "
                          << resume.iteration << ", skipping\n";
                continue;
            }
            have_resume = true;
            std::cout << entry.id() << ": resuming from iteration "
                      << resume.iteration << "\n";
        }

        TrainSession session;
        session.checkpoint_path = ckpt_path;
        session.log_path = (run_dir / "log.csv").string();
        session.dataset_id = ds_id;
        session.resume = have_resume ? &resume : nullptr;

        const TrainResult result = train(dataset, net_cfg, train_cfg, session);
        if (result.trajectory.rows.empty()) {
            std::cout << entry.id() << ": no iterations run\n";
        } else {
            const TrajectoryRow& last = result.trajectory.rows.back();
            std::cout << entry.id() << ": iteration " << result.iterations_done
                      << ", loss " << format_double(last.l_total) << " (err "
                      << format_double(last.l_err) << ", pde "
                      << format_double(last.l_pde) << ")\n";
        }
    }
}

void cmd_evaluate(const ExperimentConfig& config,
                  const EvaluateOptions& options) {
    config.validate();
    const fs::path out(resolve_output_dir(config));
    const std::string ds_path = options.dataset_path.empty()
                                    ? default_dataset_path(config)
                                    : options.dataset_path;
    if (!fs::exists(ds_path))
        throw ConfigError("dataset not found: " + ds_path +
                          " (run simulate first)");
    const RirDataset dataset = load_dataset(ds_path);
    const std::string ds_id = dataset_id_for(ds_path);
    const int threads = resolve_threads(config.train.threads);

    std::vector<EvalTarget> targets;
    if (options.oracle) {
        const fs::path dir = options.out_dir.empty() ? out / "oracle"
                                                     : fs::path(options.out_dir);
        targets.push_back(EvalTarget{dir, ""});
    }
    if (!options.checkpoint_path.empty()) {
        if (!fs::exists(options.checkpoint_path))
            throw ConfigError("checkpoint not found: " + options.checkpoint_path);
        fs::path dir = fs::path(options.checkpoint_path).parent_path();
        if (dir.empty()) dir = ".";
        targets.push_back(EvalTarget{dir, options.checkpoint_path});
    }
    for (const std::string& run : options.runs) {
        const fs::path dir = out / "runs" / run;
        const std::string ckpt = (dir / "checkpoint.json").string();
        if (!fs::exists(ckpt))
            throw ConfigError("no checkpoint for run '" + run + "' under " +
                              dir.string());
        targets.push_back(EvalTarget{dir, ckpt});
    }
    if (options.all_runs) {
        const fs::path runs_dir = out / "runs";
        std::vector<fs::path> dirs;
        if (fs::exists(runs_dir)) {
            for (const auto& item : fs::directory_iterator(runs_dir)) {
                if (item.is_directory() &&
                    fs::exists(item.path() / "checkpoint.json"))
                    dirs.push_back(item.path());
            }
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty())
            throw ConfigError("no trained runs found under " +
                              runs_dir.string());
        for (const fs::path& dir : dirs)
            targets.push_back(EvalTarget{dir, (dir / "checkpoint.json").string()});
    }
    if (targets.empty())
        throw ConfigError(
            "nothing to evaluate; pass --checkpoint, --run, --all, or --oracle");

    const PointSet grid =
        eval_grid(dataset.region_half_width, config.eval_grid_per_axis);
    const std::vector<RirSignal> truth = synthesize_truth(dataset, grid, threads);

    for (const EvalTarget& target : targets) {
        EvalBundle bundle;
        bundle.positions = grid;
        bundle.ground_truth = truth;
        std::string model_id;
        int depth = 0;
        if (target.ckpt_path.empty()) {
            bundle.estimates = truth;
            model_id = "oracle";
        } else {
            const Checkpoint ckpt = load_checkpoint(target.ckpt_path);
            if (ckpt.dataset_id != ds_id)
                throw ConfigError("checkpoint " + target.ckpt_path +
                                  " was trained on a different dataset");
            if (!same_normalization(ckpt.normalization, dataset.normalization))
                throw ConfigError("checkpoint " + target.ckpt_path +
                                  " normalization does not match the dataset");
            bundle.estimates = predict_field(ckpt, dataset, grid, threads);
            model_id = model_id_for(ckpt.config);
            depth = ckpt.config.hidden_layers;
        }
        const MetricsReport report =
            build_report(bundle, config, dataset, model_id, depth, ds_id);
        write_report_files(report, target.dir);
        std::cout << model_id << ": overall "
                  << format_double(report.overall_nmse_db) << " dB -> "
                  << target.dir.string() << "\n";
    }
}

}  // namespace rirpinn
