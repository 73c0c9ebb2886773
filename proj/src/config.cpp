#include "rirpinn/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rirpinn/io_util.hpp"
#include "rirpinn/rng.hpp"

namespace rirpinn {

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": invalid number '" + value + "'");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": invalid integer '" + value + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size() || value.find('-') != std::string::npos)
            throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": invalid unsigned integer '" +
                          value + "'");
    }
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split(value, ','))
        out.push_back(parse_double(key, trim(item)));
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    for (const auto& item : split(value, ','))
        out.push_back(int(parse_int(key, trim(item))));
    if (out.empty()) throw ConfigError("config key " + key + ": empty list");
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!(room_dims.minCoeff() > 0.0))
        throw ConfigError("room dimensions must be positive");
    if (room_rho == 0.0 && !(room_t60 > 0.0))
        throw ConfigError("room.t60 must be positive when room.rho is not set");
    if (room_rho < 0.0 || room_rho >= 1.0)
        throw ConfigError("room.rho must lie in [0, 1)");
    if (!(room_c > 0.0)) throw ConfigError("room.c must be positive");
    if (room_max_order < 0) throw ConfigError("room.max_order must be >= 0");
    if (array_count < 1) throw ConfigError("array.count must be positive");
    if (!(array_radius > 0.0)) throw ConfigError("array.radius must be positive");
    if (!(region_half_width >= array_radius))
        throw ConfigError("region.half_width must cover the microphone array radius");
    if (!(fs > 0.0)) throw ConfigError("signal.fs must be positive");
    if (samples < 2) throw ConfigError("signal.samples must be at least 2");
    if (std::isnan(snr_db)) throw ConfigError("noise.snr_db must not be NaN");
    if (net_width < 1) throw ConfigError("net.width must be positive");
    if (!(net_omega0 > 0.0)) throw ConfigError("net.omega0 must be positive");
    if (sweep_activations.empty() || sweep_residual.empty() || sweep_depths.empty())
        throw ConfigError("sweep lists must be nonempty");
    for (int d : sweep_depths)
        if (d <= 0 || d % 2 != 0)
            throw ConfigError("sweep.depths entries must be positive even integers");
    if (eval_grid_per_axis < 2)
        throw ConfigError("eval.grid_per_axis must be at least 2");
    if (eval_bands.size() < 2)
        throw ConfigError("eval.bands needs at least two edges");
    for (std::size_t i = 1; i < eval_bands.size(); ++i)
        if (!(eval_bands[i] > eval_bands[i - 1]))
            throw ConfigError("eval.bands must be strictly increasing");
    if (eval_bands.back() > fs / 2.0 + 1e-9)
        throw ConfigError("eval.bands extend past the Nyquist frequency");
    if (!(eval_t_split >= 0.0)) throw ConfigError("eval.t_split must be >= 0");
    if (!(eval_sphere_radius > 0.0))
        throw ConfigError("eval.sphere_radius must be positive");
    train.validate();
}

namespace {

struct KeyTable {
    ExperimentConfig cfg;

    void apply(const std::string& key, const std::string& value) {
        if (key == "seed") cfg.seed = parse_uint(key, value);
        else if (key == "output.dir") cfg.output_dir = value;
        else if (key == "room.lx") cfg.room_dims.x() = parse_double(key, value);
        else if (key == "room.ly") cfg.room_dims.y() = parse_double(key, value);
        else if (key == "room.lz") cfg.room_dims.z() = parse_double(key, value);
        else if (key == "room.t60") cfg.room_t60 = parse_double(key, value);
        else if (key == "room.rho") cfg.room_rho = parse_double(key, value);
        else if (key == "room.c") cfg.room_c = parse_double(key, value);
        else if (key == "room.max_order") cfg.room_max_order = int(parse_int(key, value));
        else if (key == "source.x") cfg.source_pos.x() = parse_double(key, value);
        else if (key == "source.y") cfg.source_pos.y() = parse_double(key, value);
        else if (key == "source.z") cfg.source_pos.z() = parse_double(key, value);
        else if (key == "array.count") cfg.array_count = int(parse_int(key, value));
        else if (key == "array.radius") cfg.array_radius = parse_double(key, value);
        else if (key == "region.half_width") cfg.region_half_width = parse_double(key, value);
        else if (key == "signal.fs") cfg.fs = parse_double(key, value);
        else if (key == "signal.samples") cfg.samples = int(parse_int(key, value));
        else if (key == "noise.snr_db") cfg.snr_db = parse_double(key, value);
        else if (key == "net.width") cfg.net_width = int(parse_int(key, value));
        else if (key == "net.omega0") cfg.net_omega0 = parse_double(key, value);
        else if (key == "sweep.activations") {
            cfg.sweep_activations.clear();
            for (const auto& item : split(value, ','))
                cfg.sweep_activations.push_back(activation_from_name(trim(item)));
            if (cfg.sweep_activations.empty())
                throw ConfigError("config key sweep.activations: empty list");
        } else if (key == "sweep.variants") {
            cfg.sweep_residual.clear();
            for (const auto& item : split(value, ',')) {
                const std::string v = trim(item);
                if (v == "plain") cfg.sweep_residual.push_back(false);
                else if (v == "res") cfg.sweep_residual.push_back(true);
                else throw ConfigError("config key sweep.variants: expected plain or res, got '" + v + "'");
            }
            if (cfg.sweep_residual.empty())
                throw ConfigError("config key sweep.variants: empty list");
        } else if (key == "sweep.depths") cfg.sweep_depths = parse_int_list(key, value);
        else if (key == "train.lambda") cfg.train.lambda = parse_double(key, value);
        else if (key == "train.iterations") cfg.train.iterations = parse_int(key, value);
        else if (key == "train.collocation_count") cfg.train.collocation_count = int(parse_int(key, value));
        else if (key == "train.collocation_time_stride") cfg.train.collocation_time_stride = int(parse_int(key, value));
        else if (key == "train.lr_init") cfg.train.lr_init = parse_double(key, value);
        else if (key == "train.lr_decay") cfg.train.lr_decay = parse_double(key, value);
        else if (key == "train.lr_period") cfg.train.lr_period = parse_int(key, value);
        else if (key == "train.lr_floor") cfg.train.lr_floor = parse_double(key, value);
        else if (key == "train.beta1") cfg.train.beta1 = parse_double(key, value);
        else if (key == "train.beta2") cfg.train.beta2 = parse_double(key, value);
        else if (key == "train.eps") cfg.train.eps = parse_double(key, value);
        else if (key == "train.amplitude_scale") cfg.train.amplitude_scale = parse_double(key, value);
        else if (key == "train.checkpoint_interval") cfg.train.checkpoint_interval = parse_int(key, value);
        else if (key == "train.threads") cfg.train.threads = int(parse_int(key, value));
        else if (key == "train.chunk_samples") cfg.train.chunk_samples = int(parse_int(key, value));
        else if (key == "eval.grid_per_axis") cfg.eval_grid_per_axis = int(parse_int(key, value));
        else if (key == "eval.bands") cfg.eval_bands = parse_double_list(key, value);
        else if (key == "eval.t_split") cfg.eval_t_split = parse_double(key, value);
        else if (key == "eval.slices_z") cfg.eval_slices_z = parse_double_list(key, value);
        else if (key == "eval.sphere_radius") cfg.eval_sphere_radius = parse_double(key, value);
        else throw ConfigError("unknown config key '" + key + "'");
    }
};

}  // namespace

ExperimentConfig parse_experiment_config(
    const std::string& text,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": empty key");
        for (const auto& [k, v] : entries) {
            (void)v;
            if (k == key)
                throw ConfigError("duplicate config key '" + key + "'");
        }
        entries.emplace_back(key, value);
    }
    for (const auto& [k, v] : overrides) {
        bool replaced = false;
        for (auto& [ek, ev] : entries)
            if (ek == k) {
                ev = v;
                replaced = true;
                break;
            }
        if (!replaced) entries.emplace_back(k, v);
    }
    KeyTable table;
    for (const auto& [k, v] : entries) table.apply(k, v);
    table.cfg.validate();
    return table.cfg;
}

ExperimentConfig load_experiment_config(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
    return parse_experiment_config(read_text_file(path), overrides);
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "seed=" << c.seed << '\n';
    os << "output.dir=" << c.output_dir << '\n';
    os << "room.lx=" << format_double(c.room_dims.x()) << '\n';
    os << "room.ly=" << format_double(c.room_dims.y()) << '\n';
    os << "room.lz=" << format_double(c.room_dims.z()) << '\n';
    os << "room.t60=" << format_double(c.room_t60) << '\n';
    os << "room.rho=" << format_double(c.room_rho) << '\n';
    os << "room.c=" << format_double(c.room_c) << '\n';
    os << "room.max_order=" << c.room_max_order << '\n';
    os << "source.x=" << format_double(c.source_pos.x()) << '\n';
    os << "source.y=" << format_double(c.source_pos.y()) << '\n';
    os << "source.z=" << format_double(c.source_pos.z()) << '\n';
    os << "array.count=" << c.array_count << '\n';
    os << "array.radius=" << format_double(c.array_radius) << '\n';
    os << "region.half_width=" << format_double(c.region_half_width) << '\n';
    os << "signal.fs=" << format_double(c.fs) << '\n';
    os << "signal.samples=" << c.samples << '\n';
    os << "noise.snr_db=" << format_double(c.snr_db) << '\n';
    os << "net.width=" << c.net_width << '\n';
    os << "net.omega0=" << format_double(c.net_omega0) << '\n';
    os << "sweep.activations=";
    for (std::size_t i = 0; i < c.sweep_activations.size(); ++i)
        os << (i ? "," : "") << activation_name(c.sweep_activations[i]);
    os << '\n';
    os << "sweep.variants=";
    for (std::size_t i = 0; i < c.sweep_residual.size(); ++i)
        os << (i ? "," : "") << (c.sweep_residual[i] ? "res" : "plain");
    os << '\n';
    os << "sweep.depths=" << join_ints(c.sweep_depths) << '\n';
    os << "train.lambda=" << format_double(c.train.lambda) << '\n';
    os << "train.iterations=" << c.train.iterations << '\n';
    os << "train.collocation_count=" << c.train.collocation_count << '\n';
    os << "train.collocation_time_stride=" << c.train.collocation_time_stride << '\n';
    os << "train.lr_init=" << format_double(c.train.lr_init) << '\n';
    os << "train.lr_decay=" << format_double(c.train.lr_decay) << '\n';
    os << "train.lr_period=" << c.train.lr_period << '\n';
    os << "train.lr_floor=" << format_double(c.train.lr_floor) << '\n';
    os << "train.beta1=" << format_double(c.train.beta1) << '\n';
    os << "train.beta2=" << format_double(c.train.beta2) << '\n';
    os << "train.eps=" << format_double(c.train.eps) << '\n';
    os << "train.amplitude_scale=" << format_double(c.train.amplitude_scale) << '\n';
    os << "train.checkpoint_interval=" << c.train.checkpoint_interval << '\n';
    os << "train.threads=" << c.train.threads << '\n';
    os << "train.chunk_samples=" << c.train.chunk_samples << '\n';
    os << "eval.grid_per_axis=" << c.eval_grid_per_axis << '\n';
    os << "eval.bands=" << join_doubles(c.eval_bands) << '\n';
    os << "eval.t_split=" << format_double(c.eval_t_split) << '\n';
    os << "eval.slices_z=" << join_doubles(c.eval_slices_z) << '\n';
    os << "eval.sphere_radius=" << format_double(c.eval_sphere_radius) << '\n';
    return os.str();
}

std::pair<std::string, std::string> split_override(const std::string& arg) {
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + arg + "' must look like key=value");
    return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

std::string SweepEntry::method() const {
    return std::string(activation_name(activation)) + (residual ? "-res" : "-plain");
}

std::string SweepEntry::id() const {
    return method() + "-n" + std::to_string(depth);
}

std::uint64_t SweepEntry::code() const {
    return std::uint64_t(depth) * 8 +
           (activation == Activation::tanh ? 2 : 0) + (residual ? 1 : 0);
}

std::vector<SweepEntry> sweep_entries(const ExperimentConfig& cfg) {
    std::vector<SweepEntry> out;
    for (Activation a : cfg.sweep_activations)
        for (bool r : cfg.sweep_residual)
            for (int d : cfg.sweep_depths) out.push_back({a, r, d});
    return out;
}

NetworkConfig network_config_for(const ExperimentConfig& cfg,
                                 const SweepEntry& entry) {
    NetworkConfig net;
    net.activation = entry.activation;
    net.residual = entry.residual;
    net.hidden_layers = entry.depth;
    net.width = cfg.net_width;
    net.omega0 = cfg.net_omega0;
    net.seed = substream_seed(cfg.seed, 2 * entry.code());
    return net;
}

TrainConfig train_config_for(const ExperimentConfig& cfg,
                             const SweepEntry& entry) {
    TrainConfig t = cfg.train;
    t.seed = substream_seed(cfg.seed, 2 * entry.code() + 1);
    return t;
}

}  // namespace rirpinn
