#include "rirpinn/room.hpp"

#include <cmath>
#include <json.hpp>

#include "rirpinn/io_util.hpp"
#include "rirpinn/rng.hpp"

namespace rirpinn {

void validate(const RoomSpec& room) {
    if (!(room.dimensions.minCoeff() > 0.0))
        throw DomainError("room dimensions must be positive");
    if (!(room.reflection_coeff >= 0.0 && room.reflection_coeff < 1.0))
        throw DomainError("reflection coefficient must be in [0, 1)");
    if (!(room.speed_of_sound > 0.0))
        throw DomainError("speed of sound must be positive");
    if (room.max_order < 0) throw DomainError("max_order must be >= 0");
}

double reflection_coeff_from_t60(const Eigen::Vector3d& dims, double t60) {
    if (!(dims.minCoeff() > 0.0))
        throw DomainError("room dimensions must be positive");
    if (!(t60 > 0.0)) throw DomainError("t60 must be positive");
    double v = dims.prod();
    double s = 2.0 * (dims.x() * dims.y() + dims.x() * dims.z() +
                      dims.y() * dims.z());
    double alpha = 0.161 * v / (s * t60);
    if (alpha >= 1.0)
        throw DomainError("t60 " + std::to_string(t60) +
                          " s is unreachable for this room (absorption " +
                          std::to_string(alpha) + " >= 1)");
    return std::sqrt(1.0 - alpha);
}

std::vector<ImageSource> image_sources(const RoomSpec& room,
                                       const SourceSpec& source) {
    validate(room);
    for (int a = 0; a < 3; ++a)
        if (!(std::abs(source.position[a]) < room.dimensions[a] / 2.0))
            throw DomainError("source position must be strictly inside the room");

    // Per-axis image coordinate in wall coordinates [0, L]:
    // even n mirrors to n L + s, odd n to n L + (L - s).
    const int n = room.max_order;
    std::vector<ImageSource> out;
    out.reserve(std::size_t((4 * n * n * n + 6 * n * n + 8 * n + 3) / 3));
    Eigen::Vector3d half = room.dimensions / 2.0;
    Eigen::Vector3d s_wall = source.position + half;
    for (int nx = -n; nx <= n; ++nx)
        for (int ny = -n; ny <= n; ++ny)
            for (int nz = -n; nz <= n; ++nz) {
                int order = std::abs(nx) + std::abs(ny) + std::abs(nz);
                if (order > n) continue;
                Eigen::Vector3i idx(nx, ny, nz);
                Eigen::Vector3d p;
                for (int a = 0; a < 3; ++a) {
                    double l = room.dimensions[a];
                    double base = (idx[a] % 2 == 0) ? s_wall[a] : l - s_wall[a];
                    p[a] = double(idx[a]) * l + base - half[a];
                }
                out.push_back({p, std::pow(room.reflection_coeff, order), order});
            }
    return out;
}

RirSignal synthesize_rir(const std::vector<ImageSource>& images,
                         const Eigen::Vector3d& mic_position, double fs,
                         int length, double c, int kernel_taps) {
    if (length < 1) throw DomainError("signal length must be >= 1");
    if (!(fs > 0.0) || !(c > 0.0)) throw DomainError("fs and c must be positive");
    if (kernel_taps < 1 || kernel_taps % 2 == 0)
        throw DomainError("kernel_taps must be odd and >= 1");
    const int half = (kernel_taps - 1) / 2;
    RirSignal out;
    out.fs = fs;
    out.samples = Eigen::VectorXd::Zero(length);
    for (const auto& img : images) {
        double d = (img.position - mic_position).norm();
        if (d < 1e-12)
            throw DomainError("microphone coincides with an image source");
        double delay = d / c * fs;  // fractional sample index
        double amp = img.gain / (4.0 * M_PI * d);
        int lo = std::max(0, int(std::ceil(delay - half)));
        int hi = std::min(length - 1, int(std::floor(delay + half)));
        for (int k = lo; k <= hi; ++k) {
            double u = double(k) - delay;
            double sinc = u == 0.0 ? 1.0 : std::sin(M_PI * u) / (M_PI * u);
            double w = 0.5 * (1.0 + std::cos(M_PI * u / double(half + 1)));
            out.samples[k] += amp * sinc * w;
        }
    }
    if (!out.samples.allFinite())
        throw NumericError("synthesized RIR contains non-finite samples");
    return out;
}

RirSignal add_noise(const RirSignal& signal, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0.0) return signal;
    double sig_energy = signal.samples.squaredNorm();
    if (!(sig_energy > 0.0))
        throw DomainError("add_noise requires a signal with nonzero energy");
    Rng rng(seed);
    Eigen::VectorXd noise(signal.samples.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.gaussian();
    double noise_energy = noise.squaredNorm();
    double target = sig_energy / std::pow(10.0, snr_db / 10.0);
    double scale = std::sqrt(target / noise_energy);
    RirSignal out;
    out.fs = signal.fs;
    out.samples = signal.samples + scale * noise;
    return out;
}

void validate(const RirDataset& d) {
    validate(d.room);
    if (d.mic_positions.count() == 0) throw DomainError("dataset has no microphones");
    if (d.clean.size() != std::size_t(d.mic_positions.count()) ||
        d.noisy.size() != d.clean.size())
        throw DomainError("dataset needs one clean and one noisy RIR per microphone");
    for (std::size_t i = 0; i < d.clean.size(); ++i) {
        if (d.clean[i].length() != d.samples || d.noisy[i].length() != d.samples)
            throw DomainError("dataset RIR length differs from the declared sample count");
        if (!d.clean[i].samples.allFinite() || !d.noisy[i].samples.allFinite())
            throw NumericError("dataset contains non-finite samples");
    }
    if (!(d.fs > 0.0)) throw DomainError("dataset fs must be positive");
    if (!(d.region_half_width > 0.0))
        throw DomainError("dataset region half width must be positive");
}

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[Eigen::Index(i)] = a[i].get<double>();
    return v;
}

}  // namespace

void save_dataset(const RirDataset& d, const std::string& path) {
    validate(d);
    json j;
    j["format"] = "rirpinn-dataset-1";
    j["room"] = {{"dimensions", {d.room.dimensions.x(), d.room.dimensions.y(),
                                 d.room.dimensions.z()}},
                 {"reflection_coeff", d.room.reflection_coeff},
                 {"speed_of_sound", d.room.speed_of_sound},
                 {"max_order", d.room.max_order}};
    j["source"] = {{"position", {d.source.position.x(), d.source.position.y(),
                                 d.source.position.z()}}};
    j["fs"] = d.fs;
    j["samples"] = d.samples;
    if (std::isinf(d.snr_db))
        j["snr_db"] = "inf";
    else
        j["snr_db"] = d.snr_db;
    j["noise_seed"] = d.noise_seed;
    j["region_half_width"] = d.region_half_width;
    j["normalization"] = {{"lo", vec_to_json(d.normalization.lo)},
                          {"hi", vec_to_json(d.normalization.hi)}};
    json mics = json::array();
    for (Eigen::Index i = 0; i < d.mic_positions.count(); ++i)
        mics.push_back({d.mic_positions.positions(i, 0),
                        d.mic_positions.positions(i, 1),
                        d.mic_positions.positions(i, 2)});
    j["mic_positions"] = std::move(mics);
    json clean = json::array(), noisy = json::array();
    for (const auto& s : d.clean) clean.push_back(vec_to_json(s.samples));
    for (const auto& s : d.noisy) noisy.push_back(vec_to_json(s.samples));
    j["clean"] = std::move(clean);
    j["noisy"] = std::move(noisy);
    write_text_file(path, j.dump());
}

RirDataset load_dataset(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dataset " + path + " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format") != "rirpinn-dataset-1")
            throw ConfigError("dataset " + path + ": unknown format tag");
        RirDataset d;
        const auto& room = j.at("room");
        const auto& dims = room.at("dimensions");
        d.room.dimensions << dims.at(0).get<double>(), dims.at(1).get<double>(),
            dims.at(2).get<double>();
        d.room.reflection_coeff = room.at("reflection_coeff").get<double>();
        d.room.speed_of_sound = room.at("speed_of_sound").get<double>();
        d.room.max_order = room.at("max_order").get<int>();
        const auto& src = j.at("source").at("position");
        d.source.position << src.at(0).get<double>(), src.at(1).get<double>(),
            src.at(2).get<double>();
        d.fs = j.at("fs").get<double>();
        d.samples = j.at("samples").get<int>();
        if (j.at("snr_db").is_string())
            d.snr_db = std::numeric_limits<double>::infinity();
        else
            d.snr_db = j.at("snr_db").get<double>();
        d.noise_seed = j.at("noise_seed").get<std::uint64_t>();
        d.region_half_width = j.at("region_half_width").get<double>();
        d.normalization.lo = vec_from_json(j.at("normalization").at("lo"));
        d.normalization.hi = vec_from_json(j.at("normalization").at("hi"));
        const auto& mics = j.at("mic_positions");
        d.mic_positions.role = PointRole::measurement;
        d.mic_positions.positions.resize(Eigen::Index(mics.size()), 3);
        for (std::size_t i = 0; i < mics.size(); ++i)
            for (int a = 0; a < 3; ++a)
                d.mic_positions.positions(Eigen::Index(i), a) =
                    mics[i].at(std::size_t(a)).get<double>();
        for (const auto& s : j.at("clean"))
            d.clean.push_back({vec_from_json(s), d.fs});
        for (const auto& s : j.at("noisy"))
            d.noisy.push_back({vec_from_json(s), d.fs});
        validate(d);
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dataset " + path + " is malformed: " + e.what());
    }
}

}  // namespace rirpinn
