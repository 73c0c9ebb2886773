#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rirpinn/common.hpp"
#include "rirpinn/geometry.hpp"

namespace rirpinn {

// Shoebox room, room-centered coordinates (walls at +/- L/2 per axis).
struct RoomSpec {
    Eigen::Vector3d dimensions{6.0, 4.0, 2.7};
    double reflection_coeff = 0.85;
    double speed_of_sound = 343.0;
    int max_order = 4;
};
void validate(const RoomSpec& room);

struct SourceSpec {
    Eigen::Vector3d position{0.0, 0.0, 0.0};
};

struct RirSignal {
    Eigen::VectorXd samples;
    double fs = 8000.0;

    Eigen::Index length() const { return samples.size(); }
};

struct ImageSource {
    Eigen::Vector3d position;  // room-centered, meters
    double gain;               // reflection_coeff^order
    int order;
};

// Inverse Sabine: alpha = 0.161 V / (S T60), amplitude coefficient
// rho = sqrt(1 - alpha). Throws DomainError when alpha >= 1.
double reflection_coeff_from_t60(const Eigen::Vector3d& dims, double t60);

// All mirrored images with |nx|+|ny|+|nz| <= max_order, enumerated in
// lexicographic (nx, ny, nz) order.
std::vector<ImageSource> image_sources(const RoomSpec& room,
                                       const SourceSpec& source);

// Sum of windowed-sinc fractional-delay pulses, gain/(4 pi d) each.
// kernel_taps must be odd; contributions beyond the signal end are truncated.
RirSignal synthesize_rir(const std::vector<ImageSource>& images,
                         const Eigen::Vector3d& mic_position, double fs,
                         int length, double c, int kernel_taps = 81);

// White Gaussian noise scaled so the realized energy ratio hits snr_db
// exactly. snr_db = +inf returns the input unchanged.
RirSignal add_noise(const RirSignal& signal, double snr_db, std::uint64_t seed);

struct RirDataset {
    RoomSpec room;
    SourceSpec source;
    PointSet mic_positions;
    std::vector<RirSignal> clean;
    std::vector<RirSignal> noisy;
    double snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t noise_seed = 0;
    double region_half_width = 0.15;
    NormalizationMap normalization;
    double fs = 8000.0;
    int samples = 400;
};
void validate(const RirDataset& dataset);

void save_dataset(const RirDataset& dataset, const std::string& path);
RirDataset load_dataset(const std::string& path);

}  // namespace rirpinn
