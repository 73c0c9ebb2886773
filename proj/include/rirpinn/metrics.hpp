#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rirpinn/exact_sum.hpp"
#include "rirpinn/geometry.hpp"
#include "rirpinn/room.hpp"

namespace rirpinn {

struct EvalBundle {
    std::vector<RirSignal> ground_truth;
    std::vector<RirSignal> estimates;
    PointSet positions;
};

void validate(const EvalBundle& bundle);

// dB values below -300 are reported as the -300 sentinel (perfect
// reconstruction would otherwise be -inf).
double clamp_db(double value_db);

// Per-point ratios (sum error^2)/(sum truth^2) accumulated with exact
// summation, so partition sums merge losslessly.
ExactSum nmse_ratio_sum(const EvalBundle& bundle);

// Mean of the per-point energy ratios, in dB.
double nmse(const EvalBundle& bundle);

struct FrequencyNmse {
    Eigen::VectorXd freq_hz;  // bins 0..T/2
    Eigen::VectorXd nmse_db;
    Eigen::VectorXd numerator;    // pooled |H - Hhat|^2 per bin
    Eigen::VectorXd denominator;  // pooled |H|^2 per bin
};

FrequencyNmse nmse_per_frequency(const EvalBundle& bundle, double fs);

struct BandNmse {
    double lo_hz = 0.0;
    double hi_hz = 0.0;
    double value_db = 0.0;
};

// `edges` are consecutive band boundaries; the last band includes its upper
// edge so the Nyquist bin is covered.
std::vector<BandNmse> band_nmse(const EvalBundle& bundle, double fs,
                                const std::vector<double>& edges);

std::pair<EvalBundle, EvalBundle> split_interp_extrap(const EvalBundle& bundle,
                                                      double sphere_radius);

std::pair<EvalBundle, EvalBundle> split_early_late(const EvalBundle& bundle,
                                                   double t_split, double fs);

struct SpatialSlice {
    double z = 0.0;
    Eigen::VectorXd xs;
    Eigen::VectorXd ys;
    Eigen::MatrixXd nmse_db;  // rows follow ys, cols follow xs
};

SpatialSlice spatial_nmse_map(const EvalBundle& bundle, double z_value);

struct MetricsReport {
    double overall_nmse_db = 0.0;
    std::vector<BandNmse> bands;
    double interp_nmse_db = 0.0;
    double extrap_nmse_db = 0.0;
    double early_nmse_db = 0.0;
    double late_nmse_db = 0.0;
    std::vector<SpatialSlice> slices;
    FrequencyNmse per_frequency;
    std::string model_id;
    int depth = 0;
    std::string dataset_id;
};

void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_metrics_csv(const MetricsReport& report, const std::string& path);
void write_slice_csv(const SpatialSlice& slice, const std::string& path);
void write_frequency_csv(const FrequencyNmse& curve, const std::string& path);
void write_slice_svg(const SpatialSlice& slice, const std::string& path);

}  // namespace rirpinn
