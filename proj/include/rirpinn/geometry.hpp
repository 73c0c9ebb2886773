#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "rirpinn/common.hpp"

namespace rirpinn {

enum class PointRole { measurement, evaluation, collocation };

// Room-centered 3D points, one per row.
struct PointSet {
    Eigen::Matrix<double, Eigen::Dynamic, 3> positions;
    PointRole role = PointRole::measurement;

    Eigen::Index count() const { return positions.rows(); }
};

// Fibonacci layout on a sphere; deterministic, poles included so count = 2
// yields antipodal points.
PointSet sphere_points(int count, double radius,
                       const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// Inclusive uniform grid over [-half_width, +half_width]^3 about the center.
// Ordering: z slowest, then y, x fastest. Axis endpoints are exact.
PointSet eval_grid(double half_width, int points_per_axis,
                   const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// `count` points uniform in the cube, reproducible per (seed, iteration).
PointSet sample_collocation(double half_width, int count, std::uint64_t seed,
                            std::uint64_t iteration);

// Per-axis affine maps between physical (t, x, y, z) and the network's
// [-1, 1]^4 cube. Axis order is always (t, x, y, z).
struct NormalizationMap {
    Eigen::Vector4d lo = Eigen::Vector4d::Constant(-1.0);
    Eigen::Vector4d hi = Eigen::Vector4d::Constant(1.0);

    // d(normalized)/d(physical) = 2/range, exact per axis.
    Eigen::Vector4d deriv_scale() const;

    Eigen::Vector4d to_network(const Eigen::Vector4d& phys) const;
    Eigen::Vector4d to_physical(const Eigen::Vector4d& net) const;

    // Batched variants; rows are samples, columns (t, x, y, z).
    Eigen::MatrixXd to_network(const Eigen::MatrixXd& phys) const;
    Eigen::MatrixXd to_physical(const Eigen::MatrixXd& net) const;
};

// Map for a cubic estimation region of the given half width and a time axis
// [0, samples/fs].
NormalizationMap make_normalization(double region_half_width, int samples,
                                    double fs);

void write_point_csv(const PointSet& points, const std::string& path);

}  // namespace rirpinn
