#include "rirpinn/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rirpinn/rng.hpp"

namespace rirpinn {

namespace {
const char* axis_name(int i) {
    static const char* names[4] = {"t", "x", "y", "z"};
    return names[i];
}
}  // namespace

PointSet sphere_points(int count, double radius, const Eigen::Vector3d& center) {
    if (count < 1) throw DomainError("sphere_points: count must be >= 1");
    if (!(radius > 0.0)) throw DomainError("sphere_points: radius must be > 0");
    PointSet out;
    out.role = PointRole::measurement;
    out.positions.resize(count, 3);
    // golden angle in radians
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        double z = count == 1 ? 1.0 : 1.0 - 2.0 * double(i) / double(count - 1);
        double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        double a = ga * double(i);
        out.positions(i, 0) = center.x() + radius * rxy * std::cos(a);
        out.positions(i, 1) = center.y() + radius * rxy * std::sin(a);
        out.positions(i, 2) = center.z() + radius * z;
    }
    return out;
}

PointSet eval_grid(double half_width, int points_per_axis,
                   const Eigen::Vector3d& center) {
    if (points_per_axis < 2)
        throw DomainError("eval_grid: points_per_axis must be >= 2");
    if (!(half_width > 0.0)) throw DomainError("eval_grid: half_width must be > 0");
    const int n = points_per_axis;
    Eigen::VectorXd axis(n);
    for (int i = 0; i < n; ++i)
        axis[i] = (double(n - 1 - i) * -half_width + double(i) * half_width) /
                  double(n - 1);
    PointSet out;
    out.role = PointRole::evaluation;
    out.positions.resize(Eigen::Index(n) * n * n, 3);
    Eigen::Index r = 0;
    for (int iz = 0; iz < n; ++iz)
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix, ++r) {
                out.positions(r, 0) = center.x() + axis[ix];
                out.positions(r, 1) = center.y() + axis[iy];
                out.positions(r, 2) = center.z() + axis[iz];
            }
    return out;
}

PointSet sample_collocation(double half_width, int count, std::uint64_t seed,
                            std::uint64_t iteration) {
    if (count < 1) throw DomainError("sample_collocation: count must be >= 1");
    Rng rng(substream_seed(seed, iteration));
    PointSet out;
    out.role = PointRole::collocation;
    out.positions.resize(count, 3);
    for (int i = 0; i < count; ++i)
        for (int a = 0; a < 3; ++a)
            out.positions(i, a) = rng.uniform(-half_width, half_width);
    return out;
}

Eigen::Vector4d NormalizationMap::deriv_scale() const {
    return 2.0 / (hi - lo).array();
}

namespace {
// Normalize one coordinate; the midpoint form lands exactly on +/-1 at the
// range endpoints. Overshoot beyond 1e-9 is a caller bug; smaller overshoot
// is rounding noise and is pulled back onto the boundary.
double norm_one(double p, double lo, double hi, int axis) {
    double n = (2.0 * p - (lo + hi)) / (hi - lo);
    if (std::abs(n) > 1.0 + 1e-9)
        throw DomainError(std::string("normalize: ") + axis_name(axis) +
                          " coordinate " + std::to_string(p) +
                          " outside range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
    return std::clamp(n, -1.0, 1.0);
}
}  // namespace

Eigen::Vector4d NormalizationMap::to_network(const Eigen::Vector4d& phys) const {
    Eigen::Vector4d out;
    for (int a = 0; a < 4; ++a) out[a] = norm_one(phys[a], lo[a], hi[a], a);
    return out;
}

Eigen::Vector4d NormalizationMap::to_physical(const Eigen::Vector4d& net) const {
    return 0.5 * ((hi - lo).cwiseProduct(net) + lo + hi);
}

Eigen::MatrixXd NormalizationMap::to_network(const Eigen::MatrixXd& phys) const {
    if (phys.cols() != 4)
        throw DomainError("normalize: expected 4 columns (t, x, y, z)");
    Eigen::MatrixXd out(phys.rows(), 4);
    for (int a = 0; a < 4; ++a)
        for (Eigen::Index r = 0; r < phys.rows(); ++r)
            out(r, a) = norm_one(phys(r, a), lo[a], hi[a], a);
    return out;
}

Eigen::MatrixXd NormalizationMap::to_physical(const Eigen::MatrixXd& net) const {
    if (net.cols() != 4)
        throw DomainError("normalize: expected 4 columns (t, x, y, z)");
    Eigen::MatrixXd out(net.rows(), 4);
    for (int a = 0; a < 4; ++a)
        out.col(a) = 0.5 * ((hi[a] - lo[a]) * net.col(a).array() + lo[a] + hi[a]);
    return out;
}

NormalizationMap make_normalization(double region_half_width, int samples,
                                    double fs) {
    if (!(region_half_width > 0.0))
        throw DomainError("make_normalization: half width must be > 0");
    if (samples < 1 || !(fs > 0.0))
        throw DomainError("make_normalization: need samples >= 1 and fs > 0");
    NormalizationMap m;
    m.lo << 0.0, -region_half_width, -region_half_width, -region_half_width;
    m.hi << double(samples) / fs, region_half_width, region_half_width,
        region_half_width;
    return m;
}

void write_point_csv(const PointSet& points, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "x,y,z\n";
    char buf[96];
    for (Eigen::Index i = 0; i < points.count(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n",
                      points.positions(i, 0), points.positions(i, 1),
                      points.positions(i, 2));
        f << buf;
    }
}

}  // namespace rirpinn
