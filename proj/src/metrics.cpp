#include "rirpinn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "rirpinn/io_util.hpp"

namespace rirpinn {

using nlohmann::json;

void validate(const EvalBundle& b) {
    if (b.ground_truth.size() != b.estimates.size())
        throw DomainError("evaluation bundle: truth and estimate counts differ");
    if (Eigen::Index(b.ground_truth.size()) != b.positions.count())
        throw DomainError("evaluation bundle: position count does not match signals");
    if (b.ground_truth.empty()) return;
    const Eigen::Index len = b.ground_truth[0].length();
    const double fs = b.ground_truth[0].fs;
    for (std::size_t i = 0; i < b.ground_truth.size(); ++i) {
        if (b.ground_truth[i].length() != len || b.estimates[i].length() != len)
            throw DomainError("evaluation bundle: signal lengths are not uniform");
        if (b.ground_truth[i].fs != fs || b.estimates[i].fs != fs)
            throw DomainError("evaluation bundle: sample rates are not uniform");
    }
}

double clamp_db(double value_db) {
    return value_db > -300.0 ? value_db : -300.0;
}

ExactSum nmse_ratio_sum(const EvalBundle& b) {
    validate(b);
    ExactSum sum;
    for (std::size_t i = 0; i < b.ground_truth.size(); ++i) {
        const double truth_e = b.ground_truth[i].samples.squaredNorm();
        if (truth_e == 0.0)
            throw DomainError("zero-energy ground truth at point " +
                              std::to_string(i));
        const double err_e =
            (b.estimates[i].samples - b.ground_truth[i].samples).squaredNorm();
        sum.add(err_e / truth_e);
    }
    return sum;
}

double nmse(const EvalBundle& b) {
    if (b.ground_truth.empty())
        throw DomainError("nmse: empty evaluation bundle");
    ExactSum sum = nmse_ratio_sum(b);
    const double mean = sum.value() / double(b.ground_truth.size());
    return clamp_db(10.0 * std::log10(mean));
}

FrequencyNmse nmse_per_frequency(const EvalBundle& b, double fs) {
    validate(b);
    if (b.ground_truth.empty())
        throw DomainError("nmse_per_frequency: empty evaluation bundle");
    if (!(fs > 0.0)) throw DomainError("nmse_per_frequency: fs must be positive");
    const Eigen::Index t_len = b.ground_truth[0].length();
    if (t_len < 1) throw DomainError("nmse_per_frequency: empty signals");
    const Eigen::Index bins = t_len / 2 + 1;
    const Eigen::Index count = Eigen::Index(b.ground_truth.size());

    Eigen::MatrixXd fr(bins, t_len), fi(bins, t_len);
    for (Eigen::Index k = 0; k < bins; ++k)
        for (Eigen::Index v = 0; v < t_len; ++v) {
            const double angle =
                2.0 * M_PI * double((k * v) % t_len) / double(t_len);
            fr(k, v) = std::cos(angle);
            fi(k, v) = -std::sin(angle);
        }

    Eigen::MatrixXd truth(t_len, count), est(t_len, count);
    for (Eigen::Index p = 0; p < count; ++p) {
        truth.col(p) = b.ground_truth[std::size_t(p)].samples;
        est.col(p) = b.estimates[std::size_t(p)].samples;
    }
    const Eigen::MatrixXd tr = fr * truth, ti = fi * truth;
    const Eigen::MatrixXd er = fr * est, ei = fi * est;

    FrequencyNmse out;
    out.freq_hz.resize(bins);
    out.nmse_db.resize(bins);
    out.numerator.resize(bins);
    out.denominator.resize(bins);
    for (Eigen::Index k = 0; k < bins; ++k) {
        const double num = (tr.row(k) - er.row(k)).squaredNorm() +
                           (ti.row(k) - ei.row(k)).squaredNorm();
        const double den = tr.row(k).squaredNorm() + ti.row(k).squaredNorm();
        out.freq_hz[k] = double(k) * fs / double(t_len);
        out.numerator[k] = num;
        out.denominator[k] = den;
        if (den == 0.0) {
            if (num == 0.0) {
                out.nmse_db[k] = -300.0;
                continue;
            }
            throw DomainError("zero ground-truth energy in frequency bin " +
                              std::to_string(k));
        }
        out.nmse_db[k] = clamp_db(10.0 * std::log10(num / den));
    }
    return out;
}

std::vector<BandNmse> band_nmse(const EvalBundle& b, double fs,
                                const std::vector<double>& edges) {
    if (edges.size() < 2)
        throw ConfigError("band_nmse: need at least two band edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw ConfigError("band_nmse: edges must be strictly increasing");
    const double nyquist = fs / 2.0;
    if (edges.back() > nyquist + 1e-9)
        throw DomainError("band_nmse: band extends past the Nyquist frequency " +
                          format_double(nyquist) + " Hz");

    const FrequencyNmse curve = nmse_per_frequency(b, fs);
    std::vector<BandNmse> out;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double lo = edges[i];
        const double hi = edges[i + 1];
        const bool last = i + 2 == edges.size();
        double num = 0.0, den = 0.0;
        Eigen::Index used = 0;
        for (Eigen::Index k = 0; k < curve.freq_hz.size(); ++k) {
            const double f = curve.freq_hz[k];
            if (f < lo) continue;
            if (last ? f > hi : f >= hi) continue;
            num += curve.numerator[k];
            den += curve.denominator[k];
            ++used;
        }
        if (used == 0)
            throw DomainError("band_nmse: band " + format_double(lo) + "-" +
                              format_double(hi) + " Hz contains no bins");
        BandNmse band;
        band.lo_hz = lo;
        band.hi_hz = hi;
        if (den == 0.0) {
            if (num != 0.0)
                throw DomainError("band_nmse: zero ground-truth energy in band " +
                                  format_double(lo) + "-" + format_double(hi));
            band.value_db = -300.0;
        } else {
            band.value_db = clamp_db(10.0 * std::log10(num / den));
        }
        out.push_back(band);
    }
    return out;
}

namespace {

EvalBundle take_points(const EvalBundle& b, const std::vector<Eigen::Index>& idx) {
    EvalBundle out;
    out.positions.role = b.positions.role;
    out.positions.positions.resize(Eigen::Index(idx.size()), 3);
    out.ground_truth.reserve(idx.size());
    out.estimates.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.positions.positions.row(Eigen::Index(i)) =
            b.positions.positions.row(idx[i]);
        out.ground_truth.push_back(b.ground_truth[std::size_t(idx[i])]);
        out.estimates.push_back(b.estimates[std::size_t(idx[i])]);
    }
    return out;
}

}  // namespace

std::pair<EvalBundle, EvalBundle> split_interp_extrap(const EvalBundle& b,
                                                      double sphere_radius) {
    validate(b);
    std::vector<Eigen::Index> inside, outside;
    for (Eigen::Index i = 0; i < b.positions.count(); ++i) {
        if (b.positions.positions.row(i).norm() < sphere_radius)
            inside.push_back(i);
        else
            outside.push_back(i);
    }
    return {take_points(b, inside), take_points(b, outside)};
}

std::pair<EvalBundle, EvalBundle> split_early_late(const EvalBundle& b,
                                                   double t_split, double fs) {
    validate(b);
    if (b.ground_truth.empty())
        throw DomainError("split_early_late: empty evaluation bundle");
    const Eigen::Index t_len = b.ground_truth[0].length();
    if (!(t_split >= 0.0))
        throw DomainError("split_early_late: t_split must be nonnegative");
    const Eigen::Index split = Eigen::Index(std::floor(t_split * fs));
    if (split > t_len)
        throw DomainError("split_early_late: t_split is past the signal end");
    EvalBundle early = b, late = b;
    for (std::size_t i = 0; i < b.ground_truth.size(); ++i) {
        early.ground_truth[i].samples = b.ground_truth[i].samples.head(split);
        early.estimates[i].samples = b.estimates[i].samples.head(split);
        late.ground_truth[i].samples = b.ground_truth[i].samples.tail(t_len - split);
        late.estimates[i].samples = b.estimates[i].samples.tail(t_len - split);
    }
    return {std::move(early), std::move(late)};
}

SpatialSlice spatial_nmse_map(const EvalBundle& b, double z_value) {
    validate(b);
    if (b.ground_truth.empty())
        throw DomainError("spatial_nmse_map: empty evaluation bundle");

    std::vector<double> layers;
    for (Eigen::Index i = 0; i < b.positions.count(); ++i)
        layers.push_back(b.positions.positions(i, 2));
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

    double spacing = 0.0;
    for (std::size_t i = 1; i < layers.size(); ++i) {
        const double d = layers[i] - layers[i - 1];
        if (spacing == 0.0 || d < spacing) spacing = d;
    }
    double best = layers[0];
    for (double z : layers)
        if (std::abs(z - z_value) < std::abs(best - z_value)) best = z;
    const double tol = layers.size() > 1 ? spacing / 2.0 : 1e-9;
    if (std::abs(best - z_value) > tol)
        throw DomainError("spatial_nmse_map: no grid layer near z = " +
                          format_double(z_value));

    std::vector<double> xs, ys;
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < b.positions.count(); ++i) {
        if (b.positions.positions(i, 2) != best) continue;
        members.push_back(i);
        xs.push_back(b.positions.positions(i, 0));
        ys.push_back(b.positions.positions(i, 1));
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

    SpatialSlice slice;
    slice.z = best;
    slice.xs = Eigen::Map<const Eigen::VectorXd>(xs.data(), Eigen::Index(xs.size()));
    slice.ys = Eigen::Map<const Eigen::VectorXd>(ys.data(), Eigen::Index(ys.size()));
    slice.nmse_db.setConstant(Eigen::Index(ys.size()), Eigen::Index(xs.size()),
                              std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i : members) {
        const double x = b.positions.positions(i, 0);
        const double y = b.positions.positions(i, 1);
        const auto xi = std::lower_bound(xs.begin(), xs.end(), x) - xs.begin();
        const auto yi = std::lower_bound(ys.begin(), ys.end(), y) - ys.begin();
        const double truth_e = b.ground_truth[std::size_t(i)].samples.squaredNorm();
        if (truth_e == 0.0)
            throw DomainError("zero-energy ground truth at point " +
                              std::to_string(i));
        const double err_e = (b.estimates[std::size_t(i)].samples -
                              b.ground_truth[std::size_t(i)].samples)
                                 .squaredNorm();
        slice.nmse_db(yi, xi) = clamp_db(10.0 * std::log10(err_e / truth_e));
    }
    if (!slice.nmse_db.allFinite())
        throw DomainError("spatial_nmse_map: slice points do not form a complete grid");
    return slice;
}

void write_metrics_json(const MetricsReport& r, const std::string& path) {
    json doc;
    doc["model_id"] = r.model_id;
    doc["depth"] = r.depth;
    doc["dataset_id"] = r.dataset_id;
    doc["overall_nmse_db"] = r.overall_nmse_db;
    doc["interp_nmse_db"] = r.interp_nmse_db;
    doc["extrap_nmse_db"] = r.extrap_nmse_db;
    doc["early_nmse_db"] = r.early_nmse_db;
    doc["late_nmse_db"] = r.late_nmse_db;
    doc["bands"] = json::array();
    for (const auto& band : r.bands)
        doc["bands"].push_back({{"lo_hz", band.lo_hz},
                                {"hi_hz", band.hi_hz},
                                {"nmse_db", band.value_db}});
    doc["slices_z"] = json::array();
    for (const auto& s : r.slices) doc["slices_z"].push_back(s.z);
    write_text_file(path, doc.dump(2) + "\n");
}

void write_metrics_csv(const MetricsReport& r, const std::string& path) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "model_id," << r.model_id << '\n';
    os << "depth," << r.depth << '\n';
    os << "dataset_id," << r.dataset_id << '\n';
    os << "overall_nmse_db," << format_double(r.overall_nmse_db) << '\n';
    os << "interp_nmse_db," << format_double(r.interp_nmse_db) << '\n';
    os << "extrap_nmse_db," << format_double(r.extrap_nmse_db) << '\n';
    os << "early_nmse_db," << format_double(r.early_nmse_db) << '\n';
    os << "late_nmse_db," << format_double(r.late_nmse_db) << '\n';
    for (const auto& band : r.bands)
        os << "band_" << format_double(band.lo_hz) << '_'
           << format_double(band.hi_hz) << "_nmse_db,"
           << format_double(band.value_db) << '\n';
    write_text_file(path, os.str());
}

void write_slice_csv(const SpatialSlice& slice, const std::string& path) {
    std::ostringstream os;
    os << "y\\x";
    for (Eigen::Index j = 0; j < slice.xs.size(); ++j)
        os << ',' << format_double(slice.xs[j]);
    os << '\n';
    for (Eigen::Index i = 0; i < slice.ys.size(); ++i) {
        os << format_double(slice.ys[i]);
        for (Eigen::Index j = 0; j < slice.xs.size(); ++j)
            os << ',' << format_double(slice.nmse_db(i, j));
        os << '\n';
    }
    write_text_file(path, os.str());
}

void write_frequency_csv(const FrequencyNmse& curve, const std::string& path) {
    std::ostringstream os;
    os << "freq_hz,nmse_db\n";
    for (Eigen::Index k = 0; k < curve.freq_hz.size(); ++k)
        os << format_double(curve.freq_hz[k]) << ','
           << format_double(curve.nmse_db[k]) << '\n';
    write_text_file(path, os.str());
}

namespace {

void heat_color(double t, int& red, int& green, int& blue) {
    t = std::min(1.0, std::max(0.0, t));
    // Two-segment ramp through teal, dark violet to yellow.
    const int stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
    const int seg = t < 0.5 ? 0 : 1;
    const double u = (t - 0.5 * seg) * 2.0;
    red = int(stops[seg][0] + u * (stops[seg + 1][0] - stops[seg][0]));
    green = int(stops[seg][1] + u * (stops[seg + 1][1] - stops[seg][1]));
    blue = int(stops[seg][2] + u * (stops[seg + 1][2] - stops[seg][2]));
}

}  // namespace

void write_slice_svg(const SpatialSlice& slice, const std::string& path) {
    const Eigen::Index nx = slice.xs.size(), ny = slice.ys.size();
    const int cell = 24, margin = 40;
    const int w = margin * 2 + cell * int(nx);
    const int h = margin * 2 + cell * int(ny) + 20;
    const double lo = slice.nmse_db.minCoeff();
    const double hi = slice.nmse_db.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
       << "\" height=\"" << h << "\">\n";
    os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">z = "
       << format_double(slice.z) << " m, NMSE dB in [" << format_double(lo)
       << ", " << format_double(hi) << "]</text>\n";
    for (Eigen::Index i = 0; i < ny; ++i)
        for (Eigen::Index j = 0; j < nx; ++j) {
            int red, green, blue;
            heat_color((slice.nmse_db(i, j) - lo) / span, red, green, blue);
            // y axis points up: last row at the top.
            const int px = margin + int(j) * cell;
            const int py = margin + int(ny - 1 - i) * cell;
            os << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cell
               << "\" height=\"" << cell << "\" fill=\"rgb(" << red << ','
               << green << ',' << blue << ")\"/>\n";
        }
    os << "</svg>\n";
    write_text_file(path, os.str());
}

}  // namespace rirpinn
