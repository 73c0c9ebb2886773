#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rirpinn/commands.hpp"
#include "rirpinn/io_util.hpp"

namespace rirpinn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunSummary {
    std::string model_id;
    std::string method;
    int depth = 0;
    double overall = 0.0;
    double interp = 0.0;
    double extrap = 0.0;
    double early = 0.0;
    double late = 0.0;
    std::vector<BandNmse> bands;
    fs::path dir;
};

std::string method_of(const std::string& model_id, int depth) {
    const std::string suffix = "-n" + std::to_string(depth);
    if (model_id.size() > suffix.size() &&
        model_id.compare(model_id.size() - suffix.size(), suffix.size(),
                         suffix) == 0)
        return model_id.substr(0, model_id.size() - suffix.size());
    return model_id;
}

RunSummary load_summary(const fs::path& dir) {
    const json doc = json::parse(read_text_file((dir / "metrics.json").string()));
    RunSummary s;
    s.model_id = doc.at("model_id").get<std::string>();
    s.depth = doc.at("depth").get<int>();
    s.method = method_of(s.model_id, s.depth);
    s.overall = doc.at("overall_nmse_db").get<double>();
    s.interp = doc.at("interp_nmse_db").get<double>();
    s.extrap = doc.at("extrap_nmse_db").get<double>();
    s.early = doc.at("early_nmse_db").get<double>();
    s.late = doc.at("late_nmse_db").get<double>();
    for (const json& b : doc.at("bands")) {
        BandNmse band;
        band.lo_hz = b.at("lo_hz").get<double>();
        band.hi_hz = b.at("hi_hz").get<double>();
        band.value_db = b.at("nmse_db").get<double>();
        s.bands.push_back(band);
    }
    s.dir = dir;
    return s;
}

std::string fixed2(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << v;
    return out.str();
}

// Rows of cells rendered with per-column width; first row is the header.
std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    }
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c > 0) out << "  ";
            out << std::setw(static_cast<int>(widths[c]))
                << (c == 0 ? std::left : std::right) << rows[r][c];
        }
        out << "\n";
        if (r == 0) {
            for (std::size_t c = 0; c < widths.size(); ++c) {
                if (c > 0) out << "  ";
                out << std::string(widths[c], '-');
            }
            out << "\n";
        }
    }
    return out.str();
}

struct Series {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string tick_label(double v) {
    std::ostringstream out;
    out << std::setprecision(4) << v;
    return out.str();
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
    bool first = true;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            if (first) {
                x_min = x_max = s.xs[i];
                y_min = y_max = s.ys[i];
                first = false;
            } else {
                x_min = std::min(x_min, s.xs[i]);
                x_max = std::max(x_max, s.xs[i]);
                y_min = std::min(y_min, s.ys[i]);
                y_max = std::max(y_max, s.ys[i]);
            }
        }
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    if (y_max <= y_min) y_max = y_min + 1.0;
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double width = 720.0, height = 480.0;
    const double left = 72.0, right = 24.0, top = 44.0, bottom = 56.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const auto px = [&](double x) {
        return left + (x - x_min) / (x_max - x_min) * plot_w;
    };
    const auto py = [&](double y) {
        return top + (y_max - y) / (y_max - y_min) * plot_h;
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << title
        << "</text>\n";

    const int ticks = 5;
    svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (int i = 0; i <= ticks; ++i) {
        const double fx = x_min + (x_max - x_min) * i / ticks;
        const double gx = px(fx);
        svg << "<line x1=\"" << gx << "\" y1=\"" << top << "\" x2=\"" << gx
            << "\" y2=\"" << top + plot_h << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << gx << "\" y=\"" << top + plot_h + 16
            << "\" text-anchor=\"middle\">" << tick_label(fx) << "</text>\n";
        const double fy = y_min + (y_max - y_min) * i / ticks;
        const double gy = py(fy);
        svg << "<line x1=\"" << left << "\" y1=\"" << gy << "\" x2=\""
            << left + plot_w << "\" y2=\"" << gy << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << gy + 4
            << "\" text-anchor=\"end\">" << tick_label(fy) << "</text>\n";
    }
    svg << "</g>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"13\">" << x_label << "</text>\n";
    svg << "<text x=\"18\" y=\"" << top + plot_h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"13\" transform=\"rotate(-90 18 " << top + plot_h / 2
        << ")\">" << y_label << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))];
        svg << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.6\" points=\"";
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
            svg << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
        }
        svg << "\"/>\n";
        const double ly = top + 14 + 16.0 * static_cast<double>(si);
        svg << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly
            << "\" x2=\"" << left + plot_w - 126 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << left + plot_w - 120 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name
            << "</text>\n";
    }
    svg << "</svg>\n";
    write_text_file(path, svg.str());
}

std::vector<std::pair<double, double>> read_loss_curve(const fs::path& log_path) {
    std::vector<std::pair<double, double>> points;
    if (!fs::exists(log_path)) return points;
    const std::string text = read_text_file(log_path.string());
    bool header = true;
    for (const std::string& line : split(text, '\n')) {
        if (header) {
            header = false;
            continue;
        }
        const std::string t = trim(line);
        if (t.empty()) continue;
        const std::vector<std::string> cols = split(t, ',');
        if (cols.size() < 4) continue;
        points.emplace_back(std::stod(cols[0]), std::stod(cols[3]));
    }
    return points;
}

}  // namespace

void cmd_report(const ExperimentConfig& config, const ReportOptions& options) {
    config.validate();
    const fs::path out(resolve_output_dir(config));
    const fs::path runs_dir =
        options.runs_dir.empty() ? out / "runs" : fs::path(options.runs_dir);
    const fs::path report_dir =
        options.out_dir.empty() ? out / "report" : fs::path(options.out_dir);
    if (!fs::exists(runs_dir))
        throw ConfigError("runs directory not found: " + runs_dir.string());

    std::vector<fs::path> dirs;
    for (const auto& item : fs::directory_iterator(runs_dir)) {
        if (item.is_directory() && fs::exists(item.path() / "metrics.json"))
            dirs.push_back(item.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty())
        throw ConfigError("no evaluated runs (metrics.json) under " +
                          runs_dir.string());

    std::vector<RunSummary> runs;
    runs.reserve(dirs.size());
    for (const fs::path& dir : dirs) runs.push_back(load_summary(dir));
    std::stable_sort(runs.begin(), runs.end(),
                     [](const RunSummary& a, const RunSummary& b) {
                         if (a.method != b.method) return a.method < b.method;
                         return a.depth < b.depth;
                     });

    std::map<std::string, const RunSummary*> best;
    for (const RunSummary& r : runs) {
        auto it = best.find(r.method);
        if (it == best.end() || r.overall < it->second->overall)
            best[r.method] = &r;
    }

    fs::create_directories(report_dir);

    {
        std::ostringstream csv;
        csv << "method,depth,overall_nmse_db\n";
        for (const RunSummary& r : runs)
            csv << r.method << ',' << r.depth << ','
                << format_double(r.overall) << "\n";
        write_text_file((report_dir / "nmse_vs_depth.csv").string(), csv.str());
    }
    {
        std::ostringstream csv;
        csv << "method,depth,overall_nmse_db\n";
        for (const auto& [method, r] : best)
            csv << method << ',' << r->depth << ',' << format_double(r->overall)
                << "\n";
        write_text_file((report_dir / "best_per_method.csv").string(),
                        csv.str());
    }
    {
        std::ostringstream csv;
        csv << "method,depth,interp_nmse_db,extrap_nmse_db\n";
        for (const auto& [method, r] : best)
            csv << method << ',' << r->depth << ',' << format_double(r->interp)
                << ',' << format_double(r->extrap) << "\n";
        write_text_file((report_dir / "interp_extrap.csv").string(), csv.str());
    }
    {
        std::ostringstream csv;
        csv << "method,depth,early_nmse_db,late_nmse_db\n";
        for (const auto& [method, r] : best)
            csv << method << ',' << r->depth << ',' << format_double(r->early)
                << ',' << format_double(r->late) << "\n";
        write_text_file((report_dir / "early_late.csv").string(), csv.str());
    }
    {
        std::ostringstream csv;
        csv << "method,depth,band_lo_hz,band_hi_hz,nmse_db\n";
        for (const auto& [method, r] : best)
            for (const BandNmse& band : r->bands)
                csv << method << ',' << r->depth << ','
                    << format_double(band.lo_hz) << ','
                    << format_double(band.hi_hz) << ','
                    << format_double(band.value_db) << "\n";
        write_text_file((report_dir / "bands.csv").string(), csv.str());
    }

    std::set<int> depth_set;
    for (const RunSummary& r : runs) depth_set.insert(r.depth);
    const std::vector<int> depths(depth_set.begin(), depth_set.end());

    std::ostringstream text;
    text << "overall NMSE (dB) by depth\n";
    {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"method"};
        for (int d : depths) header.push_back("n=" + std::to_string(d));
        rows.push_back(header);
        std::vector<std::string> methods;
        for (const RunSummary& r : runs)
            if (methods.empty() || methods.back() != r.method)
                methods.push_back(r.method);
        for (const std::string& method : methods) {
            std::vector<std::string> row{method};
            for (int d : depths) {
                std::string cell;
                for (const RunSummary& r : runs)
                    if (r.method == method && r.depth == d)
                        cell = fixed2(r.overall);
                row.push_back(cell);
            }
            rows.push_back(row);
        }
        text << render_table(rows) << "\n";
    }
    text << "best per method\n";
    {
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"method", "depth", "overall", "interp", "extrap",
                        "early", "late"});
        for (const auto& [method, r] : best)
            rows.push_back({method, std::to_string(r->depth),
                            fixed2(r->overall), fixed2(r->interp),
                            fixed2(r->extrap), fixed2(r->early),
                            fixed2(r->late)});
        text << render_table(rows) << "\n";
    }
    text << "band NMSE (dB), best model per method\n";
    {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"method"};
        const RunSummary* sample = best.begin()->second;
        for (const BandNmse& band : sample->bands) {
            std::ostringstream name;
            name << std::setprecision(5) << band.lo_hz << "-" << band.hi_hz
                 << " Hz";
            header.push_back(name.str());
        }
        rows.push_back(header);
        for (const auto& [method, r] : best) {
            std::vector<std::string> row{method};
            for (const BandNmse& band : r->bands)
                row.push_back(fixed2(band.value_db));
            rows.push_back(row);
        }
        text << render_table(rows) << "\n";
    }
    write_text_file((report_dir / "tables.txt").string(), text.str());
    std::cout << text.str();

    if (options.svg) {
        std::map<std::string, Series> by_method;
        for (const RunSummary& r : runs) {
            Series& s = by_method[r.method];
            s.name = r.method;
            s.xs.push_back(static_cast<double>(r.depth));
            s.ys.push_back(r.overall);
        }
        std::vector<Series> depth_series;
        for (auto& [name, s] : by_method) depth_series.push_back(std::move(s));
        write_line_chart((report_dir / "nmse_vs_depth.svg").string(),
                         "overall NMSE by network depth", "hidden layers",
                         "NMSE (dB)", depth_series);

        std::vector<Series> loss_series;
        for (const RunSummary& r : runs) {
            const auto curve = read_loss_curve(r.dir / "log.csv");
            if (curve.empty()) continue;
            Series s;
            s.name = r.model_id;
            const std::size_t stride = std::max<std::size_t>(1, curve.size() / 512);
            for (std::size_t i = 0; i < curve.size(); i += stride) {
                s.xs.push_back(curve[i].first);
                s.ys.push_back(std::log10(std::max(curve[i].second, 1e-300)));
            }
            loss_series.push_back(std::move(s));
        }
        if (!loss_series.empty())
            write_line_chart((report_dir / "loss_curves.svg").string(),
                             "training loss", "iteration", "log10 total loss",
                             loss_series);
    }

    std::cout << "report written to " << report_dir.string() << "\n";
}

}  // namespace rirpinn
