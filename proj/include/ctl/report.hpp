#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "branch.hpp"

namespace ctl {

/// Round-trip formatting of doubles; fixed so reruns are byte-identical.
inline std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

inline std::string trace_csv(const std::vector<TraceRow>& rows)
{
    std::ostringstream os;
    os << "lambda,epsilon,iter,quotient,grad_term,mass_term,grad_norm,step\n";
    for (const auto& r : rows)
        os << fmt(r.lambda) << ',' << fmt(r.epsilon) << ',' << r.iter << ',' << fmt(r.quotient) << ','
           << fmt(r.grad_term) << ',' << fmt(r.mass_term) << ',' << fmt(r.grad_norm) << ',' << fmt(r.step) << '\n';
    return os.str();
}

/// One row per branch per lambda stage.
inline std::string branches_csv(const std::vector<Branch>& branches)
{
    std::ostringstream os;
    os << "k,seed,lambda,quotient,threshold,threshold_ratio,iterations,grad_norm,converged,line_search_failed,"
          "neighborhood_mass,escaped,reinitialized,peak_count,total_peak_mass,peak_masses,matched,concentrated\n";
    for (const auto& b : branches)
        for (const auto& s : b.stages) {
            os << b.group_spec.k << ',' << b.seed << ',' << fmt(s.lambda) << ',' << fmt(s.energy.quotient) << ',';
            if (s.classification)
                os << fmt(s.classification->threshold) << ',' << fmt(s.classification->threshold_ratio) << ',';
            else
                os << ",,";
            os << s.iterations << ',' << fmt(s.grad_norm) << ',' << s.converged << ',' << s.line_search_failed << ','
               << fmt(s.neighborhood_mass) << ',' << s.escaped << ',' << s.reinitialized << ',';
            if (s.peaks) {
                os << s.peaks->peaks.size() << ',' << fmt(s.peaks->total_mass) << ',';
                for (std::size_t i = 0; i < s.peaks->peaks.size(); ++i)
                    os << (i ? ";" : "") << fmt(s.peaks->peaks[i].mass);
                os << ',' << s.peaks->matched << ',';
            } else {
                os << ",,,,";
            }
            os << (s.classification && s.classification->concentrated) << '\n';
        }
    return os.str();
}

inline nlohmann::json branch_json(const Branch& b)
{
    nlohmann::json j = {{"k", b.group_spec.k}, {"l", b.group_spec.l}, {"seed", b.seed}, {"m_A", b.orbital_set.m_A},
                        {"kappa", b.orbital_set.kappa}};
    for (const auto& s : b.stages) {
        nlohmann::json st = {{"lambda", s.lambda},
                             {"quotient", s.energy.quotient},
                             {"iterations", s.iterations},
                             {"grad_norm", s.grad_norm},
                             {"converged", s.converged},
                             {"line_search_failed", s.line_search_failed},
                             {"neighborhood_mass", s.neighborhood_mass},
                             {"escaped", s.escaped}};
        if (!s.error.empty()) st["error"] = s.error;
        if (s.peaks) {
            st["total_peak_mass"] = s.peaks->total_mass;
            auto& pk = st["peaks"] = nlohmann::json::array();
            for (const auto& p : s.peaks->peaks) pk.push_back({{"location", p.location}, {"mass", p.mass}});
        }
        if (s.classification) {
            const auto& c = *s.classification;
            st["classification"] = {{"peak_count", c.peak_count}, {"threshold", c.threshold},
                                    {"threshold_ratio", c.threshold_ratio}, {"matched", c.matched},
                                    {"concentrated", c.concentrated}, {"key", c.key()}};
        }
        j["stages"].push_back(std::move(st));
    }
    return j;
}

inline nlohmann::json summary_json(const std::vector<Branch>& branches, const NonequivalenceReport& rep)
{
    nlohmann::json j;
    j["lambda"] = rep.lambda;
    j["nonequivalent_count"] = rep.nonequivalent_count;
    j["branches"] = nlohmann::json::array();
    for (const auto& b : branches) j["branches"].push_back(branch_json(b));
    auto& cl = j["classes"] = nlohmann::json::object();
    for (const auto& [count, n] : rep.classes) cl[std::to_string(count)] = n;
    return j;
}

// ---------------------------------------------------------------------------
// minimal SVG plotting

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool dashed = false;
    bool markers = true;
};

namespace detail {
inline const char* palette(std::size_t i)
{
    static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % 6];
}

inline std::string svg_num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}
}  // namespace detail

/// Line chart; log_x plots log10(x) with decade labels.
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series, bool log_x = false)
{
    constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, tx(s.x[i])), x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
        }
    if (!(x1 > x0)) x0 -= 1, x1 += 1;
    if (!(y1 > y0)) y0 -= 1, y1 += 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad, y1 += pad;
    auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    using detail::svg_num;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0;
        os << "<text x=\"" << L - 6 << "\" y=\"" << svg_num(py(yv) + 4) << "\" text-anchor=\"end\">"
           << detail::tick_label(yv) << "</text>\n";
        const double xv = x0 + (x1 - x0) * i / 4.0;
        const double xs = L + (xv - x0) / (x1 - x0) * (W - L - R);
        os << "<text x=\"" << svg_num(xs) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
           << detail::tick_label(log_x ? std::pow(10.0, xv) : xv) << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
       << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"1.5\""
           << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << svg_num(px(s.x[i])) << ',' << svg_num(py(s.y[i]));
        os << "\"/>\n";
        if (s.markers)
            for (std::size_t i = 0; i < s.x.size(); ++i)
                os << "<circle cx=\"" << svg_num(px(s.x[i])) << "\" cy=\"" << svg_num(py(s.y[i])) << "\" r=\"3\" fill=\""
                   << detail::palette(k) << "\"/>\n";
        const double ly = T + 16.0 * static_cast<double>(k);
        os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << detail::palette(k) << "\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
           << "/>\n<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values, double reference)
{
    constexpr double W = 480, H = 320, L = 60, R = 20, T = 40, B = 50;
    double ymax = reference;
    for (double v : values) ymax = std::max(ymax, v);
    ymax *= 1.15;
    if (!(ymax > 0)) ymax = 1;
    const double n = std::max<double>(1, static_cast<double>(values.size()));
    const double bw = (W - L - R) / n;
    auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };
    using detail::svg_num;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = L + bw * static_cast<double>(i) + 0.15 * bw;
        os << "<rect x=\"" << svg_num(x) << "\" y=\"" << svg_num(py(values[i])) << "\" width=\"" << svg_num(0.7 * bw)
           << "\" height=\"" << svg_num(H - B - py(values[i])) << "\" fill=\"" << detail::palette(0) << "\"/>\n";
        os << "<text x=\"" << svg_num(x + 0.35 * bw) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
           << labels[i] << "</text>\n";
        os << "<text x=\"" << svg_num(x + 0.35 * bw) << "\" y=\"" << svg_num(py(values[i]) - 4)
           << "\" text-anchor=\"middle\">" << detail::tick_label(values[i]) << "</text>\n";
    }
    os << "<line x1=\"" << L << "\" y1=\"" << svg_num(py(reference)) << "\" x2=\"" << W - R << "\" y2=\""
       << svg_num(py(reference)) << "\" stroke=\"" << detail::palette(1) << "\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << W - R << "\" y=\"" << svg_num(py(reference) - 4) << "\" text-anchor=\"end\">1/m = "
       << detail::tick_label(reference) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

/// Normalized boundary q-mass binned by azimuth (disk: polar angle) over [0, 2 pi).
inline std::vector<double> azimuthal_density(const NodalField& u, const Functional& F, const Params& prm, int bins)
{
    const auto m = F.trace_point_masses(u, prm);
    const auto& pts = F.boundary_points();
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        double th = std::atan2(pts[i][1], pts[i][0]);
        if (th < 0) th += 2.0 * std::numbers::pi;
        const auto b = std::min<std::size_t>(static_cast<std::size_t>(th / (2.0 * std::numbers::pi) * bins),
                                             static_cast<std::size_t>(bins - 1));
        h[b] += m[i];
    }
    const double width = 2.0 * std::numbers::pi / bins;
    for (double& v : h) v /= width;
    return h;
}

}  // namespace ctl
