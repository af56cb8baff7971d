#include "qcd/app/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace qcd::app {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 480;
constexpr double kLeft = 80;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v, const char* pattern = "%.2f") {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, pattern, v);
    return buffer;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<double> linear_ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double base = std::pow(10.0, std::floor(std::log10(raw)));
    double step = base;
    for (double f : {1.0, 2.0, 5.0, 10.0}) {
        step = f * base;
        if (span / step <= 6.0) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
        ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    }
    return ticks;
}

struct Axis {
    double lo;
    double hi;
    bool log;
    double pixel_lo;
    double pixel_hi;

    double map(double v) const {
        const double a = log ? std::log10(lo) : lo;
        const double b = log ? std::log10(hi) : hi;
        const double x = log ? std::log10(v) : v;
        return pixel_lo + (x - a) / (b - a) * (pixel_hi - pixel_lo);
    }
};

void pad_range(double& lo, double& hi, bool log) {
    if (log) {
        lo = std::pow(10.0, std::floor(std::log10(lo)));
        hi = std::pow(10.0, std::ceil(std::log10(hi)));
        if (lo == hi) hi = lo * 10.0;
        return;
    }
    if (lo == hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

}  // namespace

std::string render_line_plot(const std::vector<PlotSeries>& series, const PlotSpec& spec) {
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo;
    double y_lo = x_lo;
    double y_hi = -x_lo;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y) || (spec.log_x && !(x > 0.0))) continue;
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (spec.reference_y) {
        y_lo = std::min(y_lo, *spec.reference_y);
        y_hi = std::max(y_hi, *spec.reference_y);
    }
    if (!std::isfinite(x_lo)) {
        x_lo = spec.log_x ? 1.0 : 0.0;
        x_hi = spec.log_x ? 10.0 : 1.0;
    }
    if (!std::isfinite(y_lo)) {
        y_lo = 0.0;
        y_hi = 1.0;
    }
    pad_range(x_lo, x_hi, spec.log_x);
    pad_range(y_lo, y_hi, false);
    const Axis xa{x_lo, x_hi, spec.log_x, kLeft, kWidth - kRight};
    const Axis ya{y_lo, y_hi, false, kHeight - kBottom, kTop};

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth, "%.0f") + "\" height=\"" +
           fmt(kHeight, "%.0f") + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt((kLeft + kWidth - kRight) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(spec.title) + "</text>\n";

    // Grid and ticks.
    std::vector<double> x_ticks;
    if (spec.log_x) {
        for (double t = x_lo; t <= x_hi * (1 + 1e-12); t *= 10.0) x_ticks.push_back(t);
    } else {
        x_ticks = linear_ticks(x_lo, x_hi);
    }
    for (double t : x_ticks) {
        const double px = xa.map(t);
        out += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(px) + "\" y2=\"" +
               fmt(kHeight - kBottom) + "\" stroke=\"#e0e0e0\"/>\n";
        out += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(kHeight - kBottom + 18) +
               "\" text-anchor=\"middle\">" + fmt(t, "%g") + "</text>\n";
    }
    for (double t : linear_ticks(y_lo, y_hi)) {
        const double py = ya.map(t);
        out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(kWidth - kRight) +
               "\" y2=\"" + fmt(py) + "\" stroke=\"#e0e0e0\"/>\n";
        out += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(py + 4) + "\" text-anchor=\"end\">" +
               fmt(t, "%g") + "</text>\n";
    }
    out += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(kWidth - kRight - kLeft) +
           "\" height=\"" + fmt(kHeight - kBottom - kTop) + "\" fill=\"none\" stroke=\"black\"/>\n";
    if (spec.reference_y) {
        const double py = ya.map(*spec.reference_y);
        out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(kWidth - kRight) +
               "\" y2=\"" + fmt(py) + "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
    }
    out += "<text x=\"" + fmt((kLeft + kWidth - kRight) / 2) + "\" y=\"" + fmt(kHeight - 18) +
           "\" text-anchor=\"middle\">" + escape(spec.x_label) + "</text>\n";
    out += "<text transform=\"translate(20," + fmt((kTop + kHeight - kBottom) / 2) +
           ") rotate(-90)\" text-anchor=\"middle\">" + escape(spec.y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const std::string color = kPalette[s % std::size(kPalette)];
        std::string points;
        std::string markers;
        for (const auto& [x, y] : series[s].points) {
            if (!std::isfinite(x) || !std::isfinite(y) || (spec.log_x && !(x > 0.0))) continue;
            const std::string px = fmt(xa.map(x));
            const std::string py = fmt(ya.map(y));
            if (!points.empty()) points += ' ';
            points += px + "," + py;
            markers += "<circle cx=\"" + px + "\" cy=\"" + py + "\" r=\"3\" fill=\"" + color + "\"/>\n";
        }
        out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        out += markers;
        const double ly = kTop + 10 + 20 * static_cast<double>(s);
        const double lx = kWidth - kRight + 12;
        out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(lx + 24) + "\" y2=\"" + fmt(ly) +
               "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt(lx + 30) + "\" y=\"" + fmt(ly + 4) + "\">" + escape(series[s].name) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

namespace {

std::vector<PlotSeries> group_rows(const CsvTable& table, const std::string& key, const std::string& x,
                                   const std::string& y) {
    const std::size_t k = table.column(key);
    const std::size_t xi = table.column(x);
    const std::size_t yi = table.column(y);
    std::vector<PlotSeries> series;
    std::map<std::string, std::size_t> index;
    for (const auto& row : table.rows()) {
        auto [it, inserted] = index.try_emplace(row[k], series.size());
        if (inserted) series.push_back({row[k], {}});
        series[it->second].points.emplace_back(parse_number(row[xi]), parse_number(row[yi]));
    }
    for (auto& s : series) std::sort(s.points.begin(), s.points.end());
    return series;
}

}  // namespace

std::string render_oc_svg(const CsvTable& oc_curve) {
    PlotSpec spec;
    spec.title = "Operating characteristics";
    spec.x_label = "mean run length to false alarm";
    spec.y_label = "expected detection delay";
    spec.log_x = true;
    return render_line_plot(group_rows(oc_curve, "detector", "mrl", "delay"), spec);
}

std::string render_qcheck_svg(const CsvTable& qcheck) {
    PlotSpec spec;
    spec.title = "Condition check";
    spec.x_label = "m";
    spec.y_label = "log Q(m) - 3 log m";
    spec.reference_y = 0.0;
    return render_line_plot(group_rows(qcheck, "series", "m", "margin"), spec);
}

}  // namespace qcd::app
