#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qcd/app/csv.hpp"

namespace qcd::app {

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::optional<double> reference_y;  // dashed horizontal line
};

std::string render_line_plot(const std::vector<PlotSeries>& series, const PlotSpec& spec);

/// Expected delay against mean run length (log x), one series per detector.
std::string render_oc_svg(const CsvTable& oc_curve);

/// Margin log Q(m) - 3 log m against m with a zero line, one series per series name.
std::string render_qcheck_svg(const CsvTable& qcheck);

}  // namespace qcd::app
