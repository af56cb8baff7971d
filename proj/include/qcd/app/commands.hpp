#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qcd/app/config.hpp"
#include "qcd/app/csv.hpp"

namespace qcd::app {

/// Command-line overrides of config values.
struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> output_dir;
    std::ostream* log = nullptr;  // progress and warnings
};

struct OcTables {
    CsvTable curve{{"detector", "b", "mrl", "mrl_se", "delay", "delay_se", "trunc_frac", "trials"}};
    CsvTable trials{{"detector", "b", "seed", "nu", "tau", "truncated"}};
};

OcTables run_oc(const OcConfig& config, std::ostream* log = nullptr);
CsvTable run_qcheck(const QCheckConfig& config, std::ostream* log = nullptr);
CsvTable run_kdeloss(const KdeLossConfig& config, std::ostream* log = nullptr);

/// Each command loads the config, applies overrides, runs, and writes its
/// files into the output directory. Returns the paths written.
std::vector<std::string> cmd_oc(const std::string& config_path, const RunOptions& options);
std::vector<std::string> cmd_qcheck(const std::string& config_path, const RunOptions& options);
std::vector<std::string> cmd_kdeloss(const std::string& config_path, const RunOptions& options);

struct SolveInputs {
    double alpha = 0.01;
    double varsigma = 3.0;
    double kappa = 0.5;
    double gamma = 2.0;
    std::size_t dim = 1;
    double eta = 1.5;
    std::optional<double> nominal_divergence;
    std::size_t w_max = 10;
};

/// Policy values as "name = value" lines.
std::string cmd_solve(const SolveInputs& inputs);

}  // namespace qcd::app
