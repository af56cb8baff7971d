#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qcd/density_estimation.hpp"
#include "qcd/detectors.hpp"
#include "qcd/distributions.hpp"
#include "qcd/mc_harness.hpp"
#include "qcd/policy.hpp"

namespace qcd::app {

/// Threshold list of one detector. Either explicit values, or one value per
/// alpha produced by a threshold policy.
struct ThresholdSpec {
    std::vector<double> values;
    std::optional<ThresholdPolicy> policy;
    std::vector<double> alphas;

    struct Level {
        double b;
        std::optional<double> alpha;
    };
    /// Levels sorted by b.
    std::vector<Level> levels() const;
};

struct DetectorSpec {
    std::string name;
    Algorithm algorithm = Algorithm::cusum;
    WindowPolicy window;
    EstimatorConfig estimator{};
    bool diagnostics = false;
    ThresholdSpec thresholds;

    /// Detector configuration for a window size.
    DetectorConfig build(const DensityModel& pre, const DensityModel& post, std::size_t window) const;
    /// Window size for a threshold level (0 when the algorithm takes none).
    std::size_t window_for(const ThresholdSpec::Level& level) const;
};

struct MatchSpec {
    std::vector<double> target_mrl;
    double b_start = 1.0;
    double b_step = 0.5;
};

struct OcConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = ".";
    DensityModel pre = DensityModel::gaussian(0.0, 1.0);
    DensityModel post = DensityModel::gaussian(0.0, 1.0);
    std::vector<std::int64_t> change_points{1};
    std::size_t trials = 0;
    std::optional<std::int64_t> mrl_max_len;  // default 50 e^b
    std::int64_t delay_max_len = kDefaultDelayMaxLen;
    std::vector<DetectorSpec> detectors;
    std::optional<MatchSpec> match;
    bool write_trials = true;
    bool write_svg = true;
};

struct QSeries {
    std::string name;
    DensityModel p0 = DensityModel::gaussian(0.0, 1.0);
    EstimatorConfig estimator{};
};

struct QCheckConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = ".";
    std::size_t trials = 0;
    std::vector<std::size_t> m_values;
    std::vector<QSeries> series;
    bool write_svg = true;
};

struct KdeLossConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output_dir = ".";
    std::size_t trials = 0;
    DensityModel truth = DensityModel::gaussian(0.0, 1.0);
    std::vector<std::size_t> windows;
    EstimatorConfig estimator{};
};

/// Parsers for the YAML experiment files. Errors are ConfigError messages
/// that start with the offending field path, e.g. "detectors[1].window.eta: ...".
OcConfig parse_oc_config(const std::string& text);
QCheckConfig parse_qcheck_config(const std::string& text);
KdeLossConfig parse_kdeloss_config(const std::string& text);

OcConfig load_oc_config(const std::string& path);
QCheckConfig load_qcheck_config(const std::string& path);
KdeLossConfig load_kdeloss_config(const std::string& path);

}  // namespace qcd::app
