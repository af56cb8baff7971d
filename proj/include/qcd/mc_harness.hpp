#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qcd/density_estimation.hpp"
#include "qcd/detectors.hpp"
#include "qcd/distributions.hpp"

namespace qcd {

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

DetectorFactory factory_for(DetectorConfig config);

/// One simulated run. `tau` is the stopping time, or the run length when the
/// run was truncated before crossing.
struct TrialRecord {
    std::uint64_t seed = 0;
    std::int64_t nu = kNoChange;
    std::int64_t tau = 0;
    bool truncated = false;
    double threshold = 0.0;
};

/// Running-maximum record of one statistic trajectory. Holds enough to read
/// off the first crossing time of every level up to the scan cap.
class CrossingScan {
public:
    void observe(std::int64_t n, double statistic);
    void set_length(std::int64_t length) noexcept { length_ = length; }

    /// First n with statistic >= b, if it happened within the scanned length.
    std::optional<std::int64_t> first_crossing(double b) const;
    std::int64_t length() const noexcept { return length_; }
    double running_max() const noexcept;
    const std::vector<double>& levels() const noexcept { return levels_; }

private:
    std::vector<std::int64_t> times_;
    std::vector<double> levels_;  // strictly increasing
    std::int64_t length_ = 0;
};

/// A detector fed by its own sample stream; can be advanced in stages.
class PathRun {
public:
    PathRun(const ChangePointProcess& process, std::uint64_t seed, std::unique_ptr<Detector> detector);

    /// Steps until the running max reaches `cap` or the path has max_len samples.
    void advance(double cap, std::int64_t max_len);

    const CrossingScan& scan() const noexcept { return scan_; }
    const Detector& detector() const noexcept { return *detector_; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    PathSampler sampler_;
    std::unique_ptr<Detector> detector_;
    CrossingScan scan_;
};

/// Seed of trial t drawn from a process.
inline std::uint64_t trial_seed(const ChangePointProcess& process, std::size_t trial) {
    return derive_seed(process.seed, trial);
}

/// Streams the process (seeded with process.seed) into a fresh detector until
/// the statistic first reaches b or max_len samples have been used.
TrialRecord run_trial(const ChangePointProcess& process, const DetectorFactory& factory, double b,
                      std::int64_t max_len);

struct RunLengthEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double truncated_fraction = 0.0;
    std::size_t trials = 0;
    std::int64_t dominance_violations = 0;
    /// Truncation fraction above one half: the mean is a loose lower bound.
    bool warning() const noexcept { return truncated_fraction > 0.5; }
};

struct DelayEstimate {
    double mean = 0.0;  // of tau - nu + 1 over runs with tau >= nu
    double std_error = 0.0;
    double premature_fraction = 0.0;
    double truncated_fraction = 0.0;
    std::size_t trials = 0;
    std::size_t counted = 0;  // runs with tau >= nu
    std::int64_t dominance_violations = 0;
};

/// Default truncation for mean-run-length runs: 50 e^b, capped at 10^8.
std::int64_t default_mrl_max_len(double b);
inline constexpr std::int64_t kDefaultDelayMaxLen = 10000;

struct HarnessOptions {
    std::size_t threads = 1;
    std::vector<TrialRecord>* trial_log = nullptr;  // appended in trial order when set
};

/// Mean run length under no change (process.nu must be kNoChange).
RunLengthEstimate estimate_mrl(const ChangePointProcess& process, const DetectorFactory& factory,
                               double b, std::size_t trials, std::int64_t max_len,
                               const HarnessOptions& options = {});

/// Mean detection delay at the process change point.
DelayEstimate estimate_delay(const ChangePointProcess& process, const DetectorFactory& factory,
                             double b, std::size_t trials, std::int64_t max_len,
                             const HarnessOptions& options = {});

struct OCPoint {
    double threshold = 0.0;
    RunLengthEstimate run_length;
    DelayEstimate delay;

    double far() const noexcept { return 1.0 / run_length.mean; }
    /// Delta-method SE of 1 / MRL.
    double far_std_error() const noexcept {
        return run_length.std_error / (run_length.mean * run_length.mean);
    }
};

/// One OC point per threshold. Every no-change path and every change path is
/// simulated once up to the largest threshold and read at each level.
std::vector<OCPoint> oc_curve(const ChangePointProcess& no_change, const ChangePointProcess& change,
                              const DetectorFactory& factory, const std::vector<double>& thresholds,
                              std::size_t trials, std::int64_t mrl_max_len,
                              std::int64_t delay_max_len, const HarnessOptions& options = {});

struct MatchedThreshold {
    double threshold = 0.0;
    RunLengthEstimate run_length;
};

/// Smallest recorded running-max level whose estimated mean run length
/// reaches `target_mrl`.
/// No-change paths are extended in steps of `b_step` from `b_start` until the
/// target is passed, then the threshold is read off the recorded levels.
MatchedThreshold match_threshold(const ChangePointProcess& no_change, const DetectorFactory& factory,
                                 double target_mrl, std::size_t trials, std::int64_t max_len,
                                 double b_start, double b_step, const HarnessOptions& options = {});

struct ConditionRow {
    std::size_t m = 0;
    double q_estimate = 0.0;
    double q_std_error = 0.0;
    double log_q = 0.0;
    double margin = 0.0;  // log Q(m) - 3 log m
};

struct ConditionReport {
    std::vector<ConditionRow> rows;
    std::size_t trials = 0;
};

/// Monte Carlo estimate of Q(m) = E[max_{n=2..m} prod_{i<=n} p_hat_{-i}(X_i) / p0(X_i)]
/// under X_i ~ p0, where p_hat_{-i} is built from X_1..X_n without X_i and the
/// bandwidth rule is evaluated at n. All m share the same simulated paths.
ConditionReport check_q(const DensityModel& p0, const std::vector<std::size_t>& m_values,
                        const EstimatorConfig& estimator, std::size_t trials, std::uint64_t seed,
                        std::size_t threads = 1);

}  // namespace qcd
