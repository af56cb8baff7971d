#include "qcd/mc_harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qcd/errors.hpp"
#include "qcd/parallel.hpp"

namespace qcd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_trials(std::size_t trials) {
    if (trials < 2) throw ConfigError("Monte Carlo estimates need at least two trials");
}

void require_max_len(std::int64_t max_len) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
}

void require_threshold(double b) {
    if (std::isnan(b)) throw ConfigError("threshold is NaN");
}

struct ScanResult {
    std::uint64_t seed = 0;
    CrossingScan scan;
    std::int64_t violations = 0;
};

std::vector<ScanResult> scan_trials(const ChangePointProcess& process, const DetectorFactory& factory,
                                    double cap, std::int64_t max_len, std::size_t trials,
                                    std::size_t threads) {
    process.validate();
    std::vector<ScanResult> results(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        PathRun run(process, trial_seed(process, t), factory());
        run.advance(cap, max_len);
        results[t] = {run.seed(), run.scan(), run.detector().diagnostic_violations()};
    });
    return results;
}

struct Reading {
    std::int64_t tau;
    bool truncated;
};

Reading read_at(const CrossingScan& scan, double b) {
    if (const auto tau = scan.first_crossing(b)) return {*tau, false};
    return {scan.length(), true};
}

RunLengthEstimate run_length_at(const std::vector<ScanResult>& results, double b,
                                std::vector<TrialRecord>* log) {
    MeanAccumulator acc;
    std::size_t truncated = 0;
    RunLengthEstimate out;
    for (const auto& r : results) {
        const Reading reading = read_at(r.scan, b);
        acc.add(static_cast<double>(reading.tau));
        if (reading.truncated) ++truncated;
        out.dominance_violations += r.violations;
        if (log != nullptr) log->push_back({r.seed, kNoChange, reading.tau, reading.truncated, b});
    }
    out.mean = acc.mean();
    out.std_error = acc.std_error();
    out.trials = results.size();
    out.truncated_fraction = static_cast<double>(truncated) / static_cast<double>(results.size());
    return out;
}

DelayEstimate delay_at(const std::vector<ScanResult>& results, std::int64_t nu, double b,
                       std::vector<TrialRecord>* log) {
    MeanAccumulator acc;
    std::size_t premature = 0;
    std::size_t truncated = 0;
    DelayEstimate out;
    for (const auto& r : results) {
        const Reading reading = read_at(r.scan, b);
        if (reading.truncated) ++truncated;
        if (reading.tau < nu) {
            ++premature;
        } else {
            acc.add(static_cast<double>(reading.tau - nu + 1));
        }
        out.dominance_violations += r.violations;
        if (log != nullptr) log->push_back({r.seed, nu, reading.tau, reading.truncated, b});
    }
    const auto total = static_cast<double>(results.size());
    out.mean = acc.count() > 0 ? acc.mean() : std::numeric_limits<double>::quiet_NaN();
    out.std_error = acc.std_error();
    out.trials = results.size();
    out.counted = acc.count();
    out.premature_fraction = static_cast<double>(premature) / total;
    out.truncated_fraction = static_cast<double>(truncated) / total;
    return out;
}

void require_no_change(const ChangePointProcess& process) {
    if (process.nu != kNoChange) throw ConfigError("run-length estimation needs a process with nu = inf");
}

void require_change(const ChangePointProcess& process) {
    if (process.nu == kNoChange) throw ConfigError("delay estimation needs a finite change point");
}

}  // namespace

DetectorFactory factory_for(DetectorConfig config) {
    make_detector(config);  // surface configuration errors now
    return [config = std::move(config)] { return make_detector(config); };
}

void CrossingScan::observe(std::int64_t n, double statistic) {
    if (levels_.empty() || statistic > levels_.back()) {
        times_.push_back(n);
        levels_.push_back(statistic);
    }
}

std::optional<std::int64_t> CrossingScan::first_crossing(double b) const {
    const auto it = std::lower_bound(levels_.begin(), levels_.end(), b);
    if (it == levels_.end()) return std::nullopt;
    return times_[static_cast<std::size_t>(it - levels_.begin())];
}

double CrossingScan::running_max() const noexcept {
    return levels_.empty() ? -kInf : levels_.back();
}

PathRun::PathRun(const ChangePointProcess& process, std::uint64_t seed,
                 std::unique_ptr<Detector> detector)
    : seed_(seed), sampler_(process, seed), detector_(std::move(detector)) {
    if (!detector_) throw ConfigError("detector factory returned no detector");
    if (detector_->dim() != process.pre.dim()) {
        throw ConfigError("detector dimension differs from the process dimension");
    }
}

void PathRun::advance(double cap, std::int64_t max_len) {
    const std::int64_t first = detector_->first_stop_index();
    while (scan_.length() < max_len && !(scan_.running_max() >= cap)) {
        const double statistic = detector_->step(sampler_.next());
        const std::int64_t n = detector_->count();
        if (n >= first) scan_.observe(n, statistic);
        scan_.set_length(n);
    }
}

TrialRecord run_trial(const ChangePointProcess& process, const DetectorFactory& factory, double b,
                      std::int64_t max_len) {
    require_max_len(max_len);
    require_threshold(b);
    process.validate();
    PathRun run(process, process.seed, factory());
    run.advance(b, max_len);
    const Reading reading = read_at(run.scan(), b);
    return {process.seed, process.nu, reading.tau, reading.truncated, b};
}

std::int64_t default_mrl_max_len(double b) {
    constexpr double kCap = 1e8;
    const double len = std::ceil(50.0 * std::exp(b));
    if (!(len < kCap)) return static_cast<std::int64_t>(kCap);
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(len));
}

RunLengthEstimate estimate_mrl(const ChangePointProcess& process, const DetectorFactory& factory,
                               double b, std::size_t trials, std::int64_t max_len,
                               const HarnessOptions& options) {
    require_trials(trials);
    require_max_len(max_len);
    require_threshold(b);
    require_no_change(process);
    const auto results = scan_trials(process, factory, b, max_len, trials, options.threads);
    return run_length_at(results, b, options.trial_log);
}

DelayEstimate estimate_delay(const ChangePointProcess& process, const DetectorFactory& factory,
                             double b, std::size_t trials, std::int64_t max_len,
                             const HarnessOptions& options) {
    require_trials(trials);
    require_max_len(max_len);
    require_threshold(b);
    require_change(process);
    const auto results = scan_trials(process, factory, b, max_len, trials, options.threads);
    return delay_at(results, process.nu, b, options.trial_log);
}

std::vector<OCPoint> oc_curve(const ChangePointProcess& no_change, const ChangePointProcess& change,
                              const DetectorFactory& factory, const std::vector<double>& thresholds,
                              std::size_t trials, std::int64_t mrl_max_len,
                              std::int64_t delay_max_len, const HarnessOptions& options) {
    if (thresholds.empty()) throw ConfigError("threshold list is empty");
    for (double b : thresholds) require_threshold(b);
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("threshold list must be ascending");
    }
    require_trials(trials);
    require_max_len(mrl_max_len);
    require_max_len(delay_max_len);
    require_no_change(no_change);
    require_change(change);

    const double cap = thresholds.back();
    const auto quiet = scan_trials(no_change, factory, cap, mrl_max_len, trials, options.threads);
    const auto shifted = scan_trials(change, factory, cap, delay_max_len, trials, options.threads);

    std::vector<OCPoint> points;
    points.reserve(thresholds.size());
    for (double b : thresholds) {
        OCPoint point;
        point.threshold = b;
        point.run_length = run_length_at(quiet, b, options.trial_log);
        point.delay = delay_at(shifted, change.nu, b, options.trial_log);
        points.push_back(point);
    }
    return points;
}

MatchedThreshold match_threshold(const ChangePointProcess& no_change, const DetectorFactory& factory,
                                 double target_mrl, std::size_t trials, std::int64_t max_len,
                                 double b_start, double b_step, const HarnessOptions& options) {
    require_trials(trials);
    require_max_len(max_len);
    require_no_change(no_change);
    no_change.validate();
    if (!(target_mrl >= 1.0)) throw ConfigError("target mean run length must be >= 1");
    if (!(b_step > 0.0) || !std::isfinite(b_start)) {
        throw ConfigError("threshold search needs a finite start and a positive step");
    }

    std::vector<std::unique_ptr<PathRun>> runs(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        runs[t] = std::make_unique<PathRun>(no_change, trial_seed(no_change, t), factory());
    }
    auto mean_run_length = [&](double b) {
        double total = 0.0;
        for (const auto& run : runs) total += static_cast<double>(read_at(run->scan(), b).tau);
        return total / static_cast<double>(trials);
    };

    double b_hi = b_start;
    double previous = -kInf;
    for (;;) {
        parallel_for(trials, options.threads, [&](std::size_t t) { runs[t]->advance(b_hi, max_len); });
        const double mrl = mean_run_length(b_hi);
        if (mrl >= target_mrl) break;
        if (!(mrl > previous) && b_hi > b_start + 100.0 * b_step) {
            std::ostringstream msg;
            msg << "mean run length " << target_mrl << " not reachable within max_len " << max_len;
            throw NumericError(msg.str());
        }
        previous = mrl;
        b_hi += b_step;
    }

    std::vector<double> levels;
    for (const auto& run : runs) {
        for (double level : run->scan().levels()) {
            if (level <= b_hi) levels.push_back(level);
        }
    }
    levels.push_back(b_hi);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    // Mean run length is nondecreasing in b and only changes at recorded levels.
    std::size_t lo = 0;
    std::size_t hi = levels.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (mean_run_length(levels[mid]) >= target_mrl) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }

    std::vector<ScanResult> results(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        results[t] = {runs[t]->seed(), runs[t]->scan(), runs[t]->detector().diagnostic_violations()};
    }
    MatchedThreshold matched;
    matched.threshold = levels[lo];
    matched.run_length = run_length_at(results, matched.threshold, options.trial_log);
    return matched;
}

ConditionReport check_q(const DensityModel& p0, const std::vector<std::size_t>& m_values,
                        const EstimatorConfig& estimator, std::size_t trials, std::uint64_t seed,
                        std::size_t threads) {
    if (m_values.empty()) throw ConfigError("m list is empty");
    for (std::size_t m : m_values) {
        if (m < 2) throw ConfigError("every m must be >= 2");
    }
    require_trials(trials);
    validate(estimator);
    const std::size_t m_max = *std::max_element(m_values.begin(), m_values.end());
    const std::size_t d = p0.dim();
    const auto* kde = std::get_if<KdeEstimator>(&estimator);
    const auto* fixed = std::get_if<FixedDensityEstimator>(&estimator);
    if (fixed != nullptr && fixed->density.dim() != d) {
        throw ConfigError("estimator density dimension differs from p0");
    }

    const ChangePointProcess process{p0, p0, kNoChange, seed};
    const std::size_t columns = m_values.size();
    std::vector<double> maxima(trials * columns);
    parallel_for(trials, threads, [&](std::size_t t) {
        PathSampler sampler(process, derive_seed(seed, t));
        std::vector<double> values;
        std::vector<double> log_p0;
        values.reserve(m_max * d);
        log_p0.reserve(m_max);
        std::vector<double> running(m_max + 1, -kInf);
        double fixed_sum = 0.0;
        for (std::size_t n = 1; n <= m_max; ++n) {
            const Sample x = sampler.next();
            values.insert(values.end(), x.begin(), x.end());
            log_p0.push_back(p0.log_density(x));
            if (fixed != nullptr) fixed_sum += fixed->density.log_density(x) - log_p0.back();
            if (n < 2) continue;
            double log_product;
            if (kde != nullptr) {
                const auto h = bandwidth_of(kde->bandwidth, n, d);
                log_product = segment_loo_log_ratio(values, d, log_p0, h, kde->clip);
            } else {
                log_product = fixed_sum;
            }
            if (!std::isfinite(log_product)) {
                std::ostringstream msg;
                msg << "non-finite log product in Q(m) trial " << t << " at n=" << n;
                throw NumericError(msg.str());
            }
            running[n] = std::max(running[n - 1], log_product);
        }
        for (std::size_t c = 0; c < columns; ++c) maxima[t * columns + c] = running[m_values[c]];
    });

    ConditionReport report;
    report.trials = trials;
    for (std::size_t c = 0; c < columns; ++c) {
        double shift = -kInf;
        for (std::size_t t = 0; t < trials; ++t) shift = std::max(shift, maxima[t * columns + c]);
        MeanAccumulator acc;
        for (std::size_t t = 0; t < trials; ++t) acc.add(std::exp(maxima[t * columns + c] - shift));
        ConditionRow row;
        row.m = m_values[c];
        const double scale = std::exp(shift);
        row.q_estimate = acc.mean() * scale;
        row.q_std_error = acc.std_error() * scale;
        row.log_q = shift + std::log(acc.mean());
        row.margin = row.log_q - 3.0 * std::log(static_cast<double>(row.m));
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace qcd
