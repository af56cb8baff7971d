#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qcd/density_estimation.hpp"
#include "qcd/distributions.hpp"

namespace qcd {

enum class Algorithm { cusum, glr, nglr, nwla, parallel_nwla, sr };

std::string_view to_string(Algorithm algorithm);
Algorithm algorithm_from_string(std::string_view name);

/// Streaming change-detection statistic. A detector never sees the
/// threshold: step() returns the statistic at the new time n and the caller
/// decides whether it crossed, so one trajectory serves many thresholds.
class Detector {
public:
    Detector() = default;
    Detector(const Detector&) = delete;
    Detector& operator=(const Detector&) = delete;
    virtual ~Detector() = default;

    /// Consumes observation X_n and returns the statistic at time n.
    double step(Sample x);
    double step(double x) { return step(Sample(&x, 1)); }

    double statistic() const noexcept { return statistic_; }
    /// Number of observations consumed (the current time n).
    std::int64_t count() const noexcept { return count_; }

    virtual Algorithm algorithm() const noexcept = 0;
    virtual std::size_t dim() const noexcept = 0;
    /// Smallest n at which the stopping rule may fire.
    virtual std::int64_t first_stop_index() const noexcept { return 1; }
    /// Pathwise dominance violations seen so far (diagnostic detectors only).
    virtual std::int64_t diagnostic_violations() const noexcept { return 0; }

protected:
    virtual double update(Sample x) = 0;

private:
    double statistic_ = 0.0;
    std::int64_t count_ = 0;
};

/// W <- max(W, 0) + z.
class ReflectedSum {
public:
    explicit ReflectedSum(double initial = 0.0) : value_(initial) {}
    double update(double z) noexcept {
        value_ = (value_ > 0.0 ? value_ : 0.0) + z;
        return value_;
    }
    double value() const noexcept { return value_; }

private:
    double value_;
};

/// Page's CuSum with known pre- and post-change densities.
class CusumDetector final : public Detector {
public:
    CusumDetector(DensityModel pre, DensityModel post);

    Algorithm algorithm() const noexcept override { return Algorithm::cusum; }
    std::size_t dim() const noexcept override { return pre_.dim(); }

protected:
    double update(Sample x) override;

private:
    DensityModel pre_;
    DensityModel post_;
    ReflectedSum sum_;
};

/// Window-limited GLR CuSum for a Gaussian mean shift with known variance:
/// pre-change N(mu0, s^2), post-change N(theta, s^2) with theta unknown.
/// The supremum over theta on a segment of length L with centered sum S is
/// S^2 / (2 s^2 L), maximized over segment starts k in ((n - m)^+, n].
class GlrDetector final : public Detector {
public:
    GlrDetector(const DensityModel& pre, std::size_t window);

    Algorithm algorithm() const noexcept override { return Algorithm::glr; }
    std::size_t dim() const noexcept override { return 1; }
    /// Start index of the maximizing segment (ties go to the smallest k).
    std::int64_t best_start() const noexcept { return best_start_; }

protected:
    double update(Sample x) override;

private:
    double mean_;
    double variance_;
    WindowBuffer centered_;
    std::int64_t best_start_ = 0;
};

/// Sum over i in [k, n] of log(clip(p_hat_{-i}(X_i)) / p0(X_i)), where
/// p_hat_{-i} is the KDE over the segment without X_i. `values` holds the
/// segment row-major (oldest first), `log_p0` the matching log p0(X_i).
/// Direct O(L^2) evaluation with the given bandwidth.
double segment_loo_log_ratio(std::span<const double> values, std::size_t dim,
                             std::span<const double> log_p0, std::span<const double> h,
                             const ClipConfig& clip);

/// Non-parametric window-limited GLR CuSum. The statistic at n is the max over
/// k in ((n - m)^+, n - 1] of the segment sum of leave-one-out log ratios.
/// With a size-independent bandwidth the per-pair kernel sums are kept in a
/// triangular table, making each step O(m^2); a bandwidth that depends on the
/// segment length (evaluated at L = n - k + 1) forces an O(m^3) rebuild.
class NglrDetector final : public Detector {
public:
    NglrDetector(DensityModel pre, std::size_t window, EstimatorConfig estimator);

    Algorithm algorithm() const noexcept override { return Algorithm::nglr; }
    std::size_t dim() const noexcept override { return pre_.dim(); }
    std::int64_t first_stop_index() const noexcept override { return 2; }
    std::int64_t best_start() const noexcept { return best_start_; }

protected:
    double update(Sample x) override;

private:
    double update_fixed_density(Sample x);
    double update_table();
    double update_rebuild();

    std::size_t slot(std::int64_t index) const {
        return static_cast<std::size_t>(index % static_cast<std::int64_t>(window_));
    }

    DensityModel pre_;
    std::size_t window_;
    EstimatorConfig estimator_;
    const KdeEstimator* kde_ = nullptr;
    std::vector<double> h_;          // size-independent bandwidth
    double normalizer_ = 1.0;
    WindowBuffer samples_;
    std::vector<double> log_p0_;     // ring, by slot
    std::vector<double> log_fixed_;  // ring, fixed-density estimator only
    std::vector<double> table_;      // window x window, [slot(k)][slot(i)]
    std::vector<double> scratch_;
    std::vector<double> scratch_log_p0_;
    std::int64_t best_start_ = 0;
};

/// Produces the adaptively estimated log ratio log(p_hat(X_n) / p0(X_n)),
/// with p_hat built from the w observations before X_n. Returns nothing
/// while fewer than w observations have been seen.
class WindowedLogRatio {
public:
    WindowedLogRatio(const DensityModel& pre, std::size_t window, const EstimatorConfig& estimator);

    std::optional<double> next(Sample x);
    std::size_t window() const noexcept { return buffer_.capacity(); }

private:
    const DensityModel* pre_;
    const EstimatorConfig* estimator_;
    WindowBuffer buffer_;
    std::vector<double> h_;
    double normalizer_ = 1.0;
};

/// Non-parametric window-limited adaptive CuSum. The statistic is pinned at 0
/// for n <= w. With diagnostics on it also tracks the unreflected sum U_n and
/// the Shiryaev-Roberts-type statistic R_n on the same increments, and counts
/// steps violating U_n <= W(n) or R_n >= exp(W(n)) (strict for n > w + 1).
class NwlaDetector final : public Detector {
public:
    NwlaDetector(DensityModel pre, std::size_t window, EstimatorConfig estimator,
                 bool diagnostics = false);

    Algorithm algorithm() const noexcept override { return Algorithm::nwla; }
    std::size_t dim() const noexcept override { return pre_.dim(); }
    std::int64_t first_stop_index() const noexcept override {
        return static_cast<std::int64_t>(window_) + 1;
    }
    std::int64_t diagnostic_violations() const noexcept override { return violations_; }

    std::optional<double> last_increment() const noexcept { return last_increment_; }
    double cumulative_sum() const noexcept { return cumulative_; }
    double log_sr() const noexcept { return log_sr_; }

protected:
    double update(Sample x) override;

private:
    DensityModel pre_;
    std::size_t window_;
    EstimatorConfig estimator_;
    WindowedLogRatio ratio_;
    ReflectedSum sum_;
    bool diagnostics_;
    std::optional<double> last_increment_;
    double cumulative_ = 0.0;
    double log_sr_;
    std::int64_t violations_ = 0;
};

/// Parallel NWLA CuSum: one NWLA statistic per window w in 1..W_max on a
/// shared history, reporting the maximum. Kernel terms are computed once per
/// stored observation when the bandwidth does not depend on w.
class ParallelNwlaDetector final : public Detector {
public:
    ParallelNwlaDetector(DensityModel pre, std::size_t max_window, EstimatorConfig estimator);

    Algorithm algorithm() const noexcept override { return Algorithm::parallel_nwla; }
    std::size_t dim() const noexcept override { return pre_.dim(); }
    std::int64_t first_stop_index() const noexcept override { return 2; }

    /// Statistic of window w (1-based).
    double statistic_for(std::size_t w) const { return sums_.at(w - 1).value(); }
    std::size_t best_window() const noexcept { return best_window_; }

protected:
    double update(Sample x) override;

private:
    DensityModel pre_;
    std::size_t max_window_;
    EstimatorConfig estimator_;
    const KdeEstimator* kde_ = nullptr;
    bool shared_bandwidth_ = false;
    std::vector<std::vector<double>> h_;  // per window
    std::vector<double> normalizer_;
    WindowBuffer buffer_;
    std::vector<ReflectedSum> sums_;
    std::size_t best_window_ = 1;
};

/// R_n = (1 + R_{n-1}) exp(Z_n) on the NWLA increments, R = 0 for n <= w.
/// Kept in log space; statistic() is log R_n (the lowest double while R = 0),
/// so crossing b means R_n >= e^b.
class ShiryaevRobertsDetector final : public Detector {
public:
    ShiryaevRobertsDetector(DensityModel pre, std::size_t window, EstimatorConfig estimator);

    Algorithm algorithm() const noexcept override { return Algorithm::sr; }
    std::size_t dim() const noexcept override { return pre_.dim(); }
    std::int64_t first_stop_index() const noexcept override {
        return static_cast<std::int64_t>(window_) + 1;
    }

    double log_value() const noexcept { return log_r_; }
    /// R_n itself; +inf once it leaves the double range.
    double value() const noexcept;

protected:
    double update(Sample x) override;

private:
    DensityModel pre_;
    std::size_t window_;
    EstimatorConfig estimator_;
    WindowedLogRatio ratio_;
    double log_r_;
};

/// log(1 + e^l) without overflow.
double log1p_exp(double l) noexcept;

struct DetectorConfig {
    Algorithm algorithm = Algorithm::cusum;
    DensityModel pre;
    std::optional<DensityModel> post;  // cusum only
    std::size_t window = 0;            // m (glr, nglr), w (nwla, sr), W_max (parallel)
    EstimatorConfig estimator{};
    bool diagnostics = false;          // nwla only
};

std::unique_ptr<Detector> make_detector(const DetectorConfig& config);

struct StepResult {
    double statistic = 0.0;
    bool stopped = false;
};

/// A detector paired with a threshold: the stopping time is the first
/// n >= first_stop_index() with statistic >= b.
class StoppingRule {
public:
    StoppingRule(std::unique_ptr<Detector> detector, double threshold);

    StepResult step(Sample x);
    StepResult step(double x) { return step(Sample(&x, 1)); }

    bool stopped() const noexcept { return stopping_time_.has_value(); }
    std::optional<std::int64_t> stopping_time() const noexcept { return stopping_time_; }
    double threshold() const noexcept { return threshold_; }
    const Detector& detector() const noexcept { return *detector_; }

private:
    std::unique_ptr<Detector> detector_;
    double threshold_;
    std::optional<std::int64_t> stopping_time_;
};

}  // namespace qcd
