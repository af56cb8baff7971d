#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "qcd/distributions.hpp"

namespace qcd {

/// Kernel shape. Only the Gaussian (order 1: unit mass, zero first moment) ships;
/// `order` exists so configs can state it, and higher orders are rejected.
struct KernelSpec {
    enum class Kind { gaussian };
    Kind kind = Kind::gaussian;
    int order = 1;

    void validate() const;
};

/// Smoothing parameter rule. Fixed mode returns `scale` as is; power mode
/// returns scale * w^(-exponent). `scale` holds one entry (shared by every
/// coordinate) or one per dimension.
struct BandwidthRule {
    enum class Mode { fixed, power };
    Mode mode = Mode::fixed;
    std::vector<double> scale{1.0};
    double exponent = 0.0;

    static BandwidthRule fixed(double h) { return {Mode::fixed, {h}, 0.0}; }
    static BandwidthRule power(double c, double exponent) { return {Mode::power, {c}, exponent}; }

    /// True when the bandwidth is the same for every sample size.
    bool size_independent() const noexcept { return mode == Mode::fixed || exponent == 0.0; }
};

/// Per-dimension bandwidth for an estimate built from `w` samples.
std::vector<double> bandwidth_of(const BandwidthRule& rule, std::size_t w, std::size_t dim = 1);

/// Band applied to estimated density values before taking logs. A zero floor
/// disables the lower clip.
struct ClipConfig {
    double floor = 1e-12;
    double ceiling = std::numeric_limits<double>::infinity();

    void validate() const;
};

inline double clip_density(double v, const ClipConfig& clip) {
    return std::min(std::max(v, clip.floor), clip.ceiling);
}

/// Bounded FIFO of the most recent observations, stored in arrival order.
class WindowBuffer {
public:
    WindowBuffer(std::size_t capacity, std::size_t dim = 1);

    /// Appends x, evicting the oldest observation when full.
    void push(Sample x);
    void push(double x) { push(Sample(&x, 1)); }
    void clear() noexcept { head_ = 0; size_ = 0; }

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return size_ == 0; }
    bool full() const noexcept { return size_ == capacity_; }

    /// j-th oldest (j = 0 is the oldest).
    Sample operator[](std::size_t j) const {
        return Sample(data_.data() + ((head_ + j) % capacity_) * dim_, dim_);
    }
    /// t-th newest (t = 0 is the most recent).
    Sample newest(std::size_t t) const { return (*this)[size_ - 1 - t]; }

private:
    std::size_t capacity_;
    std::size_t dim_;
    std::vector<double> data_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
};

/// exp(-|(x - y) / h|^2 / 2), the unnormalized product Gaussian kernel.
inline double gaussian_kernel_term(Sample x, Sample y, std::span<const double> h) {
    double q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = (x[i] - y[i]) / h[i];
        q += u * u;
    }
    return std::exp(-0.5 * q);
}

/// Sum of kernel terms between x and the `count` newest window entries, added
/// newest first. Every KDE in the library goes through this loop, so estimates
/// over the same observations agree bit for bit.
inline double kernel_sum_newest(const WindowBuffer& window, Sample x, std::span<const double> h,
                                std::size_t count) {
    double sum = 0.0;
    for (std::size_t t = 0; t < count; ++t) sum += gaussian_kernel_term(x, window.newest(t), h);
    return sum;
}

/// (2 pi)^(d/2) * prod h_i, the normalizer of the product Gaussian kernel.
double gaussian_kernel_normalizer(std::span<const double> h);

/// Density value from a sum of unnormalized kernel terms over `count` samples.
inline double kde_from_kernel_sum(double kernel_sum, std::size_t count, double normalizer) {
    return kernel_sum / (static_cast<double>(count) * normalizer);
}

/// Kernel density estimate at x over every observation in the window.
double kde_eval(const WindowBuffer& window, const KernelSpec& kernel, std::span<const double> h,
                Sample x);
double kde_eval(const WindowBuffer& window, const KernelSpec& kernel, double h, double x);

/// Kernel density estimate at x over the window with the observation at
/// arrival index `leave_out` removed. Sums the same terms in the same order
/// as kde_eval on the reduced window, so the two agree exactly.
double kde_eval_loo(const WindowBuffer& window, std::size_t leave_out, const KernelSpec& kernel,
                    std::span<const double> h, Sample x);
double kde_eval_loo(const WindowBuffer& window, std::size_t leave_out, const KernelSpec& kernel,
                    double h, double x);

struct KdeEstimator {
    KernelSpec kernel;
    BandwidthRule bandwidth;
    ClipConfig clip;
};

/// Estimator that ignores the data and returns a known density. Used as the
/// degenerate estimator in tests and as the oracle (true p1) estimator.
struct FixedDensityEstimator {
    DensityModel density;
};

using EstimatorConfig = std::variant<KdeEstimator, FixedDensityEstimator>;

void validate(const EstimatorConfig& config);

struct MonteCarloEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t trials = 0;
};

/// Running mean / variance accumulator (Welford).
class MeanAccumulator {
public:
    void add(double v) {
        ++n_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (v - mean_);
    }
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_error() const noexcept {
        return n_ > 1 ? std::sqrt(variance()) / std::sqrt(static_cast<double>(n_)) : 0.0;
    }
    MonteCarloEstimate estimate() const { return {mean(), std_error(), n_}; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Monte Carlo MISE of the estimator built from w samples of `truth` (d = 1).
/// The inner integral is a 2048-point trapezoid over +/- 6 SD of the model.
MonteCarloEstimate estimate_mise(const DensityModel& truth, std::size_t w,
                                 const EstimatorConfig& estimator, std::size_t trials,
                                 std::uint64_t seed, std::size_t threads = 1);

struct KlLossEstimate {
    MonteCarloEstimate first_moment;   // E[log(p(X) / p_hat(X))]
    MonteCarloEstimate second_moment;  // E[log(p(X) / p_hat(X))^2]
};

/// Monte Carlo KL-loss of the estimator built from w samples of `truth`,
/// with a fresh window and a fresh evaluation point per trial.
KlLossEstimate estimate_kl_loss(const DensityModel& truth, std::size_t w,
                                const EstimatorConfig& estimator, std::size_t trials,
                                std::uint64_t seed, std::size_t threads = 1);

/// Loss-decay exponents and constants of a density estimator.
struct EstimatorRates {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double c1 = std::numeric_limits<double>::quiet_NaN();
    double c2 = std::numeric_limits<double>::quiet_NaN();
    double gamma = 0.0;
    std::size_t dim = 1;
};

/// Rates of a well-tuned KDE on a gamma-Holder density in d dimensions:
/// beta1 = beta2 = 2 gamma / (2 gamma + d). Constants are left unknown.
EstimatorRates kde_rates(double gamma, std::size_t dim);

}  // namespace qcd
