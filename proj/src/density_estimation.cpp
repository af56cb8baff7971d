#include "qcd/density_estimation.hpp"

#include <numbers>
#include <sstream>

#include "qcd/errors.hpp"
#include "qcd/parallel.hpp"
#include "qcd/rng.hpp"

namespace qcd {

void KernelSpec::validate() const {
    if (order < 0) throw ConfigError("kernel order must be >= 0");
    if (order > 1) throw ConfigError("only order-1 Gaussian kernels are supported");
}

std::vector<double> bandwidth_of(const BandwidthRule& rule, std::size_t w, std::size_t dim) {
    if (w < 1) throw ConfigError("bandwidth rule needs a sample count >= 1");
    if (rule.scale.size() != 1 && rule.scale.size() != dim) {
        throw ConfigError("bandwidth scale must have one entry or one per dimension");
    }
    std::vector<double> h(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double c = rule.scale.size() == 1 ? rule.scale[0] : rule.scale[i];
        h[i] = rule.mode == BandwidthRule::Mode::fixed
                   ? c
                   : c * std::pow(static_cast<double>(w), -rule.exponent);
        if (!(h[i] > 0.0) || !std::isfinite(h[i])) {
            throw ConfigError("bandwidth rule produced a nonpositive bandwidth");
        }
    }
    return h;
}

void ClipConfig::validate() const {
    if (!(floor >= 0.0)) throw ConfigError("clip floor must be >= 0");
    if (!(floor < ceiling)) throw ConfigError("clip floor must be below the ceiling");
}

WindowBuffer::WindowBuffer(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), data_(capacity * dim) {
    if (capacity == 0) throw ConfigError("window capacity must be >= 1");
    if (dim == 0) throw ConfigError("window dimension must be >= 1");
}

void WindowBuffer::push(Sample x) {
    if (x.size() != dim_) throw InputError("observation dimension does not match the window");
    std::size_t slot;
    if (size_ < capacity_) {
        slot = (head_ + size_) % capacity_;
        ++size_;
    } else {
        slot = head_;
        head_ = (head_ + 1) % capacity_;
    }
    std::copy(x.begin(), x.end(), data_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
}

double gaussian_kernel_normalizer(std::span<const double> h) {
    double norm = std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(h.size()));
    for (double v : h) norm *= v;
    return norm;
}

namespace {

void check_eval_args(const WindowBuffer& window, const KernelSpec& kernel,
                     std::span<const double> h, Sample x) {
    kernel.validate();
    if (h.size() != window.dim() || x.size() != window.dim()) {
        throw InputError("bandwidth / evaluation point dimension does not match the window");
    }
    for (double v : h) {
        if (!(v > 0.0)) throw ConfigError("bandwidth must be strictly positive");
    }
}

}  // namespace

double kde_eval(const WindowBuffer& window, const KernelSpec& kernel, std::span<const double> h,
                Sample x) {
    if (window.empty()) throw StateError("kernel density estimate over an empty window");
    check_eval_args(window, kernel, h, x);
    const double sum = kernel_sum_newest(window, x, h, window.size());
    return kde_from_kernel_sum(sum, window.size(), gaussian_kernel_normalizer(h));
}

double kde_eval(const WindowBuffer& window, const KernelSpec& kernel, double h, double x) {
    return kde_eval(window, kernel, std::span<const double>(&h, 1), Sample(&x, 1));
}

double kde_eval_loo(const WindowBuffer& window, std::size_t leave_out, const KernelSpec& kernel,
                    std::span<const double> h, Sample x) {
    if (window.size() < 2) {
        throw StateError("leave-one-out estimate needs at least two observations");
    }
    if (leave_out >= window.size()) throw InputError("leave-out index out of range");
    check_eval_args(window, kernel, h, x);
    const std::size_t skip = window.size() - 1 - leave_out;  // as a newest-first offset
    double sum = 0.0;
    for (std::size_t t = 0; t < window.size(); ++t) {
        if (t == skip) continue;
        sum += gaussian_kernel_term(x, window.newest(t), h);
    }
    return kde_from_kernel_sum(sum, window.size() - 1, gaussian_kernel_normalizer(h));
}

double kde_eval_loo(const WindowBuffer& window, std::size_t leave_out, const KernelSpec& kernel,
                    double h, double x) {
    return kde_eval_loo(window, leave_out, kernel, std::span<const double>(&h, 1), Sample(&x, 1));
}

void validate(const EstimatorConfig& config) {
    if (const auto* kde = std::get_if<KdeEstimator>(&config)) {
        kde->kernel.validate();
        kde->clip.validate();
        if (kde->bandwidth.scale.empty()) throw ConfigError("bandwidth scale is empty");
        bandwidth_of(kde->bandwidth, 1, kde->bandwidth.scale.size());
    }
}

namespace {

/// Estimated density at x from a window, or the fixed density (unclipped).
double estimator_density(const EstimatorConfig& estimator, const WindowBuffer& window,
                         std::span<const double> h, Sample x) {
    if (const auto* kde = std::get_if<KdeEstimator>(&estimator)) {
        return kde_eval(window, kde->kernel, h, x);
    }
    return std::exp(std::get<FixedDensityEstimator>(estimator).density.log_density(x));
}

std::vector<double> estimator_bandwidth(const EstimatorConfig& estimator, std::size_t w,
                                        std::size_t dim) {
    if (const auto* kde = std::get_if<KdeEstimator>(&estimator)) {
        return bandwidth_of(kde->bandwidth, w, dim);
    }
    return std::vector<double>(dim, 1.0);
}

void fill_window(WindowBuffer& window, const DensityModel& truth, Engine& engine,
                 std::normal_distribution<double>& normal) {
    std::vector<double> x(truth.dim());
    window.clear();
    for (std::size_t j = 0; j < window.capacity(); ++j) {
        truth.sample(engine, normal, x);
        window.push(x);
    }
}

}  // namespace

MonteCarloEstimate estimate_mise(const DensityModel& truth, std::size_t w,
                                 const EstimatorConfig& estimator, std::size_t trials,
                                 std::uint64_t seed, std::size_t threads) {
    if (trials < 2) throw ConfigError("MISE estimation needs at least two trials");
    if (w < 1) throw ConfigError("window size must be >= 1");
    if (truth.dim() != 1) throw ConfigError("MISE estimation is implemented for d = 1 only");
    validate(estimator);

    constexpr std::size_t kGrid = 2048;
    const auto [lo, hi] = truth.span_1d(6.0);
    const double step = (hi - lo) / static_cast<double>(kGrid - 1);
    std::vector<double> grid(kGrid);
    std::vector<double> truth_values(kGrid);
    for (std::size_t g = 0; g < kGrid; ++g) {
        grid[g] = lo + step * static_cast<double>(g);
        truth_values[g] = std::exp(truth.log_density(grid[g]));
    }
    const auto h = estimator_bandwidth(estimator, w, 1);

    std::vector<double> ise(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        Engine engine = make_engine(derive_seed(seed, t));
        std::normal_distribution<double> normal;
        WindowBuffer window(w, 1);
        fill_window(window, truth, engine, normal);
        double acc = 0.0;
        for (std::size_t g = 0; g < kGrid; ++g) {
            const double diff =
                estimator_density(estimator, window, h, Sample(&grid[g], 1)) - truth_values[g];
            const double sq = diff * diff;
            acc += (g == 0 || g + 1 == kGrid) ? 0.5 * sq : sq;
        }
        const double value = acc * step;
        if (!std::isfinite(value)) throw NumericError("MISE quadrature produced a non-finite value");
        ise[t] = value;
    });
    MeanAccumulator stats;
    for (double v : ise) stats.add(v);
    return stats.estimate();
}

KlLossEstimate estimate_kl_loss(const DensityModel& truth, std::size_t w,
                                const EstimatorConfig& estimator, std::size_t trials,
                                std::uint64_t seed, std::size_t threads) {
    if (trials < 2) throw ConfigError("KL-loss estimation needs at least two trials");
    if (w < 1) throw ConfigError("window size must be >= 1");
    validate(estimator);
    const auto h = estimator_bandwidth(estimator, w, truth.dim());
    const ClipConfig* clip = nullptr;
    if (const auto* kde = std::get_if<KdeEstimator>(&estimator)) clip = &kde->clip;

    std::vector<double> losses(trials);
    parallel_for(trials, threads, [&](std::size_t t) {
        Engine engine = make_engine(derive_seed(seed, t));
        std::normal_distribution<double> normal;
        WindowBuffer window(w, truth.dim());
        fill_window(window, truth, engine, normal);
        std::vector<double> x(truth.dim());
        truth.sample(engine, normal, x);
        double log_hat;
        if (clip != nullptr) {
            log_hat = std::log(clip_density(estimator_density(estimator, window, h, x), *clip));
        } else {
            log_hat = std::get<FixedDensityEstimator>(estimator).density.log_density(x);
        }
        const double loss = truth.log_density(x) - log_hat;
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "non-finite log ratio in KL-loss trial " << t << " at x[0]=" << x[0]
                << " (estimated log density " << log_hat << ")";
            throw NumericError(msg.str());
        }
        losses[t] = loss;
    });
    MeanAccumulator first;
    MeanAccumulator second;
    for (double v : losses) {
        first.add(v);
        second.add(v * v);
    }
    return {first.estimate(), second.estimate()};
}

EstimatorRates kde_rates(double gamma, std::size_t dim) {
    if (!(gamma > 0.0)) throw ConfigError("smoothness gamma must be positive");
    if (dim < 1) throw ConfigError("dimension must be >= 1");
    EstimatorRates rates;
    rates.gamma = gamma;
    rates.dim = dim;
    rates.beta1 = 2.0 * gamma / (2.0 * gamma + static_cast<double>(dim));
    rates.beta2 = rates.beta1;
    return rates;
}

}  // namespace qcd
