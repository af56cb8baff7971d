#include "qcd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "qcd/errors.hpp"

namespace qcd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const KdeEstimator* kde_of(const EstimatorConfig& estimator) {
    return std::get_if<KdeEstimator>(&estimator);
}

double fixed_log_density(const EstimatorConfig& estimator, Sample x) {
    return std::get<FixedDensityEstimator>(estimator).density.log_density(x);
}

void require_same_dim(const DensityModel& pre, const EstimatorConfig& estimator) {
    if (const auto* fixed = std::get_if<FixedDensityEstimator>(&estimator)) {
        if (fixed->density.dim() != pre.dim()) {
            throw ConfigError("estimator density dimension differs from the pre-change model");
        }
    }
}

}  // namespace

std::string_view to_string(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::cusum: return "cusum";
        case Algorithm::glr: return "glr";
        case Algorithm::nglr: return "nglr";
        case Algorithm::nwla: return "nwla";
        case Algorithm::parallel_nwla: return "parallel_nwla";
        case Algorithm::sr: return "sr";
    }
    return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
    for (Algorithm a : {Algorithm::cusum, Algorithm::glr, Algorithm::nglr, Algorithm::nwla,
                        Algorithm::parallel_nwla, Algorithm::sr}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

double log1p_exp(double l) noexcept {
    if (l == kNegInf) return 0.0;
    return l > 0.0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
}

double Detector::step(Sample x) {
    if (x.size() != dim()) throw InputError("observation dimension does not match the detector");
    for (double v : x) {
        if (!std::isfinite(v)) throw InputError("observation has a non-finite coordinate");
    }
    ++count_;
    statistic_ = update(x);
    return statistic_;
}

// ---------------------------------------------------------------------------
// CuSum

CusumDetector::CusumDetector(DensityModel pre, DensityModel post)
    : pre_(std::move(pre)), post_(std::move(post)) {
    if (pre_.dim() != post_.dim()) {
        throw ConfigError("CuSum pre- and post-change models have different dimensions");
    }
}

double CusumDetector::update(Sample x) {
    return sum_.update(log_likelihood_ratio(x, pre_, post_));
}

// ---------------------------------------------------------------------------
// Gaussian GLR

GlrDetector::GlrDetector(const DensityModel& pre, std::size_t window)
    : mean_(0.0), variance_(1.0), centered_(std::max<std::size_t>(window, 1), 1) {
    if (pre.dim() != 1 || pre.components().size() != 1) {
        throw ConfigError("GLR baseline needs a one-dimensional Gaussian pre-change model");
    }
    if (window < 1) throw ConfigError("GLR window must be >= 1");
    mean_ = pre.components().front().mean[0];
    variance_ = pre.components().front().variance[0];
}

double GlrDetector::update(Sample x) {
    centered_.push(x[0] - mean_);
    double sum = 0.0;
    double best = kNegInf;
    for (std::size_t t = 0; t < centered_.size(); ++t) {
        sum += centered_.newest(t)[0];
        const double value = sum * sum / (2.0 * variance_ * static_cast<double>(t + 1));
        if (value >= best) {
            best = value;
            best_start_ = count() - static_cast<std::int64_t>(t);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// NGLR

double segment_loo_log_ratio(std::span<const double> values, std::size_t dim,
                             std::span<const double> log_p0, std::span<const double> h,
                             const ClipConfig& clip) {
    const std::size_t length = values.size() / dim;
    if (length < 2) throw StateError("leave-one-out segment needs at least two observations");
    std::vector<double> sums(length, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
        const Sample xi(values.data() + i * dim, dim);
        for (std::size_t j = i + 1; j < length; ++j) {
            const double k = gaussian_kernel_term(xi, Sample(values.data() + j * dim, dim), h);
            sums[i] += k;
            sums[j] += k;
        }
    }
    const double normalizer = gaussian_kernel_normalizer(h);
    double total = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
        total += std::log(clip_density(kde_from_kernel_sum(sums[i], length - 1, normalizer), clip)) -
                 log_p0[i];
    }
    return total;
}

NglrDetector::NglrDetector(DensityModel pre, std::size_t window, EstimatorConfig estimator)
    : pre_(std::move(pre)), window_(window), estimator_(std::move(estimator)),
      samples_(std::max<std::size_t>(window, 1), pre_.dim()) {
    if (window_ < 2) throw ConfigError("NGLR window must be >= 2");
    validate(estimator_);
    require_same_dim(pre_, estimator_);
    kde_ = kde_of(estimator_);
    log_p0_.assign(window_, 0.0);
    if (kde_ == nullptr) {
        log_fixed_.assign(window_, 0.0);
    } else if (kde_->bandwidth.size_independent()) {
        h_ = bandwidth_of(kde_->bandwidth, 1, pre_.dim());
        normalizer_ = gaussian_kernel_normalizer(h_);
        table_.assign(window_ * window_, 0.0);
        scratch_.assign(window_, 0.0);
    } else {
        scratch_.reserve(window_ * pre_.dim());
        scratch_log_p0_.reserve(window_);
    }
}

double NglrDetector::update(Sample x) {
    const std::int64_t n = count();
    samples_.push(x);
    log_p0_[slot(n)] = pre_.log_density(x);
    if (kde_ == nullptr) {
        log_fixed_[slot(n)] = fixed_log_density(estimator_, x);
        return update_fixed_density(x);
    }
    if (n < 2) return 0.0;
    return kde_->bandwidth.size_independent() ? update_table() : update_rebuild();
}

double NglrDetector::update_fixed_density(Sample) {
    const std::int64_t n = count();
    if (n < 2) return 0.0;
    const std::int64_t lo = std::max<std::int64_t>(1, n - static_cast<std::int64_t>(window_) + 1);
    double acc = log_fixed_[slot(n)] - log_p0_[slot(n)];
    double best = kNegInf;
    for (std::int64_t k = n - 1; k >= lo; --k) {
        acc += log_fixed_[slot(k)] - log_p0_[slot(k)];
        if (acc >= best) {
            best = acc;
            best_start_ = k;
        }
    }
    return best;
}

double NglrDetector::update_table() {
    const std::int64_t n = count();
    const std::int64_t lo = std::max<std::int64_t>(1, n - static_cast<std::int64_t>(window_) + 1);
    const Sample xn = samples_.newest(0);
    // Kernel terms between X_n and each earlier X_j in the window, by slot.
    for (std::int64_t j = lo; j < n; ++j) {
        scratch_[slot(j)] = gaussian_kernel_term(xn, samples_.newest(static_cast<std::size_t>(n - j)), h_);
    }
    const std::size_t sn = slot(n);
    double suffix = 0.0;  // sum_{j=k}^{n-1} K(X_n, X_j)
    for (std::int64_t k = n - 1; k >= lo; --k) {
        suffix += scratch_[slot(k)];
        double* row = table_.data() + slot(k) * window_;
        if (k == n - 1) {
            row[slot(k)] = scratch_[slot(k)];
        } else {
            for (std::int64_t i = k; i < n; ++i) row[slot(i)] += scratch_[slot(i)];
        }
        row[sn] = suffix;
    }

    double best = kNegInf;
    for (std::int64_t k = lo; k < n; ++k) {
        const double* row = table_.data() + slot(k) * window_;
        const auto loo_count = static_cast<std::size_t>(n - k);
        double total = 0.0;
        for (std::int64_t i = k; i <= n; ++i) {
            const double density = kde_from_kernel_sum(row[slot(i)], loo_count, normalizer_);
            total += std::log(clip_density(density, kde_->clip)) - log_p0_[slot(i)];
        }
        if (total > best) {
            best = total;
            best_start_ = k;
        }
    }
    return best;
}

double NglrDetector::update_rebuild() {
    const std::int64_t n = count();
    const std::int64_t lo = std::max<std::int64_t>(1, n - static_cast<std::int64_t>(window_) + 1);
    const std::size_t d = pre_.dim();
    double best = kNegInf;
    for (std::int64_t k = lo; k < n; ++k) {
        const auto length = static_cast<std::size_t>(n - k + 1);
        scratch_.clear();
        scratch_log_p0_.clear();
        for (std::int64_t i = k; i <= n; ++i) {
            const Sample xi = samples_.newest(static_cast<std::size_t>(n - i));
            scratch_.insert(scratch_.end(), xi.begin(), xi.end());
            scratch_log_p0_.push_back(log_p0_[slot(i)]);
        }
        const auto h = bandwidth_of(kde_->bandwidth, length, d);
        const double total = segment_loo_log_ratio(scratch_, d, scratch_log_p0_, h, kde_->clip);
        if (total > best) {
            best = total;
            best_start_ = k;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// NWLA family

WindowedLogRatio::WindowedLogRatio(const DensityModel& pre, std::size_t window,
                                   const EstimatorConfig& estimator)
    : pre_(&pre), estimator_(&estimator), buffer_(std::max<std::size_t>(window, 1), pre.dim()) {
    if (window < 1) throw ConfigError("NWLA window must be >= 1");
    validate(estimator);
    require_same_dim(pre, estimator);
    if (const auto* kde = kde_of(estimator)) {
        h_ = bandwidth_of(kde->bandwidth, window, pre.dim());
        normalizer_ = gaussian_kernel_normalizer(h_);
    }
}

std::optional<double> WindowedLogRatio::next(Sample x) {
    if (!buffer_.full()) {
        buffer_.push(x);
        return std::nullopt;
    }
    const double log_p0 = pre_->log_density(x);
    double z;
    if (const auto* kde = kde_of(*estimator_)) {
        const double sum = kernel_sum_newest(buffer_, x, h_, buffer_.size());
        const double density = kde_from_kernel_sum(sum, buffer_.size(), normalizer_);
        z = std::log(clip_density(density, kde->clip)) - log_p0;
    } else {
        z = fixed_log_density(*estimator_, x) - log_p0;
    }
    buffer_.push(x);
    return z;
}

NwlaDetector::NwlaDetector(DensityModel pre, std::size_t window, EstimatorConfig estimator,
                           bool diagnostics)
    : pre_(std::move(pre)), window_(window), estimator_(std::move(estimator)),
      ratio_(pre_, window_, estimator_), diagnostics_(diagnostics), log_sr_(kNegInf) {}

double NwlaDetector::update(Sample x) {
    last_increment_ = ratio_.next(x);
    if (!last_increment_) return 0.0;
    const double z = *last_increment_;
    const double w_bar = sum_.update(z);
    if (diagnostics_) {
        cumulative_ += z;
        const double log_r = log1p_exp(log_sr_) + z;
        if (cumulative_ > w_bar) ++violations_;
        // At n = w + 1 both statistics equal the first increment exactly;
        // afterwards R_n exceeds exp(W(n)) strictly.
        const bool first_active = count() == static_cast<std::int64_t>(window_) + 1;
        if (first_active ? !(log_r >= w_bar) : !(log_r > w_bar)) ++violations_;
        log_sr_ = log_r;
    }
    return w_bar;
}

ParallelNwlaDetector::ParallelNwlaDetector(DensityModel pre, std::size_t max_window,
                                           EstimatorConfig estimator)
    : pre_(std::move(pre)), max_window_(max_window), estimator_(std::move(estimator)),
      buffer_(std::max<std::size_t>(max_window, 1), pre_.dim()),
      sums_(std::max<std::size_t>(max_window, 1)) {
    if (max_window_ < 1) throw ConfigError("parallel NWLA needs W_max >= 1");
    validate(estimator_);
    require_same_dim(pre_, estimator_);
    kde_ = kde_of(estimator_);
    if (kde_ != nullptr) {
        shared_bandwidth_ = kde_->bandwidth.size_independent();
        const std::size_t distinct = shared_bandwidth_ ? 1 : max_window_;
        for (std::size_t w = 1; w <= distinct; ++w) {
            h_.push_back(bandwidth_of(kde_->bandwidth, w, pre_.dim()));
            normalizer_.push_back(gaussian_kernel_normalizer(h_.back()));
        }
    }
}

double ParallelNwlaDetector::update(Sample x) {
    const std::size_t available = buffer_.size();
    if (available > 0) {
        const double log_p0 = pre_.log_density(x);
        if (kde_ == nullptr) {
            const double z = fixed_log_density(estimator_, x) - log_p0;
            for (std::size_t w = 1; w <= available; ++w) sums_[w - 1].update(z);
        } else if (shared_bandwidth_) {
            double sum = 0.0;
            for (std::size_t w = 1; w <= available; ++w) {
                sum += gaussian_kernel_term(x, buffer_.newest(w - 1), h_[0]);
                const double density = kde_from_kernel_sum(sum, w, normalizer_[0]);
                sums_[w - 1].update(std::log(clip_density(density, kde_->clip)) - log_p0);
            }
        } else {
            for (std::size_t w = 1; w <= available; ++w) {
                const double sum = kernel_sum_newest(buffer_, x, h_[w - 1], w);
                const double density = kde_from_kernel_sum(sum, w, normalizer_[w - 1]);
                sums_[w - 1].update(std::log(clip_density(density, kde_->clip)) - log_p0);
            }
        }
    }
    buffer_.push(x);
    double best = sums_[0].value();
    best_window_ = 1;
    for (std::size_t w = 2; w <= max_window_; ++w) {
        if (sums_[w - 1].value() > best) {
            best = sums_[w - 1].value();
            best_window_ = w;
        }
    }
    return best;
}

ShiryaevRobertsDetector::ShiryaevRobertsDetector(DensityModel pre, std::size_t window,
                                                 EstimatorConfig estimator)
    : pre_(std::move(pre)), window_(window), estimator_(std::move(estimator)),
      ratio_(pre_, window_, estimator_), log_r_(kNegInf) {}

double ShiryaevRobertsDetector::value() const noexcept {
    return std::exp(log_r_);
}

double ShiryaevRobertsDetector::update(Sample x) {
    const auto z = ratio_.next(x);
    if (z) log_r_ = log1p_exp(log_r_) + *z;
    return log_r_ == kNegInf ? std::numeric_limits<double>::lowest() : log_r_;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Detector> make_detector(const DetectorConfig& config) {
    switch (config.algorithm) {
        case Algorithm::cusum:
            if (!config.post) throw ConfigError("CuSum needs a post-change model");
            return std::make_unique<CusumDetector>(config.pre, *config.post);
        case Algorithm::glr:
            return std::make_unique<GlrDetector>(config.pre, config.window);
        case Algorithm::nglr:
            return std::make_unique<NglrDetector>(config.pre, config.window, config.estimator);
        case Algorithm::nwla:
            return std::make_unique<NwlaDetector>(config.pre, config.window, config.estimator,
                                                  config.diagnostics);
        case Algorithm::parallel_nwla:
            return std::make_unique<ParallelNwlaDetector>(config.pre, config.window,
                                                          config.estimator);
        case Algorithm::sr:
            return std::make_unique<ShiryaevRobertsDetector>(config.pre, config.window,
                                                             config.estimator);
    }
    throw ConfigError("unknown algorithm");
}

StoppingRule::StoppingRule(std::unique_ptr<Detector> detector, double threshold)
    : detector_(std::move(detector)), threshold_(threshold) {
    if (!detector_) throw ConfigError("stopping rule needs a detector");
    if (std::isnan(threshold_)) throw ConfigError("threshold is NaN");
}

StepResult StoppingRule::step(Sample x) {
    if (stopped()) throw StateError("step after the stopping time");
    const double statistic = detector_->step(x);
    if (detector_->count() >= detector_->first_stop_index() && statistic >= threshold_) {
        stopping_time_ = detector_->count();
    }
    return {statistic, stopped()};
}

}  // namespace qcd
