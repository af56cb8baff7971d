#include "qcd/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qcd/errors.hpp"

namespace qcd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

void require_finite(Sample x) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw InputError("observation has a non-finite coordinate");
        }
    }
}

double log_sum_exp(std::span<const double> v) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double t : v) hi = std::max(hi, t);
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double t : v) acc += std::exp(t - hi);
    return hi + std::log(acc);
}

bool single_gaussian(const DensityModel& m) { return m.components().size() == 1; }

}  // namespace

DensityModel::DensityModel(Kind kind, std::vector<GaussianComponent> components)
    : kind_(kind), dim_(0), components_(std::move(components)) {
    if (components_.empty()) {
        throw ConfigError("density model needs at least one component");
    }
    dim_ = components_.front().mean.size();
    if (dim_ == 0) {
        throw ConfigError("density model dimension must be >= 1");
    }
    double weight_sum = 0.0;
    for (const auto& c : components_) {
        if (c.mean.size() != dim_ || c.variance.size() != dim_) {
            throw ConfigError("all component means and variances must have the model dimension");
        }
        if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
            throw ConfigError("mixture weights must be positive");
        }
        for (std::size_t i = 0; i < dim_; ++i) {
            if (!std::isfinite(c.mean[i])) throw ConfigError("component mean is not finite");
            if (!(c.variance[i] > 0.0) || !std::isfinite(c.variance[i])) {
                throw ConfigError("variances must be strictly positive and finite");
            }
        }
        weight_sum += c.weight;
    }
    if (std::abs(weight_sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "mixture weights sum to " << weight_sum << ", expected 1";
        throw ConfigError(msg.str());
    }
    for (const auto& c : components_) {
        log_weights_.push_back(std::log(c.weight));
        double norm = 0.0;
        for (double v : c.variance) norm += kLog2Pi + std::log(v);
        log_norms_.push_back(-0.5 * norm);
    }
}

DensityModel DensityModel::gaussian(std::vector<double> mean, std::vector<double> variance) {
    return DensityModel(Kind::gaussian, {GaussianComponent{1.0, std::move(mean), std::move(variance)}});
}

DensityModel DensityModel::gaussian(double mean, double variance) {
    return gaussian(std::vector<double>{mean}, std::vector<double>{variance});
}

DensityModel DensityModel::mixture(std::vector<GaussianComponent> components) {
    return DensityModel(Kind::gaussian_mixture, std::move(components));
}

double DensityModel::log_density(Sample x) const {
    if (x.size() != dim_) {
        throw InputError("observation dimension does not match the density model");
    }
    require_finite(x);
    auto component_log = [&](std::size_t c) {
        const auto& comp = components_[c];
        double q = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            const double z = x[i] - comp.mean[i];
            q += z * z / comp.variance[i];
        }
        return log_weights_[c] + log_norms_[c] - 0.5 * q;
    };
    if (components_.size() == 1) {
        return component_log(0);
    }
    std::vector<double> terms(components_.size());
    for (std::size_t c = 0; c < components_.size(); ++c) terms[c] = component_log(c);
    return log_sum_exp(terms);
}

double DensityModel::log_density(double x) const {
    return log_density(Sample(&x, 1));
}

void DensityModel::sample(Engine& engine, std::normal_distribution<double>& normal,
                          std::span<double> out) const {
    std::size_t c = 0;
    if (components_.size() > 1) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double u = unif(engine);
        for (; c + 1 < components_.size(); ++c) {
            if (u < components_[c].weight) break;
            u -= components_[c].weight;
        }
    }
    const auto& comp = components_[c];
    for (std::size_t i = 0; i < dim_; ++i) {
        out[i] = comp.mean[i] + std::sqrt(comp.variance[i]) * normal(engine);
    }
}

std::pair<double, double> DensityModel::span_1d(double sds) const {
    if (dim_ != 1) throw InputError("span_1d requires a one-dimensional model");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : components_) {
        const double s = std::sqrt(c.variance[0]);
        lo = std::min(lo, c.mean[0] - sds * s);
        hi = std::max(hi, c.mean[0] + sds * s);
    }
    return {lo, hi};
}

double log_density(const DensityModel& model, Sample x) {
    return model.log_density(x);
}

double log_likelihood_ratio(Sample x, const DensityModel& p0, const DensityModel& p1) {
    if (p0.dim() != p1.dim()) {
        throw InputError("pre- and post-change models have different dimensions");
    }
    return p1.log_density(x) - p0.log_density(x);
}

KlDivergence kl_divergence(const DensityModel& p, const DensityModel& q, std::uint64_t mc_seed,
                           std::size_t mc_samples) {
    if (p.dim() != q.dim()) {
        throw InputError("KL divergence between models of different dimensions");
    }
    if (single_gaussian(p) && single_gaussian(q)) {
        const auto& a = p.components().front();
        const auto& b = q.components().front();
        double kl = 0.0;
        for (std::size_t i = 0; i < p.dim(); ++i) {
            const double dm = a.mean[i] - b.mean[i];
            kl += 0.5 * (std::log(b.variance[i] / a.variance[i]) +
                         (a.variance[i] + dm * dm) / b.variance[i] - 1.0);
        }
        return {std::max(kl, 0.0), 0.0, KlDivergence::Method::closed_form};
    }
    if (p.dim() == 1) {
        constexpr double kRelTol = 1e-8;
        auto integrand = [&](double x) {
            const double lp = p.log_density(x);
            const double pv = std::exp(lp);
            if (pv == 0.0) return 0.0;
            return pv * (lp - q.log_density(x));
        };
        double error = 0.0;
        double l1 = 0.0;
        const double inf = std::numeric_limits<double>::infinity();
        const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            integrand, -inf, inf, 20, kRelTol, &error, &l1);
        if (!std::isfinite(value) || error > kRelTol * l1 + 1e-14) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "KL quadrature did not converge: value=" << value << " error=" << error
                << " L1=" << l1;
            throw NumericError(msg.str());
        }
        return {std::max(value, 0.0), error, KlDivergence::Method::quadrature};
    }
    Engine engine = make_engine(mc_seed);
    std::normal_distribution<double> normal;
    std::vector<double> x(p.dim());
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t t = 0; t < mc_samples; ++t) {
        p.sample(engine, normal, x);
        const double v = p.log_density(x) - q.log_density(x);
        const double delta = v - mean;
        mean += delta / static_cast<double>(t + 1);
        m2 += delta * (v - mean);
    }
    const double n = static_cast<double>(mc_samples);
    const double se = std::sqrt(m2 / (n - 1.0) / n);
    return {std::max(mean, 0.0), se, KlDivergence::Method::monte_carlo};
}

void ChangePointProcess::validate() const {
    if (pre.dim() != post.dim()) {
        throw ConfigError("pre- and post-change models have different dimensions");
    }
    if (nu < 1) {
        throw ConfigError("change point must be >= 1");
    }
}

PathSampler::PathSampler(const ChangePointProcess& process, std::uint64_t seed)
    : pre_(&process.pre), post_(&process.post), nu_(process.nu), engine_(make_engine(seed)),
      current_(process.pre.dim()) {
    process.validate();
}

Sample PathSampler::next() {
    ++index_;
    const DensityModel& model = index_ < nu_ ? *pre_ : *post_;
    model.sample(engine_, normal_, current_);
    return current_;
}

Path sample_path(const ChangePointProcess& process, std::int64_t n) {
    if (n < 1) throw ConfigError("path length must be >= 1");
    PathSampler sampler(process, process.seed);
    Path path(process.pre.dim());
    for (std::int64_t i = 0; i < n; ++i) path.push_back(sampler.next());
    return path;
}

}  // namespace qcd
