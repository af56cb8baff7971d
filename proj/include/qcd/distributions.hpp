#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "qcd/rng.hpp"

namespace qcd {

/// One observation in R^d.
using Sample = std::span<const double>;

struct GaussianComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> variance;  // diagonal
};

/// Diagonal Gaussian or finite mixture of diagonal Gaussians on R^d.
/// Immutable once built; the factories validate every parameter.
class DensityModel {
public:
    enum class Kind { gaussian, gaussian_mixture };

    static DensityModel gaussian(std::vector<double> mean, std::vector<double> variance);
    static DensityModel gaussian(double mean, double variance);
    static DensityModel mixture(std::vector<GaussianComponent> components);

    Kind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<GaussianComponent>& components() const noexcept { return components_; }

    double log_density(Sample x) const;
    double log_density(double x) const;

    /// Draws one observation into `out` (size dim()).
    void sample(Engine& engine, std::normal_distribution<double>& normal, std::span<double> out) const;

    /// Interval covering every component's mean +/- `sds` standard deviations (d = 1 only).
    std::pair<double, double> span_1d(double sds) const;

    bool operator==(const DensityModel&) const = default;

private:
    DensityModel(Kind kind, std::vector<GaussianComponent> components);

    Kind kind_;
    std::size_t dim_;
    std::vector<GaussianComponent> components_;
    std::vector<double> log_weights_;
    std::vector<double> log_norms_;  // -1/2 sum log(2 pi var) per component
};

double log_density(const DensityModel& model, Sample x);

/// log p1(x) - log p0(x).
double log_likelihood_ratio(Sample x, const DensityModel& p0, const DensityModel& p1);

struct KlDivergence {
    enum class Method { closed_form, quadrature, monte_carlo };
    double value = 0.0;
    double std_error = 0.0;  // quadrature error estimate or Monte Carlo SE
    Method method = Method::closed_form;
};

/// KL(p || q). Closed form for two Gaussians, adaptive Gauss-Kronrod for
/// mixtures on d = 1, seeded Monte Carlo for mixtures with d > 1.
KlDivergence kl_divergence(const DensityModel& p, const DensityModel& q,
                           std::uint64_t mc_seed = 1, std::size_t mc_samples = 200000);

/// Change-point index meaning "no change".
inline constexpr std::int64_t kNoChange = std::numeric_limits<std::int64_t>::max();

struct ChangePointProcess {
    DensityModel pre;
    DensityModel post;
    std::int64_t nu = kNoChange;  // first post-change index (1-based)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Row-major sequence of observations.
class Path {
public:
    explicit Path(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return values_.size() / dim_; }
    Sample operator[](std::size_t i) const { return Sample(values_.data() + i * dim_, dim_); }
    void push_back(Sample x) { values_.insert(values_.end(), x.begin(), x.end()); }
    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const Path&) const = default;

private:
    std::size_t dim_;
    std::vector<double> values_;
};

/// Streams observations of a change-point process. Pre- and post-change draws
/// consume the same normal stream, so paths that differ only in nu agree on
/// every index before the earlier change point. The process must outlive the
/// sampler.
class PathSampler {
public:
    PathSampler(const ChangePointProcess& process, std::uint64_t seed);

    /// Next observation; the view is valid until the following call.
    Sample next();
    std::int64_t index() const noexcept { return index_; }

private:
    const DensityModel* pre_;
    const DensityModel* post_;
    std::int64_t nu_;
    Engine engine_;
    std::normal_distribution<double> normal_;
    std::vector<double> current_;
    std::int64_t index_ = 0;
};

/// First n observations of the process, drawn with the process seed.
Path sample_path(const ChangePointProcess& process, std::int64_t n);

}  // namespace qcd
