#include "qcd/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "qcd/errors.hpp"

namespace qcd {

namespace {

void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

// ceil() that ignores round-off just above an integer, so 3.0000000000000004 -> 3.
std::size_t ceil_count(double x) {
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::ceil(x));
}

}  // namespace

double solve_nglr_threshold(double alpha, double varsigma) {
    require_alpha(alpha);
    if (!(varsigma >= 0.0) || !std::isfinite(varsigma)) {
        throw ConfigError("varsigma must be finite and >= 0");
    }
    const double rhs = std::abs(std::log(alpha)) + std::log(8.0);
    if (varsigma == 0.0) return rhs;

    auto f = [&](double b) { return b - varsigma * std::log(b) - rhs; };
    // f is increasing for b > varsigma with its minimum at b = varsigma.
    double lo = varsigma;
    if (f(lo) >= 0.0) {
        std::ostringstream msg;
        msg << "threshold equation has no root with b > varsigma for alpha=" << alpha
            << ", varsigma=" << varsigma;
        throw ConfigError(msg.str());
    }
    double hi = std::max(2.0 * varsigma, rhs + varsigma);
    while (f(hi) <= 0.0) hi *= 2.0;

    std::uintmax_t iterations = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iterations);
    double b = 0.5 * (bracket.first + bracket.second);
    // One Newton polish; f'(b) = 1 - varsigma / b > 0 on the branch.
    b -= f(b) / (1.0 - varsigma / b);
    if (!(std::abs(f(b)) < 1e-9)) {
        throw NumericError("threshold solver did not reach residual 1e-9");
    }
    return b;
}

double nwla_threshold(double alpha) {
    require_alpha(alpha);
    return std::abs(std::log(alpha));
}

double parallel_nwla_threshold(double alpha, std::size_t w_max) {
    require_alpha(alpha);
    if (w_max < 1) throw ConfigError("W_max must be >= 1");
    return std::abs(std::log(alpha)) + std::log(static_cast<double>(w_max));
}

double ThresholdPolicy::threshold() const {
    double value = 0.0;
    switch (mode) {
        case Mode::direct: value = b; break;
        case Mode::nglr_solve: value = solve_nglr_threshold(alpha, varsigma); break;
        case Mode::nwla_log: value = nwla_threshold(alpha); break;
        case Mode::parallel_log: value = parallel_nwla_threshold(alpha, w_max); break;
    }
    if (!(value > 0.0)) throw ConfigError("threshold must be > 0");
    return value;
}

std::size_t nglr_window(double eta, double b, double nominal_divergence) {
    if (!(eta > 1.0)) throw ConfigError("eta must be > 1");
    if (!(b > 0.0)) throw ConfigError("threshold must be > 0");
    if (!(nominal_divergence > 0.0)) throw ConfigError("nominal divergence must be > 0");
    return std::max<std::size_t>(2, ceil_count(eta * b / nominal_divergence));
}

std::size_t nwla_window(double alpha, double kappa) {
    require_alpha(alpha);
    if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
    return std::max<std::size_t>(2, ceil_count(std::pow(std::abs(std::log(alpha)), kappa)));
}

std::size_t WindowPolicy::window(double b, double alpha) const {
    switch (mode) {
        case Mode::direct:
            if (size < 1) throw ConfigError("window size must be >= 1");
            return size;
        case Mode::eta: return nglr_window(eta, b, nominal_divergence);
        case Mode::kappa: return nwla_window(alpha, kappa);
    }
    throw ConfigError("unknown window policy");
}

double rate_exponent(double kappa, double beta1) {
    if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
    if (!(beta1 > 0.0)) throw ConfigError("beta1 must be > 0");
    return std::min(kappa * beta1, 1.0 - kappa);
}

WindowExponent optimal_window_exponent(double gamma, std::size_t dim) {
    if (!(gamma > 0.0)) throw ConfigError("smoothness gamma must be positive");
    if (dim < 1) throw ConfigError("dimension must be >= 1");
    const double d = static_cast<double>(dim);
    return {(2.0 * gamma + d) / (4.0 * gamma + d), 2.0 * gamma / (4.0 * gamma + d)};
}

}  // namespace qcd
