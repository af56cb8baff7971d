#pragma once

#include <cstddef>

namespace qcd {

/// Root b > varsigma of b - varsigma * log(b) = |log alpha| + log 8, the NGLR
/// threshold meeting false-alarm rate alpha. Closed form when varsigma = 0.
/// Throws ConfigError when the increasing branch has no root.
double solve_nglr_threshold(double alpha, double varsigma);

/// |log alpha|, the NWLA threshold.
double nwla_threshold(double alpha);

/// |log alpha| + log(w_max), the parallel-NWLA threshold.
double parallel_nwla_threshold(double alpha, std::size_t w_max);

struct ThresholdPolicy {
    enum class Mode { direct, nglr_solve, nwla_log, parallel_log };
    Mode mode = Mode::direct;
    double b = 0.0;         // direct
    double alpha = 0.01;    // target false-alarm rate
    double varsigma = 3.0;  // nglr_solve
    std::size_t w_max = 1;  // parallel_log

    double threshold() const;
};

/// NGLR window: ceil(eta * b / nominal_divergence). Requires eta > 1.
std::size_t nglr_window(double eta, double b, double nominal_divergence);

/// NWLA window: max(2, ceil(|log alpha|^kappa)). Requires kappa in (0, 1).
std::size_t nwla_window(double alpha, double kappa);

struct WindowPolicy {
    enum class Mode { direct, eta, kappa };
    Mode mode = Mode::direct;
    std::size_t size = 0;                 // direct
    double eta = 1.5;                     // eta
    double nominal_divergence = 0.0;      // eta
    double kappa = 0.5;                   // kappa

    /// Window for threshold b (eta mode) or false-alarm target alpha (kappa mode).
    std::size_t window(double b, double alpha) const;
};

/// rho_kappa = min(kappa * beta1, 1 - kappa), the delay-rate exponent of an
/// NWLA test whose window grows as |log alpha|^kappa.
double rate_exponent(double kappa, double beta1);

struct WindowExponent {
    double kappa_star = 0.0;
    double rho_star = 0.0;
};

/// Maximizer of rate_exponent for a KDE on a gamma-smooth density in d
/// dimensions: kappa* = (2 gamma + d) / (4 gamma + d), rho* = 2 gamma / (4 gamma + d).
WindowExponent optimal_window_exponent(double gamma, std::size_t dim);

}  // namespace qcd
