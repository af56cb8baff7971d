#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "qcd/detectors.hpp"
#include "qcd/errors.hpp"

using namespace qcd;

namespace {

const DensityModel kN01 = DensityModel::gaussian(0.0, 1.0);
const DensityModel kShift = DensityModel::gaussian(0.5, 1.0);

KdeEstimator kde_fixed(double h) { return {KernelSpec{}, BandwidthRule::fixed(h), ClipConfig{}}; }
KdeEstimator kde_power(double c, double e) { return {KernelSpec{}, BandwidthRule::power(c, e), ClipConfig{}}; }

std::vector<double> stream(std::uint64_t seed, std::size_t n, double shift_at = 1e9, double shift = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = normal(rng) + (static_cast<double>(i) >= shift_at ? shift : 0.0);
    return out;
}

double gauss_pdf(double u, double h) {
    return std::exp(-0.5 * (u / h) * (u / h)) / (h * std::sqrt(2.0 * std::numbers::pi));
}

// Explicit reduced-window KDE at x over data with index skip removed.
double reduced_kde(const std::vector<double>& data, std::size_t skip, double h, double x) {
    WindowBuffer w(data.size() - 1);
    for (std::size_t j = 0; j < data.size(); ++j) {
        if (j != skip) w.push(data[j]);
    }
    return kde_eval(w, KernelSpec{}, h, x);
}

// NGLR statistic at time n (1-based, x[0..n-1]) by the definition.
double nglr_brute(const std::vector<double>& x, std::size_t n, std::size_t m, const BandwidthRule& rule,
                  const ClipConfig& clip) {
    const std::size_t lo = n > m ? n - m + 1 : 1;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = lo; k <= n - 1; ++k) {
        const std::vector<double> seg(x.begin() + static_cast<std::ptrdiff_t>(k - 1),
                                      x.begin() + static_cast<std::ptrdiff_t>(n));
        const double h = bandwidth_of(rule, seg.size())[0];
        double total = 0.0;
        for (std::size_t i = 0; i < seg.size(); ++i) {
            total += std::log(clip_density(reduced_kde(seg, i, h, seg[i]), clip)) - kN01.log_density(seg[i]);
        }
        best = std::max(best, total);
    }
    return best;
}

// Sup over theta on a grid of sum_i log N(theta,1)/N(0,1) (X_i) = theta S - L theta^2 / 2.
double glr_grid(const std::vector<double>& x, std::size_t n, std::size_t m) {
    const std::size_t lo = n > m ? n - m + 1 : 1;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = lo; k <= n; ++k) {
        for (int g = -5000; g <= 5000; ++g) {
            const double theta = g * 1e-3;
            double total = 0.0;
            for (std::size_t i = k; i <= n; ++i) {
                const double a = x[i - 1] - theta;
                const double b = x[i - 1];
                total += 0.5 * (b * b - a * a);
            }
            best = std::max(best, total);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("algorithm names round trip") {
    for (Algorithm a : {Algorithm::cusum, Algorithm::glr, Algorithm::nglr, Algorithm::nwla,
                        Algorithm::parallel_nwla, Algorithm::sr}) {
        CHECK(algorithm_from_string(to_string(a)) == a);
    }
    CHECK_THROWS_AS(algorithm_from_string("bogus"), ConfigError);
}

TEST_CASE("CuSum step examples") {
    CusumDetector d(kN01, kShift);
    CHECK(d.step(1.0) == doctest::Approx(0.375).epsilon(1e-14));
    ReflectedSum r(-0.2);
    CHECK(r.update(0.1) == doctest::Approx(0.1).epsilon(1e-15));
    ReflectedSum s(7.9);
    CHECK(s.update(0.2) >= 8.0);
}

TEST_CASE("CuSum invariant W(n) - Z(n) >= 0 and crossing") {
    CusumDetector d(kN01, kShift);
    double previous = 0.0;
    for (double x : stream(3, 2000, 1000)) {
        const double w = d.step(x);
        const double z = 0.5 * (x - 0.25);
        CHECK(w - z >= -1e-12);
        CHECK(w == doctest::Approx(std::max(previous, 0.0) + z).epsilon(1e-12));
        previous = w;
    }
    StoppingRule rule(std::make_unique<CusumDetector>(kN01, kShift), 8.0);
    std::int64_t n = 0;
    for (double x : stream(4, 100000, 0)) {
        ++n;
        if (rule.step(x).stopped) break;
    }
    REQUIRE(rule.stopped());
    CHECK(*rule.stopping_time() == n);
    CHECK(rule.detector().statistic() >= 8.0);
    CHECK_THROWS_AS(rule.step(0.0), StateError);
}

TEST_CASE("GLR closed form examples") {
    GlrDetector d(kN01, 2);
    d.step(1.0);
    CHECK(d.step(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.best_start() == 1);
    GlrDetector z(kN01, 5);
    for (int i = 0; i < 5; ++i) CHECK(z.step(0.0) == 0.0);
}

TEST_CASE("GLR closed form matches the theta-grid sup on 100 random windows") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> len(1, 12);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 5;
        const std::size_t n = static_cast<std::size_t>(len(rng));
        const auto x = stream(1000 + trial, n, 0, 0.7);
        GlrDetector d(kN01, m);
        double value = 0.0;
        for (double v : x) value = d.step(v);
        worst = std::max(worst, std::abs(value - glr_grid(x, n, m)));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("GLR with a non-standard pre-change Gaussian") {
    GlrDetector d(DensityModel::gaussian(1.0, 4.0), 3);
    d.step(1.0);
    d.step(3.0);
    // Best segment is k = 2: centered sum 4 over 2 samples, variance 4: 16 / (2 * 4 * 2) = 1.
    CHECK(d.step(3.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(GlrDetector(DensityModel::gaussian({0.0, 0.0}, {1.0, 1.0}), 3), ConfigError);
}

TEST_CASE("NGLR two-sample case by hand") {
    const double h = std::pow(10.0, -0.2);
    NglrDetector d(kN01, 20, kde_fixed(h));
    CHECK(d.step(0.3) == 0.0);
    const double value = d.step(-0.4);
    const double expected = std::log(gauss_pdf(0.7, h)) - kN01.log_density(0.3) + std::log(gauss_pdf(-0.7, h)) -
                            kN01.log_density(-0.4);
    CHECK(value == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("NGLR streaming statistic equals the brute-force definition") {
    const BandwidthRule fixed = BandwidthRule::fixed(std::pow(10.0, -0.2));
    const BandwidthRule power = BandwidthRule::power(1.0, 0.2);
    double worst = 0.0;
    for (int path = 0; path < 20; ++path) {
        const auto x = stream(500 + path, 60, 30);
        for (const auto& rule : {fixed, power}) {
            NglrDetector d(kN01, 20, KdeEstimator{KernelSpec{}, rule, ClipConfig{}});
            for (std::size_t n = 1; n <= x.size(); ++n) {
                const double value = d.step(x[n - 1]);
                if (n < 2) continue;
                worst = std::max(worst, std::abs(value - nglr_brute(x, n, 20, rule, ClipConfig{})));
            }
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("NGLR with a binding clip floor still matches the definition") {
    ClipConfig clip{1e-3};
    const auto x = stream(71, 40, 10, 3.0);
    NglrDetector d(kN01, 8, KdeEstimator{KernelSpec{}, BandwidthRule::fixed(0.05), clip});
    for (std::size_t n = 1; n <= x.size(); ++n) {
        const double value = d.step(x[n - 1]);
        if (n >= 2) CHECK(std::abs(value - nglr_brute(x, n, 8, BandwidthRule::fixed(0.05), clip)) < 1e-10);
    }
}

TEST_CASE("NGLR in two dimensions matches segment_loo_log_ratio") {
    const auto pre = DensityModel::gaussian({0.0, 0.0}, {1.0, 1.0});
    const std::vector<double> h{0.6, 0.8};
    NglrDetector d(pre, 6, KdeEstimator{KernelSpec{}, BandwidthRule{BandwidthRule::Mode::fixed, h, 0.0}, ClipConfig{}});
    const auto a = stream(1, 30);
    const auto b = stream(2, 30);
    std::vector<double> flat;
    std::vector<double> log_p0;
    for (std::size_t n = 1; n <= 30; ++n) {
        const std::vector<double> xn{a[n - 1], b[n - 1]};
        flat.insert(flat.end(), xn.begin(), xn.end());
        log_p0.push_back(pre.log_density(xn));
        const double value = d.step(xn);
        if (n < 2) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = std::max<std::size_t>(1, n + 1 > 6 ? n - 5 : 1); k <= n - 1; ++k) {
            const std::span<const double> seg(flat.data() + 2 * (k - 1), 2 * (n - k + 1));
            const std::span<const double> lp(log_p0.data() + (k - 1), n - k + 1);
            best = std::max(best, segment_loo_log_ratio(seg, 2, lp, h, ClipConfig{}));
        }
        CHECK(value == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("NGLR with the estimator stubbed to p0 is identically zero") {
    NglrDetector d(kN01, 10, FixedDensityEstimator{kN01});
    for (double x : stream(9, 200, 100)) CHECK(d.step(x) == 0.0);
}

TEST_CASE("NGLR with the true p1 equals the oracle window-limited GLR") {
    const std::size_t m = 15;
    NglrDetector d(kN01, m, FixedDensityEstimator{kShift});
    const auto x = stream(10, 300, 150);
    for (std::size_t n = 1; n <= x.size(); ++n) {
        const double value = d.step(x[n - 1]);
        if (n < 2) {
            CHECK(value == 0.0);
            continue;
        }
        double best = -std::numeric_limits<double>::infinity();
        const std::size_t lo = n > m ? n - m + 1 : 1;
        for (std::size_t k = lo; k <= n - 1; ++k) {
            double s = 0.0;
            for (std::size_t i = k; i <= n; ++i) s += kShift.log_density(x[i - 1]) - kN01.log_density(x[i - 1]);
            best = std::max(best, s);
        }
        CHECK(value == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("NGLR window must be at least 2") {
    CHECK_THROWS_AS(NglrDetector(kN01, 1, kde_fixed(0.5)), ConfigError);
}

TEST_CASE("NWLA pinned at zero, first active step and recursion") {
    const std::size_t w = 5;
    const double h = std::pow(5.0, -0.2);
    NwlaDetector d(kN01, w, kde_power(1.0, 0.2));
    const auto x = stream(12, 50, 0, 3.0);
    for (std::size_t n = 1; n <= w; ++n) CHECK(d.step(x[n - 1]) == 0.0);
    WindowBuffer prev(w);
    for (std::size_t j = 0; j < w; ++j) prev.push(x[j]);
    const double first = std::log(kde_eval(prev, KernelSpec{}, h, x[w]) / std::exp(kN01.log_density(x[w])));
    CHECK(d.step(x[w]) == doctest::Approx(first).epsilon(1e-12));
    double stat = d.statistic();
    for (std::size_t n = w + 2; n <= x.size(); ++n) {
        const double value = d.step(x[n - 1]);
        CHECK(value == doctest::Approx(std::max(stat, 0.0) + *d.last_increment()).epsilon(1e-14));
        stat = value;
    }
    ReflectedSum r(-0.3);
    CHECK(r.update(0.2) == 0.2);
}

TEST_CASE("NWLA increment ignores observations older than n - w") {
    const std::size_t w = 7;
    auto a = stream(13, 40);
    auto b = a;
    for (std::size_t i = 0; i < 20; ++i) b[i] += 10.0 * std::sin(static_cast<double>(i));
    NwlaDetector da(kN01, w, kde_fixed(0.6));
    NwlaDetector db(kN01, w, kde_fixed(0.6));
    for (std::size_t n = 1; n <= a.size(); ++n) {
        da.step(a[n - 1]);
        db.step(b[n - 1]);
        if (n > 20 + w) CHECK(*da.last_increment() == *db.last_increment());
    }
}

TEST_CASE("NWLA cannot stop before n = w + 1") {
    StoppingRule rule(std::make_unique<NwlaDetector>(kN01, 4, kde_fixed(0.5)), -1.0);
    for (int i = 0; i < 4; ++i) CHECK_FALSE(rule.step(0.1).stopped);
    CHECK(rule.step(0.1).stopped);
    CHECK(*rule.stopping_time() == 5);
}

TEST_CASE("NWLA dominance diagnostics hold on simulated paths") {
    for (int path = 0; path < 50; ++path) {
        NwlaDetector pre(kN01, 20, kde_power(1.0, 0.2), true);
        NwlaDetector post(kN01, 20, kde_power(1.0, 0.2), true);
        const auto quiet = stream(2000 + path, 400);
        const auto shifted = stream(3000 + path, 400, 0);
        for (std::size_t n = 0; n < 400; ++n) {
            pre.step(quiet[n]);
            post.step(shifted[n]);
            CHECK(post.cumulative_sum() <= post.statistic());
        }
        CHECK(pre.diagnostic_violations() == 0);
        CHECK(post.diagnostic_violations() == 0);
    }
}

TEST_CASE("SR statistic") {
    ShiryaevRobertsDetector zero(kN01, 3, FixedDensityEstimator{kN01});
    for (int i = 0; i < 3; ++i) {
        zero.step(0.5);
        CHECK(zero.value() == 0.0);
    }
    zero.step(0.5);
    CHECK(zero.value() == 1.0);
    zero.step(0.5);
    CHECK(zero.value() == 2.0);

    // R_n >= exp(W(n)) at n = w + 1 (equality) and strictly after.
    for (int path = 0; path < 20; ++path) {
        const std::size_t w = 10;
        ShiryaevRobertsDetector sr(kN01, w, kde_fixed(0.6));
        NwlaDetector nwla(kN01, w, kde_fixed(0.6));
        const auto x = stream(4000 + path, 300);
        for (std::size_t n = 1; n <= x.size(); ++n) {
            sr.step(x[n - 1]);
            const double wbar = nwla.step(x[n - 1]);
            if (n == w + 1) CHECK(sr.log_value() == wbar);
            if (n > w + 1) CHECK(sr.log_value() > wbar);
        }
    }
}

TEST_CASE("log1p_exp") {
    CHECK(log1p_exp(-std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(log1p_exp(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(log1p_exp(800.0) == doctest::Approx(800.0).epsilon(1e-15));
    CHECK(log1p_exp(-50.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));
}

TEST_CASE("parallel NWLA equals the max of independent detectors exactly") {
    const std::size_t w_max = 12;
    for (const EstimatorConfig& est : {EstimatorConfig{kde_fixed(0.6)}, EstimatorConfig{kde_power(1.0, 0.2)},
                                       EstimatorConfig{FixedDensityEstimator{kShift}}}) {
        ParallelNwlaDetector par(kN01, w_max, est);
        std::vector<std::unique_ptr<NwlaDetector>> singles;
        for (std::size_t w = 1; w <= w_max; ++w) singles.push_back(std::make_unique<NwlaDetector>(kN01, w, est));
        const auto x = stream(14, 300, 150);
        for (double v : x) {
            const double value = par.step(v);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t w = 1; w <= w_max; ++w) {
                const double s = singles[w - 1]->step(v);
                CHECK(par.statistic_for(w) == s);
                best = std::max(best, s);
            }
            CHECK(value == best);
        }
    }
}

TEST_CASE("parallel NWLA with W_max = 1 is NWLA with w = 1") {
    ParallelNwlaDetector par(kN01, 1, kde_fixed(0.5));
    NwlaDetector single(kN01, 1, kde_fixed(0.5));
    for (double v : stream(15, 200, 100)) CHECK(par.step(v) == single.step(v));
}

TEST_CASE("parallel NWLA stops no later than any single window") {
    const double b = 3.0;
    for (int path = 0; path < 10; ++path) {
        const auto x = stream(600 + path, 3000, 0, 1.0);
        StoppingRule par(std::make_unique<ParallelNwlaDetector>(kN01, 8, kde_fixed(0.6)), b);
        std::int64_t tau_par = -1;
        for (std::size_t n = 0; n < x.size() && tau_par < 0; ++n) {
            if (par.step(x[n]).stopped) tau_par = *par.stopping_time();
        }
        REQUIRE(tau_par > 0);
        for (std::size_t w = 2; w <= 8; ++w) {
            StoppingRule single(std::make_unique<NwlaDetector>(kN01, w, kde_fixed(0.6)), b);
            std::int64_t tau = std::numeric_limits<std::int64_t>::max();
            for (std::size_t n = 0; n < x.size(); ++n) {
                if (single.step(x[n]).stopped) {
                    tau = *single.stopping_time();
                    break;
                }
            }
            CHECK(tau_par <= tau);
        }
    }
}

TEST_CASE("detectors replay deterministically") {
    const auto x = stream(16, 400, 200);
    auto configs = std::vector<DetectorConfig>{
        {Algorithm::cusum, kN01, kShift},
        {Algorithm::glr, kN01, std::nullopt, 20},
        {Algorithm::nglr, kN01, std::nullopt, 20, kde_fixed(0.6)},
        {Algorithm::nglr, kN01, std::nullopt, 10, kde_power(1.0, 0.2)},
        {Algorithm::nwla, kN01, std::nullopt, 20, kde_power(1.0, 0.2)},
        {Algorithm::parallel_nwla, kN01, std::nullopt, 20, kde_fixed(0.6)},
        {Algorithm::sr, kN01, std::nullopt, 20, kde_fixed(0.6)},
    };
    for (const auto& c : configs) {
        auto a = make_detector(c);
        auto b = make_detector(c);
        CHECK(a->algorithm() == c.algorithm);
        for (double v : x) {
            const double sa = a->step(v);
            CHECK(std::isfinite(sa));
            CHECK(sa == b->step(v));
        }
    }
}

TEST_CASE("make_detector and step errors") {
    CHECK_THROWS_AS(make_detector({Algorithm::cusum, kN01, std::nullopt}), ConfigError);
    CHECK_THROWS_AS(make_detector({Algorithm::nwla, kN01, std::nullopt, 0, kde_fixed(0.5)}), ConfigError);
    CHECK_THROWS_AS(make_detector({Algorithm::nwla, kN01, std::nullopt, 5, kde_fixed(-0.5)}), ConfigError);
    auto d = make_detector({Algorithm::cusum, kN01, kShift});
    CHECK_THROWS_AS(d->step(std::numeric_limits<double>::quiet_NaN()), InputError);
    const std::vector<double> two{0.0, 1.0};
    CHECK_THROWS_AS(d->step(two), InputError);
}
