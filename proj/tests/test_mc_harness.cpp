#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qcd/errors.hpp"
#include "qcd/mc_harness.hpp"

using namespace qcd;

namespace {

const DensityModel kN01 = DensityModel::gaussian(0.0, 1.0);
const DensityModel kShift = DensityModel::gaussian(0.5, 1.0);

/// Statistic 0 before n = stop_at, 1 from then on.
class StepStub final : public Detector {
public:
    explicit StepStub(std::int64_t stop_at) : stop_at_(stop_at) {}
    Algorithm algorithm() const noexcept override { return Algorithm::cusum; }
    std::size_t dim() const noexcept override { return 1; }

protected:
    double update(Sample) override { return count() >= stop_at_ ? 1.0 : 0.0; }

private:
    std::int64_t stop_at_;
};

/// Reflected sum of a constant increment.
class ConstantIncrement final : public Detector {
public:
    explicit ConstantIncrement(double z) : z_(z) {}
    Algorithm algorithm() const noexcept override { return Algorithm::cusum; }
    std::size_t dim() const noexcept override { return 1; }

protected:
    double update(Sample) override { return sum_.update(z_); }

private:
    double z_;
    ReflectedSum sum_;
};

DetectorFactory cusum_factory() { return factory_for({Algorithm::cusum, kN01, kShift}); }

KdeEstimator kde_power(double c, double e) { return {KernelSpec{}, BandwidthRule::power(c, e), ClipConfig{}}; }

}  // namespace

TEST_CASE("run_trial with stub detectors") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 5};
    const DetectorFactory at7 = [] { return std::make_unique<StepStub>(7); };
    const auto r = run_trial(quiet, at7, 1.0, 1000);
    CHECK(r.tau == 7);
    CHECK_FALSE(r.truncated);
    const auto never = run_trial(quiet, at7, std::numeric_limits<double>::infinity(), 250);
    CHECK(never.truncated);
    CHECK(never.tau == 250);
    CHECK_THROWS_AS(run_trial(quiet, at7, 1.0, 0), ConfigError);
}

TEST_CASE("run_trial replays under a fixed seed") {
    const ChangePointProcess proc{kN01, kShift, 40, 77};
    const auto a = run_trial(proc, cusum_factory(), 5.0, 100000);
    const auto b = run_trial(proc, cusum_factory(), 5.0, 100000);
    CHECK(a.tau == b.tau);
    CHECK(a.seed == 77);
}

TEST_CASE("estimate_mrl with an always-stop-at-1 stub") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 5};
    const DetectorFactory at1 = [] { return std::make_unique<StepStub>(1); };
    const auto est = estimate_mrl(quiet, at1, 1.0, 50, 100);
    CHECK(est.mean == 1.0);
    CHECK(est.std_error == 0.0);
    CHECK(est.truncated_fraction == 0.0);
    CHECK_THROWS_AS(estimate_mrl(quiet, at1, 1.0, 1, 100), ConfigError);
    CHECK_THROWS_AS(estimate_mrl({kN01, kShift, 3, 5}, at1, 1.0, 10, 100), ConfigError);
}

TEST_CASE("deterministic increment: tau = ceil(b / I)") {
    const ChangePointProcess shifted{kN01, kShift, 1, 5};
    const DetectorFactory constant = [] { return std::make_unique<ConstantIncrement>(0.125); };
    const auto delay = estimate_delay(shifted, constant, 8.0, 20, 10000);
    CHECK(delay.mean == 64.0);
    CHECK(delay.std_error == 0.0);
    CHECK(delay.premature_fraction == 0.0);
    CHECK(delay.counted == 20);
}

TEST_CASE("premature alarms are counted separately") {
    const ChangePointProcess late{kN01, kShift, 10, 5};
    const DetectorFactory at3 = [] { return std::make_unique<StepStub>(3); };
    const auto delay = estimate_delay(late, at3, 1.0, 10, 100);
    CHECK(delay.premature_fraction == 1.0);
    CHECK(delay.counted == 0);
    const DetectorFactory at12 = [] { return std::make_unique<StepStub>(12); };
    const auto ok = estimate_delay(late, at12, 1.0, 10, 100);
    CHECK(ok.premature_fraction == 0.0);
    CHECK(ok.mean == 3.0);
}

TEST_CASE("truncation is flagged") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 9};
    const auto est = estimate_mrl(quiet, cusum_factory(), 30.0, 20, 50);
    CHECK(est.truncated_fraction == 1.0);
    CHECK(est.warning());
    CHECK(est.mean == 50.0);
}

TEST_CASE("reported SE is the sample SD over sqrt(trials)") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 21};
    std::vector<TrialRecord> log;
    const auto est = estimate_mrl(quiet, cusum_factory(), 3.0, 300, 100000, {1, &log});
    REQUIRE(log.size() == 300);
    double mean = 0.0;
    for (const auto& r : log) mean += static_cast<double>(r.tau) / 300.0;
    double ss = 0.0;
    for (const auto& r : log) ss += (static_cast<double>(r.tau) - mean) * (static_cast<double>(r.tau) - mean);
    CHECK(est.mean == doctest::Approx(mean).epsilon(1e-13));
    CHECK(est.std_error == doctest::Approx(std::sqrt(ss / 299.0) / std::sqrt(300.0)).epsilon(1e-12));
    for (const auto& r : log) CHECK(r.tau >= 1);
}

TEST_CASE("doubling trials roughly divides the SE by sqrt(2)") {
    const ChangePointProcess a{kN01, kShift, kNoChange, 31};
    const ChangePointProcess b{kN01, kShift, kNoChange, 32};
    const auto small = estimate_mrl(a, cusum_factory(), 3.0, 2000, 100000);
    const auto large = estimate_mrl(b, cusum_factory(), 3.0, 4000, 100000);
    CHECK(small.std_error / large.std_error == doctest::Approx(std::sqrt(2.0)).epsilon(0.15));
}

TEST_CASE("NWLA mean run length exceeds e^b") {
    const ChangePointProcess quiet{kN01, kN01, kNoChange, 2024};
    const auto factory = factory_for({Algorithm::nwla, kN01, std::nullopt, 20, kde_power(1.0, 0.2)});
    const auto est = estimate_mrl(quiet, factory, 3.0, 2000, default_mrl_max_len(3.0));
    CHECK(est.mean >= std::exp(3.0) - 2.0 * est.std_error);
}

TEST_CASE("first-crossing times are monotone in the level") {
    CrossingScan scan;
    scan.observe(1, 0.5);
    scan.observe(2, 0.2);
    scan.observe(3, 1.5);
    scan.observe(4, 1.5);
    scan.observe(5, 2.5);
    scan.set_length(5);
    CHECK(*scan.first_crossing(0.1) == 1);
    CHECK(*scan.first_crossing(0.5) == 1);
    CHECK(*scan.first_crossing(0.6) == 3);
    CHECK(*scan.first_crossing(2.5) == 5);
    CHECK_FALSE(scan.first_crossing(2.6).has_value());

    const ChangePointProcess quiet{kN01, kShift, kNoChange, 3};
    for (std::uint64_t t = 0; t < 50; ++t) {
        PathRun run(quiet, derive_seed(3, t), cusum_factory()());
        run.advance(6.0, 100000);
        std::int64_t previous = 0;
        for (double b = 0.25; b <= 6.0; b += 0.25) {
            const auto tau = run.scan().first_crossing(b);
            REQUIRE(tau.has_value());
            CHECK(*tau >= previous);
            previous = *tau;
        }
    }
}

TEST_CASE("oc_curve with one threshold equals separate estimates") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 41};
    const ChangePointProcess shifted{kN01, kShift, 1, 42};
    const auto points = oc_curve(quiet, shifted, cusum_factory(), {4.0}, 200, 100000, 10000);
    const auto mrl = estimate_mrl(quiet, cusum_factory(), 4.0, 200, 100000);
    const auto delay = estimate_delay(shifted, cusum_factory(), 4.0, 200, 10000);
    REQUIRE(points.size() == 1);
    CHECK(points[0].run_length.mean == mrl.mean);
    CHECK(points[0].run_length.std_error == mrl.std_error);
    CHECK(points[0].delay.mean == delay.mean);
    CHECK(points[0].delay.std_error == delay.std_error);
}

TEST_CASE("oc_curve is monotone in b and independent of the thread count") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 51};
    const ChangePointProcess shifted{kN01, kShift, 1, 52};
    const std::vector<double> bs{2.0, 3.0, 4.0, 5.0, 6.0};
    const auto one = oc_curve(quiet, shifted, cusum_factory(), bs, 300, 100000, 10000, {1});
    const auto three = oc_curve(quiet, shifted, cusum_factory(), bs, 300, 100000, 10000, {3});
    for (std::size_t i = 0; i < bs.size(); ++i) {
        CHECK(one[i].run_length.mean == three[i].run_length.mean);
        CHECK(one[i].delay.mean == three[i].delay.mean);
        CHECK(one[i].delay.std_error == three[i].delay.std_error);
        CHECK(one[i].far() == doctest::Approx(1.0 / one[i].run_length.mean));
        if (i > 0) {
            CHECK(one[i].run_length.mean >= one[i - 1].run_length.mean);
            CHECK(one[i].delay.mean >= one[i - 1].delay.mean);
        }
    }
    CHECK_THROWS_AS(oc_curve(quiet, shifted, cusum_factory(), {3.0, 2.0}, 10, 100, 100), ConfigError);
    CHECK_THROWS_AS(oc_curve(quiet, shifted, cusum_factory(), {}, 10, 100, 100), ConfigError);
}

TEST_CASE("CuSum delay grows like log(MRL) / I") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 61};
    const ChangePointProcess shifted{kN01, kShift, 1, 62};
    const std::vector<double> bs{4.0, 5.0, 6.0, 7.0, 8.0};
    const auto points = oc_curve(quiet, shifted, cusum_factory(), bs, 1000, 10000000, 10000);
    double mx = 0, my = 0;
    for (const auto& p : points) {
        mx += std::log(p.run_length.mean) / 5.0;
        my += p.delay.mean / 5.0;
    }
    double sxy = 0, sxx = 0;
    for (const auto& p : points) {
        const double lx = std::log(p.run_length.mean);
        sxy += (lx - mx) * (p.delay.mean - my);
        sxx += (lx - mx) * (lx - mx);
    }
    CHECK(sxy / sxx == doctest::Approx(8.0).epsilon(0.15));
}

TEST_CASE("match_threshold finds the smallest level reaching the target") {
    const ChangePointProcess quiet{kN01, kShift, kNoChange, 71};
    const std::size_t trials = 400;
    const auto matched = match_threshold(quiet, cusum_factory(), 300.0, trials, 1000000, 1.0, 0.5);
    CHECK(matched.run_length.mean >= 300.0);
    const auto at = estimate_mrl(quiet, cusum_factory(), matched.threshold, trials, 1000000);
    CHECK(at.mean == matched.run_length.mean);
    // The estimate only changes at recorded running-max levels; the one just
    // below the match must fall short of the target.
    double previous = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        PathRun run(quiet, trial_seed(quiet, t), cusum_factory()());
        run.advance(matched.threshold, 1000000);
        for (double level : run.scan().levels()) {
            if (level < matched.threshold) previous = std::max(previous, level);
        }
    }
    REQUIRE(previous > 0.0);
    CHECK(estimate_mrl(quiet, cusum_factory(), previous, trials, 1000000).mean < 300.0);
}

TEST_CASE("check_q with the estimator stubbed to p0") {
    const auto report = check_q(kN01, {2, 5, 10}, FixedDensityEstimator{kN01}, 20, 1);
    for (const auto& row : report.rows) {
        CHECK(row.q_estimate == 1.0);
        CHECK(row.q_std_error == 0.0);
        CHECK(row.margin == doctest::Approx(-3.0 * std::log(static_cast<double>(row.m))).epsilon(1e-15));
    }
    CHECK_THROWS_AS(check_q(kN01, {1}, FixedDensityEstimator{kN01}, 20, 1), ConfigError);
}

TEST_CASE("Q(2) matches a direct two-term product") {
    const std::uint64_t seed = 17;
    const std::size_t trials = 500;
    const KdeEstimator est = kde_power(1.0, 0.2);
    const auto report = check_q(kN01, {2}, est, trials, seed);
    const ChangePointProcess proc{kN01, kN01, kNoChange, seed};
    const double h = std::pow(2.0, -0.2);
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        PathSampler sampler(proc, derive_seed(seed, t));
        const double x1 = sampler.next()[0];
        const double x2 = sampler.next()[0];
        const double u = (x1 - x2) / h;
        const double k = std::exp(-0.5 * u * u) / (h * std::sqrt(2.0 * std::numbers::pi));
        const double p1 = std::exp(-0.5 * x1 * x1) / std::sqrt(2.0 * std::numbers::pi);
        const double p2 = std::exp(-0.5 * x2 * x2) / std::sqrt(2.0 * std::numbers::pi);
        sum += (k / p1) * (k / p2);
    }
    CHECK(report.rows[0].q_estimate == doctest::Approx(sum / trials).epsilon(1e-12));
    CHECK(report.rows[0].margin == doctest::Approx(std::log(report.rows[0].q_estimate) - 3.0 * std::log(2.0)));
}

TEST_CASE("check_q is independent of the thread count") {
    const auto one = check_q(kN01, {5, 10}, kde_power(1.0, 0.2), 200, 3, 1);
    const auto four = check_q(kN01, {5, 10}, kde_power(1.0, 0.2), 200, 3, 4);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(one.rows[i].q_estimate == four.rows[i].q_estimate);
        CHECK(one.rows[i].q_std_error == four.rows[i].q_std_error);
    }
}

TEST_CASE("default max lengths") {
    CHECK(default_mrl_max_len(0.0) == 50);
    CHECK(default_mrl_max_len(3.0) == static_cast<std::int64_t>(std::ceil(50.0 * std::exp(3.0))));
    CHECK(default_mrl_max_len(100.0) == 100000000);
    CHECK(kDefaultDelayMaxLen == 10000);
}
