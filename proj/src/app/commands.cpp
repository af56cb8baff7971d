#include "qcd/app/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "qcd/app/svg.hpp"
#include "qcd/errors.hpp"
#include "qcd/mc_harness.hpp"
#include "qcd/policy.hpp"
#include "qcd/rng.hpp"

namespace qcd::app {

namespace {

std::string nu_cell(std::int64_t nu) { return nu == kNoChange ? "inf" : format_integer(nu); }

void add_trials(CsvTable& table, const std::string& label, const std::vector<TrialRecord>& records) {
    for (const auto& r : records) {
        table.add_row({label, format_number(r.threshold), std::to_string(r.seed), nu_cell(r.nu),
                       format_integer(r.tau), r.truncated ? "1" : "0"});
    }
}

void add_point(OcTables& tables, const std::string& label, double b, const RunLengthEstimate& mrl,
               const DelayEstimate& delay, std::ostream* log) {
    tables.curve.add_row({label, format_number(b), format_number(mrl.mean), format_number(mrl.std_error),
                          format_number(delay.mean), format_number(delay.std_error),
                          format_number(mrl.truncated_fraction), format_integer(static_cast<std::int64_t>(mrl.trials))});
    if (log == nullptr) return;
    *log << "  " << label << " b=" << format_number(b) << " mrl=" << mrl.mean << " delay=" << delay.mean << '\n';
    if (mrl.warning()) {
        *log << "warning: " << label << " b=" << format_number(b) << ": " << mrl.truncated_fraction * 100.0
             << "% of run-length trials truncated; mrl is a lower bound\n";
    }
    if (delay.premature_fraction > 0.0) {
        *log << "  " << label << " premature alarms: " << delay.premature_fraction * 100.0 << "%\n";
    }
    if (mrl.dominance_violations > 0 || delay.dominance_violations > 0) {
        *log << "warning: " << label << ": " << mrl.dominance_violations + delay.dominance_violations
             << " dominance diagnostic violations\n";
    }
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << text;
}

template <class Config>
void apply(Config& config, const RunOptions& options) {
    if (options.seed) config.seed = *options.seed;
    if (options.threads) {
        if (*options.threads < 1) throw ConfigError("--threads must be >= 1");
        config.threads = *options.threads;
    }
    if (options.output_dir) config.output_dir = *options.output_dir;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace

OcTables run_oc(const OcConfig& config, std::ostream* log) {
    OcTables tables;
    const ChangePointProcess quiet{config.pre, config.post, kNoChange, derive_seed(config.seed, 0)};
    for (const auto& spec : config.detectors) {
        for (std::int64_t nu : config.change_points) {
            const std::string label = config.change_points.size() == 1
                                          ? spec.name
                                          : spec.name + "@nu=" + std::to_string(nu);
            const ChangePointProcess shifted{config.pre, config.post, nu, derive_seed(config.seed, 1)};
            std::vector<TrialRecord> records;
            HarnessOptions options{config.threads, config.write_trials ? &records : nullptr};
            if (log != nullptr) *log << "[oc] " << label << '\n';

            if (config.match) {
                const std::size_t window =
                    spec.algorithm == Algorithm::cusum ? 0 : spec.window.size;
                const auto factory = factory_for(spec.build(config.pre, config.post, window));
                for (double target : config.match->target_mrl) {
                    const std::int64_t max_len = config.mrl_max_len.value_or(
                        static_cast<std::int64_t>(std::ceil(50.0 * target)));
                    const auto matched = match_threshold(quiet, factory, target, config.trials, max_len,
                                                         config.match->b_start, config.match->b_step, options);
                    const auto delay = estimate_delay(shifted, factory, matched.threshold, config.trials,
                                                      config.delay_max_len, options);
                    add_point(tables, label, matched.threshold, matched.run_length, delay, log);
                }
            } else {
                // Thresholds sharing a window share one set of simulated paths.
                std::map<std::size_t, std::vector<double>> groups;
                std::vector<std::size_t> order;
                for (const auto& level : spec.thresholds.levels()) {
                    const std::size_t window = spec.window_for(level);
                    auto [it, inserted] = groups.try_emplace(window);
                    if (inserted) order.push_back(window);
                    it->second.push_back(level.b);
                }
                for (std::size_t window : order) {
                    const auto& bs = groups[window];
                    const auto factory = factory_for(spec.build(config.pre, config.post, window));
                    const std::int64_t max_len = config.mrl_max_len.value_or(default_mrl_max_len(bs.back()));
                    const auto points = oc_curve(quiet, shifted, factory, bs, config.trials, max_len,
                                                 config.delay_max_len, options);
                    for (const auto& p : points) add_point(tables, label, p.threshold, p.run_length, p.delay, log);
                }
            }
            add_trials(tables.trials, label, records);
        }
    }
    return tables;
}

CsvTable run_qcheck(const QCheckConfig& config, std::ostream* log) {
    CsvTable table({"series", "m", "q_estimate", "q_se", "margin"});
    for (const auto& series : config.series) {
        if (log != nullptr) *log << "[qcheck] " << series.name << '\n';
        const auto report = check_q(series.p0, config.m_values, series.estimator, config.trials, config.seed,
                                    config.threads);
        for (const auto& row : report.rows) {
            table.add_row({series.name, format_integer(static_cast<std::int64_t>(row.m)),
                           format_number(row.q_estimate), format_number(row.q_std_error),
                           format_number(row.margin)});
        }
    }
    return table;
}

CsvTable run_kdeloss(const KdeLossConfig& config, std::ostream* log) {
    CsvTable table({"w", "kl_first", "kl_first_se", "kl_second", "kl_second_se"});
    std::vector<double> log_w;
    std::vector<double> log_first;
    std::vector<double> log_second;
    for (std::size_t i = 0; i < config.windows.size(); ++i) {
        const std::size_t w = config.windows[i];
        if (log != nullptr) *log << "[kdeloss] w=" << w << '\n';
        const auto loss = estimate_kl_loss(config.truth, w, config.estimator, config.trials,
                                           derive_seed(config.seed, i), config.threads);
        table.add_row({format_integer(static_cast<std::int64_t>(w)), format_number(loss.first_moment.mean),
                       format_number(loss.first_moment.std_error), format_number(loss.second_moment.mean),
                       format_number(loss.second_moment.std_error)});
        log_w.push_back(std::log(static_cast<double>(w)));
        log_first.push_back(std::log(loss.first_moment.mean));
        log_second.push_back(std::log(loss.second_moment.mean));
    }
    if (config.windows.size() >= 2) {
        table.add_row({"slope", format_number(slope(log_w, log_first)), "", format_number(slope(log_w, log_second)), ""});
    }
    return table;
}

std::vector<std::string> cmd_oc(const std::string& config_path, const RunOptions& options) {
    OcConfig config = load_oc_config(config_path);
    apply(config, options);
    const OcTables tables = run_oc(config, options.log);
    ensure_dir(config.output_dir);
    const std::filesystem::path dir(config.output_dir);
    std::vector<std::string> written;
    const std::string curve = (dir / "oc_curve.csv").string();
    tables.curve.write(curve);
    written.push_back(curve);
    if (config.write_trials) {
        const std::string trials = (dir / "trials.csv").string();
        tables.trials.write(trials);
        written.push_back(trials);
    }
    if (config.write_svg) {
        const std::string svg = (dir / "oc_curve.svg").string();
        write_text(svg, render_oc_svg(CsvTable::read(curve)));
        written.push_back(svg);
    }
    return written;
}

std::vector<std::string> cmd_qcheck(const std::string& config_path, const RunOptions& options) {
    QCheckConfig config = load_qcheck_config(config_path);
    apply(config, options);
    const CsvTable table = run_qcheck(config, options.log);
    ensure_dir(config.output_dir);
    const std::filesystem::path dir(config.output_dir);
    std::vector<std::string> written;
    const std::string csv = (dir / "qcheck.csv").string();
    table.write(csv);
    written.push_back(csv);
    if (config.write_svg) {
        const std::string svg = (dir / "qcheck.svg").string();
        write_text(svg, render_qcheck_svg(CsvTable::read(csv)));
        written.push_back(svg);
    }
    return written;
}

std::vector<std::string> cmd_kdeloss(const std::string& config_path, const RunOptions& options) {
    KdeLossConfig config = load_kdeloss_config(config_path);
    apply(config, options);
    const CsvTable table = run_kdeloss(config, options.log);
    ensure_dir(config.output_dir);
    const std::string csv = (std::filesystem::path(config.output_dir) / "kdeloss.csv").string();
    table.write(csv);
    return {csv};
}

std::string cmd_solve(const SolveInputs& in) {
    std::ostringstream out;
    out.precision(17);
    const double b = solve_nglr_threshold(in.alpha, in.varsigma);
    out << "alpha = " << in.alpha << '\n';
    out << "b_alpha = " << b << "  (NGLR, varsigma = " << in.varsigma << ")\n";
    out << "b_bar_alpha = " << nwla_threshold(in.alpha) << "  (NWLA)\n";
    out << "parallel_threshold = " << parallel_nwla_threshold(in.alpha, in.w_max)
        << "  (parallel NWLA, W_max = " << in.w_max << ")\n";
    if (in.nominal_divergence) {
        out << "m_b = " << nglr_window(in.eta, b, *in.nominal_divergence) << "  (eta = " << in.eta
            << ", I_nom = " << *in.nominal_divergence << ")\n";
    } else {
        out << "m_b = n/a  (pass --inom)\n";
    }
    out << "w_alpha = " << nwla_window(in.alpha, in.kappa) << "  (kappa = " << in.kappa << ")\n";
    const auto exponent = optimal_window_exponent(in.gamma, in.dim);
    out << "kappa_star = " << exponent.kappa_star << "  (gamma = " << in.gamma << ", d = " << in.dim << ")\n";
    out << "rho_star = " << exponent.rho_star << '\n';
    return out.str();
}

}  // namespace qcd::app
