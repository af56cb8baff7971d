#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qcd/app/commands.hpp"
#include "qcd/errors.hpp"

namespace {

constexpr int kConfigFailure = 1;
constexpr int kNumericFailure = 2;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> output_dir;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("config", common.config, "YAML experiment file")->required();
    cmd->add_option("--seed", common.seed, "override the master seed");
    cmd->add_option("--threads", common.threads, "worker threads (output does not depend on it)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", common.output_dir, "override the output directory");
    cmd->add_flag("-q,--quiet", common.quiet, "no progress output");
}

qcd::app::RunOptions options_of(const Common& common) {
    return {common.seed, common.threads, common.output_dir, common.quiet ? nullptr : &std::cerr};
}

void report(const std::vector<std::string>& written) {
    for (const auto& path : written) std::cout << path << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quickest change detection experiments"};
    app.require_subcommand(1);

    Common oc;
    Common qcheck;
    Common kdeloss;
    add_common(app.add_subcommand("oc", "operating characteristic curves"), oc);
    add_common(app.add_subcommand("qcheck", "Q(m) condition check"), qcheck);
    add_common(app.add_subcommand("kdeloss", "KDE KL-loss decay"), kdeloss);

    qcd::app::SolveInputs solve;
    std::optional<double> inom;
    auto* solve_cmd = app.add_subcommand("solve", "threshold and window policy values");
    solve_cmd->add_option("--alpha", solve.alpha, "target false-alarm rate")->required();
    solve_cmd->add_option("--varsigma", solve.varsigma, "NGLR threshold constant")->capture_default_str();
    solve_cmd->add_option("--kappa", solve.kappa, "NWLA window exponent")->capture_default_str();
    solve_cmd->add_option("--gamma", solve.gamma, "density smoothness")->capture_default_str();
    solve_cmd->add_option("--dim", solve.dim, "dimension")->capture_default_str();
    solve_cmd->add_option("--eta", solve.eta, "NGLR window factor")->capture_default_str();
    solve_cmd->add_option("--inom", inom, "nominal divergence for the NGLR window");
    solve_cmd->add_option("--wmax", solve.w_max, "parallel NWLA W_max")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigFailure;
    }

    try {
        if (app.got_subcommand("oc")) {
            report(qcd::app::cmd_oc(oc.config, options_of(oc)));
        } else if (app.got_subcommand("qcheck")) {
            report(qcd::app::cmd_qcheck(qcheck.config, options_of(qcheck)));
        } else if (app.got_subcommand("kdeloss")) {
            report(qcd::app::cmd_kdeloss(kdeloss.config, options_of(kdeloss)));
        } else {
            solve.nominal_divergence = inom;
            std::cout << qcd::app::cmd_solve(solve);
        }
    } catch (const qcd::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericFailure;
    } catch (const qcd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const qcd::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericFailure;
    }
    return 0;
}
