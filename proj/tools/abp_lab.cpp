// abp_lab: configuration-driven runs of the adaptive biasing potential toolkit.
//
//   abp_lab fixed-point --config run.ini [--out DIR]
//   abp_lab sweep       --config run.ini [--out DIR]
//   abp_lab evolve      --config run.ini [--out DIR] [--seed N] [--threads N]
//   abp_lab toy         --config run.ini [--out DIR]
//   abp_lab report      --out DIR
//
// Exit codes: 0 all checks passed, 1 some check failed, 2 bad input or a
// numerical error.

#include <omp.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "abp/cli/config.hpp"
#include "abp/cli/runner.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Adaptive biasing potential experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    for (const char* name : {"fixed-point", "sweep", "evolve", "toy"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (default: output.directory)");
        sub->add_option("--seed", seed, "particle seed, overrides particles.seed");
        sub->add_option("--threads", threads, "OpenMP threads")->check(CLI::PositiveNumber);
    }
    auto* report = app.add_subcommand("report", "print the checks of an earlier run");
    report->add_option("--out", out_dir, "run directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        if (command == "report") return abp::cli::cmd_report(out_dir, std::cout) ? 0 : 1;

        abp::cli::ExperimentConfig config = abp::cli::parse_config_file(config_path);
        if (seed) config.particles.seed = *seed;
        if (threads) omp_set_num_threads(*threads);
        const std::string dir = out_dir.empty() ? config.output.directory : out_dir;
        const auto summary = abp::cli::run_command(command, config, dir);
        for (const auto& c : summary.checks)
            std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << abp::io::format_double(c.value) << ' ' << c.relation << ' '
                      << abp::io::format_double(c.threshold) << (c.note.empty() ? "" : "  (" + c.note + ")") << '\n';
        std::cout << "wrote " << dir << '\n';
        return summary.all_passed() ? 0 : 1;
    } catch (const abp::Error& e) {
        std::cerr << "abp_lab " << command << ": " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "abp_lab " << command << ": " << e.what() << '\n';
        return 2;
    }
}
