#include <iostream>

#include <CLI11.hpp>

#include "mfc/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Finite-particle control experiments: simulation, HJB grids, probes"};
    app.require_subcommand(1);

    mfc::RunOptions run;
    std::string out, format = "csv";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
    run_cmd->add_option("--config", run.config, "Experiment JSON")->required();
    auto* out_opt = run_cmd->add_option("--out", out, "Output directory (overrides the config)");
    auto* seed_opt = run_cmd->add_option("--seed", seed, "Master seed (overrides the config)");
    auto* jobs_opt = run_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    run_cmd->add_option("--format", format, "Standard output format")->check(CLI::IsMember({"csv", "json"}));

    std::string list_format = "csv";
    auto* list_cmd = app.add_subcommand("list", "List registry models, functionals and probes");
    list_cmd->add_option("--format", list_format, "csv prints one entry per line, json an array")
        ->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(mfc::ExitCode::ConfigError);
    }

    if (*list_cmd) {
        mfc::print_registry(std::cout, list_format == "json");
        return 0;
    }
    if (*out_opt) run.out = out;
    if (*seed_opt) run.seed = seed;
    if (*jobs_opt) run.jobs = jobs;
    run.format = format;
    return static_cast<int>(mfc::run_command(run, std::cout, std::cerr));
}
