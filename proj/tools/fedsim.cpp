// Command-line front end: run experiments, sweep attack fractions, render
// plots, check configs, print the defaults table.

#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated-learning simulator"};
    app.require_subcommand(1);

    fedsim::CliOptions opt;
    std::string plot_dir;

    auto add_common = [&](CLI::App* cmd, bool wants_out) {
        cmd->add_option("--config", opt.config_path, "experiment config (JSON)")
            ->required();
        if (wants_out)
            cmd->add_option("--out", opt.out_dir, "output root (default: runs)");
        cmd->add_option("--seed", opt.seed, "override the config seed");
        cmd->add_option("--threads", opt.threads, "worker threads for local training");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run, true);

    CLI::App* sweep = app.add_subcommand("sweep", "run one experiment per attack fraction");
    add_common(sweep, true);
    sweep->add_option("--fractions", opt.fractions, "attack fractions, e.g. 0.2,0.5,0.9")
        ->delimiter(',')
        ->required();

    CLI::App* plot = app.add_subcommand("plot", "render charts for a run or sweep directory");
    plot->add_option("--out", plot_dir, "run or sweep directory")->required();

    CLI::App* validate = app.add_subcommand("validate", "parse and check a config");
    validate->add_option("--config", opt.config_path, "experiment config (JSON)")
        ->required();
    validate->add_option("--seed", opt.seed, "override the config seed");

    app.add_subcommand("defaults", "print the full defaults table as JSON");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return fedsim::cmd_run(opt);
    if (sweep->parsed()) return fedsim::cmd_sweep(opt);
    if (plot->parsed()) return fedsim::cmd_plot(plot_dir);
    if (validate->parsed()) return fedsim::cmd_validate(opt);
    return fedsim::cmd_defaults();
}
