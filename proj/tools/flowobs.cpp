// flowobs command-line front end.
//
//   flowobs synthesize --config C [--out DIR]
//   flowobs twin       --config C [--gain G] [--out DIR] [--seed N] [--no-plots]
//   flowobs observe    --config C --measurements CSV [--gain G] [--out DIR] [--no-plots]
//   flowobs verify     --config C --gain G
//   flowobs sweep      --config C1 --config C2 ... [--out DIR] [--seed N] [--no-plots]

#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowobs/harness.hpp"

int main(int argc, char** argv) {
    flowobs::init_logging();

    CLI::App app{"Augmented-state crossover observer for redox flow batteries"};
    app.require_subcommand(1);

    std::string config;
    std::string gain;
    std::string out = "out";
    std::string measurements;
    std::uint64_t seed = 0;
    bool no_plots = false;
    std::vector<std::string> sweep_configs;

    auto add_common = [&](CLI::App* sub, bool with_gain) {
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        if (with_gain) sub->add_option("--gain", gain, "gain file from a previous synthesize run");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "override experiment.seed");
        sub->add_flag("--no-plots", no_plots, "skip SVG plots");
    };

    auto* synth = app.add_subcommand("synthesize", "solve the polytopic LMI and certify the gain");
    add_common(synth, false);
    auto* twin = app.add_subcommand("twin", "simulate a synthetic battery and run the observer on it");
    add_common(twin, true);
    auto* observe = app.add_subcommand("observe", "run the observer on a measurement CSV");
    add_common(observe, true);
    observe->add_option("--measurements", measurements, "CSV with time_min,v_out_V,current_A,flow_L_per_min")
        ->required()
        ->check(CLI::ExistingFile);
    auto* verify = app.add_subcommand("verify", "re-check the certificates of a gain file");
    verify->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    verify->add_option("--gain", gain, "gain file")->required()->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "run twin for several configs in parallel");
    sweep->add_option("--config", sweep_configs, "experiment configs")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out, "parent output directory");
    sweep->add_option("--seed", seed, "override experiment.seed");
    sweep->add_flag("--no-plots", no_plots, "skip SVG plots");

    CLI11_PARSE(app, argc, argv);

    flowobs::CommandOptions opts;
    opts.config = config;
    opts.out_dir = out;
    opts.plots = !no_plots;
    if (!gain.empty()) opts.gain = gain;
    if (!measurements.empty()) opts.measurements = measurements;
    for (auto* sub : {synth, twin, observe, sweep}) {
        if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
    }

    if (synth->parsed()) return flowobs::cmd_synthesize(opts);
    if (twin->parsed()) return flowobs::cmd_twin(opts);
    if (observe->parsed()) return flowobs::cmd_observe(opts);
    if (verify->parsed()) return flowobs::cmd_verify(opts);
    std::vector<std::filesystem::path> paths(sweep_configs.begin(), sweep_configs.end());
    return flowobs::cmd_sweep(paths, opts);
}
