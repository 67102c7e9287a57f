#include "prectime/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace prectime;
    CLI::App app{"PrecTime time-series segmentation engine"};
    app.require_subcommand(1);

    CommandOptions opts;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "train a model from a run config");
    train->add_option("--config", opts.config, "run config")->required();
    train->add_option("--out", opts.out, "output directory (default: output_dir of the config)");
    train->add_option("--seed", seed, "overrides the config seed");
    train->add_flag("--quiet", opts.quiet, "no progress output");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the cycles of a manifest");
    eval->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", opts.manifest, "manifest CSV path,split")->required();
    eval->add_option("--out", opts.out, "output directory (default: eval)");
    eval->add_option("--config", opts.config, "run config supplying [metrics] options");
    eval->add_option("--split", opts.split, "only cycles of this split");
    eval->add_flag("--quiet", opts.quiet, "no summary output");

    auto* predict = app.add_subcommand("predict", "per-timestep labels for one cycle CSV");
    predict->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
    predict->add_option("cycle", opts.input, "cycle CSV")->required();
    predict->add_option("--out", opts.out, "output CSV (default: stdout)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with a manifest");
    synth->add_option("--config", opts.config, "document with a [synth] section")->required();
    synth->add_option("--out", opts.out, "output directory (default: output_dir of the config)");
    synth->add_option("--seed", seed, "overrides the config seed");
    synth->add_flag("--quiet", opts.quiet, "no summary output");

    auto* params = app.add_subcommand("params", "per-layer parameter counts");
    params->add_option("--config", opts.config, "run config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    for (auto* sub : {train, synth}) {
        if (sub->count("--seed") > 0) opts.seed = seed;
    }

    if (*train) return cmd_train(opts, std::cout, std::cerr);
    if (*eval) return cmd_eval(opts, std::cout, std::cerr);
    if (*predict) return cmd_predict(opts, std::cout, std::cerr);
    if (*synth) return cmd_synth(opts, std::cout, std::cerr);
    return cmd_params(opts, std::cout, std::cerr);
}
