// endoseg synth|train|infer|report|eval|serve --config <path> [--seed N] [--out DIR]

#include <iostream>

#include "CLI11.hpp"

#include "endo/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Corneal endothelium segmentation pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    app.add_option("--config", config_path, "TOML configuration file")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_option("--out", out, "Override paths.output");
    app.fallthrough();

    using Cmd = void (*)(const endo::PipelineConfig&, std::ostream&);
    const std::pair<const char*, Cmd> commands[] = {
        {"synth", endo::cmd_synth}, {"train", endo::cmd_train}, {"infer", endo::cmd_infer},
        {"report", endo::cmd_report}, {"eval", endo::cmd_eval}, {"serve", endo::cmd_serve},
    };
    const char* help[] = {"Generate a synthetic dataset", "Train a model", "Segment images",
                          "Compute morphometric reports", "Evaluate against the test split", "Run the annotation service"};
    for (std::size_t i = 0; i < std::size(commands); ++i) app.add_subcommand(commands[i].first, help[i]);

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = endo::load_config(config_path);
        if (seed) config.set_seed(*seed);
        if (out) config.paths.output = *out;
        const auto* sub = app.get_subcommands().front();
        for (const auto& [name, fn] : commands)
            if (sub->get_name() == name) fn(config, std::cout);
    } catch (const endo::Error& e) {
        std::cerr << "error[" << endo::to_string(e.kind()) << "]: " << e.what() << '\n';
        return endo::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
