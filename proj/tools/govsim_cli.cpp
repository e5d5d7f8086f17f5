// govsim — compute-provider governance simulator CLI.
//
// Subcommands run a prefix of the scenario pipeline and write that prefix's
// artifacts to --out:
//   simulate   traces only
//   account    + usage records, estimates, threshold events
//   classify   + classifier model, classifications, reconciliations
//   kyc        + identity verification outcomes
//   federate   + enforcement, regulator reports, digests, structuring alerts
//   report     everything plus summary files
//
// Exit codes: 0 ok, 1 scenario validation error, 2 runtime error,
// 3 run completed with reportable events or structuring alerts present.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "govsim/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string scenario_path;
    std::string out_dir = "out";
    std::string format = "text";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--scenario", args.scenario_path, "Scenario file (.json or .jsonl)")
        ->required();
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--format", args.format, "Console output format")
        ->check(CLI::IsMember({"text", "jsonl"}));
    cmd->add_option("--seed", args.seed, "Override the scenario seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

int run_stage(const CommonArgs& args, govsim::pipeline::Stage stage) {
    govsim::pipeline::RunOptions opts;
    opts.stage = stage;
    if (args.seed_set) opts.seed_override = args.seed;

    const auto result = govsim::pipeline::run_scenario_file(args.scenario_path, args.out_dir, opts);
    if (args.format == "jsonl")
        std::cout << result.summary_json << "\n";
    else
        std::cout << result.summary_text;
    return result.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"compute-provider governance simulator"};
    app.require_subcommand(1);

    const std::pair<const char*, govsim::pipeline::Stage> stages[] = {
        {"simulate", govsim::pipeline::Stage::simulate},
        {"account", govsim::pipeline::Stage::account},
        {"classify", govsim::pipeline::Stage::classify},
        {"kyc", govsim::pipeline::Stage::kyc},
        {"federate", govsim::pipeline::Stage::federate},
        {"report", govsim::pipeline::Stage::report},
    };
    static const std::map<std::string, std::string> descriptions = {
        {"simulate", "Generate telemetry traces for the scenario schedule"},
        {"account", "Compute usage records, estimates and threshold events"},
        {"classify", "Extract features, classify workloads, reconcile declarations"},
        {"kyc", "Verify customer identities against the entity list"},
        {"federate", "Run enforcement and cross-provider structuring detection"},
        {"report", "Run the full pipeline and write the summary report"},
    };

    CommonArgs args[std::size(stages)];
    for (std::size_t i = 0; i < std::size(stages); ++i) {
        auto* cmd = app.add_subcommand(stages[i].first, descriptions.at(stages[i].first));
        add_common(cmd, args[i]);
    }

    CLI11_PARSE(app, argc, argv);

    for (std::size_t i = 0; i < std::size(stages); ++i) {
        if (!app.got_subcommand(stages[i].first)) continue;
        try {
            return run_stage(args[i], stages[i].second);
        } catch (const govsim::ValidationError& e) {
            std::cerr << "validation error: " << e.what() << "\n";
            return 1;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }
    return 2;
}
