#include "voltguard/cli/commands.hpp"
#include "voltguard/error.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

namespace vc = voltguard::cli;

void add_common(CLI::App* cmd, vc::CommonArgs& common) {
    cmd->add_option("--config", common.config, "JSON run configuration");
    cmd->add_option("--seed", common.seed, "root seed for every random stream");
    cmd->add_option("--out", common.out, "output directory (VOLTGUARD_OUT overrides)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safe under-voltage load-shedding workbench", "voltguard"};
    app.set_version_flag("--version", vc::tool_version());
    app.require_subcommand(1);

    vc::CommonArgs common;

    auto* gen = app.add_subcommand("gen", "sample scenarios");
    add_common(gen, common);
    std::size_t count = 100;
    gen->add_option("--count", count, "number of scenarios");

    auto* label = app.add_subcommand("label", "label state-action samples with the margin oracle");
    add_common(label, common);
    vc::LabelArgs label_args;
    label->add_option("--scenarios", label_args.scenarios, "scenario file from gen")->required();
    label->add_option("--actions-per-scenario", label_args.actions_per_scenario, "random actions per scenario");
    label->add_option("--grid", label_args.action_grid, "uniform shed fractions instead of random actions")->delimiter(',');
    label->add_option("--max-chunks", label_args.max_chunks, "stop after this many checkpointed chunks");

    auto* train_margin = app.add_subcommand("train-margin", "train the margin estimator");
    add_common(train_margin, common);
    vc::TrainMarginArgs tm_args;
    bool active = false;
    bool full = false;
    train_margin->add_option("--data", tm_args.data, "labeled CSV")->required();
    auto* active_flag = train_margin->add_flag("--active", active, "active learning");
    auto* full_flag = train_margin->add_flag("--full", full, "train on every sample");
    active_flag->excludes(full_flag);
    train_margin->add_option("--folds", tm_args.folds, "cross-validation folds");

    auto* train_agent = app.add_subcommand("train-agent", "train the load-shedding policy");
    add_common(train_agent, common);
    vc::TrainAgentArgs ta_args;
    bool no_safety = false;
    bool with_safety = false;
    auto* ws = train_agent->add_flag("--with-safety", with_safety, "correct actions during training");
    auto* ns = train_agent->add_flag("--no-safety", no_safety, "train without the safety layer");
    ws->excludes(ns);
    train_agent->add_option("--margin", ta_args.margin, "estimator checkpoint");
    train_agent->add_option("--episodes", ta_args.episodes, "training episodes");

    auto* evaluate = app.add_subcommand("evaluate", "compare methods on held-out scenarios");
    add_common(evaluate, common);
    vc::EvaluateArgs ev_args;
    evaluate->add_option("--policy", ev_args.policy, "policy checkpoint")->required();
    evaluate->add_option("--margin", ev_args.margin, "estimator checkpoint");
    evaluate->add_option("--scenarios", ev_args.scenarios, "scenario file")->required();
    evaluate->add_option("--methods", ev_args.methods, "proposed,raw,typical,traversal")->delimiter(',');
    evaluate->add_flag("--oracle", ev_args.oracle, "correct with the ground-truth oracle");
    evaluate->add_option("--curves", ev_args.curves, "training curve CSVs to overlay")->delimiter(',');

    auto* trace = app.add_subcommand("trace", "record one correction trajectory");
    add_common(trace, common);
    vc::TraceArgs tr_args;
    trace->add_option("--margin", tr_args.margin, "estimator checkpoint")->required();
    trace->add_option("--scenarios", tr_args.scenarios, "scenario file")->required();
    trace->add_option("--index", tr_args.index, "scenario index");
    trace->add_option("--a0", tr_args.a0, "proposed action")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        vc::RunManifest m;
        if (*gen) {
            m = vc::cmd_gen(common, count);
        } else if (*label) {
            m = vc::cmd_label(common, label_args);
        } else if (*train_margin) {
            tm_args.mode = active ? vc::MarginMode::Active : vc::MarginMode::Full;
            m = vc::cmd_train_margin(common, tm_args);
        } else if (*train_agent) {
            ta_args.with_safety = !no_safety;
            m = vc::cmd_train_agent(common, ta_args);
        } else if (*evaluate) {
            m = vc::cmd_evaluate(common, ev_args);
        } else if (*trace) {
            m = vc::cmd_trace(common, tr_args);
        }
        for (const auto& o : m.outputs) std::cout << (vc::resolve_out(common.out) / o).string() << '\n';
        return 0;
    } catch (const voltguard::NumericalError& e) {
        std::cerr << "voltguard: numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const voltguard::Error& e) {
        std::cerr << "voltguard: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "voltguard: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "voltguard: unexpected error: " << e.what() << '\n';
        return 1;
    }
}
