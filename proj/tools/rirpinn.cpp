#include <exception>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rirpinn/commands.hpp"
#include "rirpinn/common.hpp"
#include "rirpinn/config.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config file")
        ->required();
    cmd->add_option("-s,--set", args.overrides,
                    "override a config key, key=value (repeatable)");
}

rirpinn::ExperimentConfig load_config(const CommonArgs& args) {
    std::vector<std::pair<std::string, std::string>> overrides;
    overrides.reserve(args.overrides.size());
    for (const std::string& o : args.overrides)
        overrides.push_back(rirpinn::split_override(o));
    return rirpinn::load_experiment_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Room impulse response field simulation, training and evaluation"};
    app.require_subcommand(1);

    CommonArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "synthesize a dataset");
    add_common(sim, sim_args);

    CommonArgs train_args;
    rirpinn::TrainOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "train the model sweep");
    add_common(train, train_args);
    train->add_option("--dataset", train_opts.dataset_path,
                      "dataset file (default <output>/dataset.json)");
    train->add_option("--only", train_opts.only,
                      "train only these sweep entries (repeatable)");

    CommonArgs eval_args;
    rirpinn::EvaluateOptions eval_opts;
    CLI::App* eval = app.add_subcommand("evaluate", "compute metrics on the grid");
    add_common(eval, eval_args);
    eval->add_option("--dataset", eval_opts.dataset_path,
                     "dataset file (default <output>/dataset.json)");
    eval->add_option("--checkpoint", eval_opts.checkpoint_path,
                     "evaluate one checkpoint file");
    eval->add_option("--run", eval_opts.runs,
                     "evaluate named runs under <output>/runs (repeatable)");
    eval->add_flag("--all", eval_opts.all_runs, "evaluate every trained run");
    eval->add_flag("--oracle", eval_opts.oracle,
                   "evaluate the ground truth against itself");
    eval->add_option("--out", eval_opts.out_dir, "oracle output directory");

    CommonArgs report_args;
    rirpinn::ReportOptions report_opts;
    CLI::App* report = app.add_subcommand("report", "aggregate run metrics");
    add_common(report, report_args);
    report->add_option("--runs", report_opts.runs_dir,
                       "runs directory (default <output>/runs)");
    report->add_option("--out", report_opts.out_dir,
                       "report directory (default <output>/report)");
    report->add_flag("--svg", report_opts.svg, "also write SVG charts");

    try {
        app.parse(argc, argv);
        if (sim->parsed()) {
            rirpinn::cmd_simulate(load_config(sim_args));
        } else if (train->parsed()) {
            rirpinn::cmd_train(load_config(train_args), train_opts);
        } else if (eval->parsed()) {
            rirpinn::cmd_evaluate(load_config(eval_args), eval_opts);
        } else if (report->parsed()) {
            rirpinn::cmd_report(load_config(report_args), report_opts);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const rirpinn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const rirpinn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const rirpinn::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const rirpinn::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
