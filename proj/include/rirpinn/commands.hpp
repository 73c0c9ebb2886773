#pragma once

#include <string>
#include <vector>

#include "rirpinn/config.hpp"
#include "rirpinn/metrics.hpp"

namespace rirpinn {

// output.dir, optionally re-rooted by $RIRPINN_OUTPUT_ROOT when relative.
std::string resolve_output_dir(const ExperimentConfig& config);

struct SimulateResult {
    std::string dataset_path;
    std::string dataset_id;
};

SimulateResult cmd_simulate(const ExperimentConfig& config);

struct TrainOptions {
    std::string dataset_path;        // empty: <output>/dataset.json
    std::vector<std::string> only;   // sweep entry ids; empty trains all
};

void cmd_train(const ExperimentConfig& config, const TrainOptions& options);

struct EvaluateOptions {
    std::string dataset_path;
    std::string checkpoint_path;     // evaluate one explicit checkpoint
    std::vector<std::string> runs;   // or named runs under <output>/runs
    bool all_runs = false;           // or every run directory found
    bool oracle = false;             // ground truth evaluated as the model
    std::string out_dir;             // oracle output dir override
};

void cmd_evaluate(const ExperimentConfig& config, const EvaluateOptions& options);

struct ReportOptions {
    std::string runs_dir;  // empty: <output>/runs
    std::string out_dir;   // empty: <output>/report
    bool svg = false;
};

void cmd_report(const ExperimentConfig& config, const ReportOptions& options);

}  // namespace rirpinn
