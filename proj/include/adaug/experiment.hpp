#pragma once

// Experiment grid and its artifacts.
//
// <output_dir>/
//   config.cfg, config.digest
//   summary.csv        per mode: mean and sample std over seeds, full precision
//   summary.md         the same table with metrics x100 rounded to integers
//   cells.csv          one row per (mode, seed)
//   timing.txt         wall-clock seconds (kept out of the summaries)
//   seed_<s>/liver.ckpt
//   seed_<s>/<mode>/{manifest.json, loss.csv, per_image.csv, model.ckpt}
//
// Each seed directory is built under .staging/ and renamed into place when complete.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adaug/config.hpp"
#include "adaug/ssl.hpp"

namespace adaug {

struct CellResult {
    TrainingMode mode = TrainingMode::baseline;
    std::uint64_t seed = 0;
    double gamma = 1.0;
    std::string init = "fresh";
    std::string config_digest;
    RunCounters counters;
    EvaluationReport report;  // per_image may be empty when read back from a manifest
    double first_loss = 0.0;
    double final_loss = 0.0;
    int epochs = 0;
};

struct MetricStat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for one seed
    int n = 0;         // seeds contributing (Dice1 skips seeds without overlaps)
};

struct ModeSummary {
    TrainingMode mode = TrainingMode::baseline;
    int n_seeds = 0;
    MetricStat dice1, dice2, success, acc;
};

struct ExperimentSummary {
    std::string config_digest;
    std::vector<ModeSummary> rows;  // in TrainingMode order
    std::vector<CellResult> cells;  // sorted by (mode, seed)

    const ModeSummary* row(TrainingMode m) const;
};

CellResult make_cell(const RunOutput& out, const std::string& config_digest);

/// Per-mode statistics; independent of the order of `cells`.
/// Throws on empty input or on cells with different config digests.
ExperimentSummary summarize(std::span<const CellResult> cells);

void write_summary_csv(std::ostream& os, const ExperimentSummary& summary);
void write_summary_markdown(std::ostream& os, const ExperimentSummary& summary);
void write_cells_csv(std::ostream& os, const ExperimentSummary& summary);

/// manifest.json, loss.csv, per_image.csv and (optionally) model.ckpt for one run.
void write_run_artifacts(const std::filesystem::path& dir, const RunOutput& out, const std::string& config_digest,
                         const ClassWeights& weights, bool checkpoint);
CellResult read_run_manifest(const std::filesystem::path& manifest);

/// Reads every seed_*/<mode>/manifest.json below an experiment directory.
std::vector<CellResult> read_cells(const std::filesystem::path& experiment_dir);

/// Writes summary.csv, summary.md and cells.csv into `dir` via temporary files and renames.
void write_summary_files(const std::filesystem::path& dir, const ExperimentSummary& summary);

struct ExperimentOptions {
    std::optional<std::filesystem::path> data_dir;  // otherwise generated from the config
    bool checkpoints = true;
    std::function<void(const std::string&)> log;
};

/// Runs the mode x seed grid. Seeds are distributed over effective_workers(config)
/// threads; results do not depend on the worker count. Refuses an output directory
/// holding artifacts of a different config digest.
ExperimentSummary run_experiment(const RunConfig& config, const ExperimentOptions& options = {});

/// Seconds of wall-clock time the last run_experiment call into `dir` recorded, if any.
std::optional<double> recorded_seconds(const std::filesystem::path& dir);

}  // namespace adaug
