#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cgt/cli/config.hpp"
#include "cgt/cli/experiment.hpp"

namespace cgt::cli {

struct RunSummary {
  std::optional<std::pair<std::uint64_t, double>> best;  // (iteration, mean Frechet)
  std::optional<std::uint64_t> iterations_to_threshold;
  double final_frechet = 0.0;
};

RunSummary summarize_run(const train::RunRecord& record, double tau);

/// One row per (label, budget) with at least one evaluated run, ranked within
/// each budget by median best Frechet (ties by label). Header only when no run
/// has eval points.
void write_summary_csv(std::ostream& os, const std::vector<CellResult>& results, double tau);

/// Every cell directory under <input>/runs, in (label, budget, seed) order.
std::vector<CellResult> load_cells(const std::filesystem::path& input);

/// Writes summary.csv, runs.csv, convergence.csv, scores_topk.csv and the SVGs
/// into `out_dir`. Deterministic in its inputs.
void emit_report(const ExperimentConfig& cfg, const std::filesystem::path& input,
                 const std::filesystem::path& out_dir);

/// report subcommand: input is report.input, or `out` when that is empty;
/// files go to <out>/report.
void cmd_report(const ExperimentConfig& cfg, const std::filesystem::path& out);

}  // namespace cgt::cli
