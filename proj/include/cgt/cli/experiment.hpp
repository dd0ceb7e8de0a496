#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgt/cli/config.hpp"
#include "cgt/train/trainer.hpp"

namespace cgt::cli {

/// A checkpoint the subcommand depends on does not exist.
class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One transfer run of a sweep.
struct Cell {
  std::string label;  // mode name, or ablation variant name
  train::Mode mode = train::Mode::propagate;
  std::uint64_t seed = 0;
  std::size_t budget = 0;  // target samples per class
  train::TrainConfig config;
};

struct CellResult {
  Cell cell;
  train::RunRecord record;
};

struct Variant {
  std::string label;
  bool prior_tunable, residuals, shared_scores, use_l1, use_l2;
};

/// The eight ablation rows, from the weakest (frozen prior, no residuals) to
/// the full method.
const std::vector<Variant>& ablation_variants();

/// transfer.mode over every seed at the task's target budget.
std::vector<Cell> transfer_cells(const ExperimentConfig& cfg);
/// Every ablation variant over every seed at the task's target budget.
std::vector<Cell> ablation_cells(const ExperimentConfig& cfg);
/// Every mode over every budget and seed.
std::vector<Cell> compare_cells(const ExperimentConfig& cfg);

/// <out>/runs/<label>/b<budget>/seed<seed>
std::filesystem::path cell_dir(const std::filesystem::path& out, const Cell& cell);
/// Effective single-run config of a cell, as echoed into its directory.
ExperimentConfig cell_config(const ExperimentConfig& cfg, const Cell& cell, const std::string& pretrained_path);
/// Inverse of cell_config.
Cell cell_from_config(const ExperimentConfig& cfg);

void write_file(const std::filesystem::path& path, const std::string& contents);
/// Writes config.ini into `dir`.
void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

train::Model load_model(const std::string& path, const char* what);

/// Loads cfg.pretrained, or pretrains into <out>/pretrain when it is empty.
/// Returns the model and the checkpoint path it came from.
std::pair<train::Model, std::string> obtain_pretrained(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Runs the cells on `jobs` threads. Each cell writes only to its own
/// directory; results come back in cell order. The first failure (in cell
/// order) is rethrown after all threads finish.
std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells,
                                  const train::Model& pretrained, const std::string& pretrained_path,
                                  const std::filesystem::path& out, std::size_t jobs, bool quiet = false);

void cmd_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_transfer(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs);
void cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs);
void cmd_compare(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t jobs);

}  // namespace cgt::cli
