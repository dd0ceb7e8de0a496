#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cgt/data/synth.hpp"
#include "cgt/train/model.hpp"

namespace cgt::train {

struct TrainConfig {
  Phase phase = Phase::pretrain;
  Mode mode = Mode::pretrained;

  // Ablation flags; only meaningful for mode=propagate.
  bool prior_tunable = true;
  bool residuals_enabled = true;
  bool shared_scores = false;
  bool use_l1 = true;
  bool use_l2 = true;
  double lambda_r = 1e-3;
  double lambda_s = 1e-3;

  std::uint64_t iterations = 1000;
  std::size_t batch_size = 64;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  std::size_t d_steps_per_g_step = 2;
  std::uint64_t seed = 0;

  std::uint64_t eval_every = 100;
  std::size_t eval_samples = 500;  // generated and held-out real points per class
  std::size_t kmmd_samples = 250;  // subset used for KMMD during training
  double k_sigma = 3.0;

  void validate() const;
  transfer::TransferConfig transfer_config(std::size_t num_source, std::size_t num_target) const;
};

struct MetricRow {
  std::string run_id;
  std::uint64_t iteration = 0;
  std::size_t class_id = 0;
  double frechet = 0.0;
  double kmmd = 0.0;
  double coverage = 0.0;
  double quality = 0.0;
};

struct EvalPoint {
  std::uint64_t iteration = 0;
  std::vector<MetricRow> rows;
  double loss_d = 0.0;  // mean over the steps since the previous eval point
  double loss_g = 0.0;
  double wall_seconds = 0.0;  // kept in memory only; never written to files
};

struct RunRecord {
  std::string run_id;
  std::vector<EvalPoint> points;

  /// Mean of `metric` over the rows of eval point i.
  double mean_metric(std::size_t i, const std::string& metric) const;
  /// Lowest per-point mean Frechet and the iteration it occurred at.
  std::optional<std::pair<std::uint64_t, double>> best(const std::string& metric = "frechet") const;
};

void write_metric_rows_csv(std::ostream& os, const std::vector<MetricRow>& rows);
void write_run_record_csv(std::ostream& os, const RunRecord& record);
RunRecord read_run_record_csv(std::istream& is);

struct TrainResult {
  Model final_model;
  Model best_model;  // at the lowest mean evaluated-class Frechet; equals final when nothing was evaluated
  RunRecord record;
};

/// Thrown when a loss or update turns non-finite.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Source-class training data: per source class, `source_budget` samples.
std::vector<grad::Tensor> source_training_data(const data::Task& task);
/// Target-class training data: a large pool subsampled to `target_budget` per class.
std::vector<grad::Tensor> target_training_data(const data::Task& task);

TrainResult pretrain(const data::Task& task, const TrainConfig& config, const net::GeneratorSpec& gspec = {},
                     const net::DiscriminatorSpec& dspec = {});

/// Prepares a transfer model from a pretrained one (mode-specific surgery).
Model prepare_transfer(const Model& pretrained, const data::Task& task, const TrainConfig& config);

TrainResult transfer_train(const Model& pretrained, const data::Task& task, const TrainConfig& config);

TrainResult finetune(const Model& transferred, const data::Task& task, const TrainConfig& config);

/// Runs `config.iterations` adversarial steps on `model` against `data`
/// (one tensor per class in `classes`). Shared by all phases.
TrainResult run_training(Model model, const data::Task& task, const std::vector<std::size_t>& classes,
                         const std::vector<grad::Tensor>& data, const TrainConfig& config);

/// Per evaluated class: n generated samples (class-group batch, fixed seed)
/// against n held-out real samples. Deterministic.
std::vector<MetricRow> evaluate(Model& model, const data::Task& task, std::size_t n_samples, std::uint64_t seed,
                                const std::string& run_id = "eval", std::size_t kmmd_samples = 0,
                                double k_sigma = 3.0);
std::vector<MetricRow> evaluate_classes(Model& model, const data::Task& task, const std::vector<std::size_t>& classes,
                                        std::size_t n_samples, std::uint64_t seed, const std::string& run_id,
                                        std::size_t kmmd_samples, double k_sigma);

/// Real-vs-real reference rows (oracle mode): two independent draws per class.
std::vector<MetricRow> evaluate_oracle(const data::Task& task, const std::vector<std::size_t>& classes,
                                       std::size_t n_samples, std::uint64_t seed, double k_sigma = 3.0);

/// Generated samples per class, in the generation-group batch layout used by evaluate.
std::vector<grad::Tensor> generate_classes(Model& model, const std::vector<std::size_t>& classes, std::size_t n,
                                           std::uint64_t seed);

/// First eval iteration whose mean `metric` (frechet or kmmd) is <= tau.
std::optional<std::uint64_t> iterations_to_threshold(const RunRecord& record, const std::string& metric, double tau);

}  // namespace cgt::train
