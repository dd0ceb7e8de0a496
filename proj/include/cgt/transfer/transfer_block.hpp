#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cgt/grad/tape.hpp"
#include "cgt/net/cbn.hpp"

namespace cgt::transfer {

struct TransferConfig {
  std::size_t num_source = 0;  // N
  std::size_t num_target = 0;  // M
  double lambda_r = 1e-3;      // l2 weight on residuals
  double lambda_s = 1e-3;      // l1 weight on scores
  bool prior_tunable = true;
  bool residuals_enabled = true;
  bool shared_scores = false;
  bool use_l1 = true;
  bool use_l2 = true;

  void validate() const;
  double effective_lambda_r() const { return use_l2 && residuals_enabled ? lambda_r : 0.0; }
  double effective_lambda_s() const { return use_l1 ? lambda_s : 0.0; }
};

enum class ParamKind { gamma, beta };
std::string_view param_kind_name(ParamKind k) noexcept;

/// Rows [M x C_l] for the new classes of each CBN layer. Implemented by the
/// propagation block and by the directly-learned baseline rows.
class NewClassRows {
 public:
  virtual ~NewClassRows() = default;
  virtual std::size_t num_new() const = 0;
  virtual grad::Var rows(grad::Tape& tape, std::size_t layer, ParamKind kind) = 0;
};

/// Knowledge-propagation block. New-class BN parameters of layer l are
///   gamma_new = S_gamma[l] * gamma_hat[l] + r_gamma[l]   ([M x N] * [N x C] + [M x C])
/// and likewise for beta. gamma_hat/beta_hat start as copies of the pretrained
/// source rows (the pseudo-class prior); the pretrained rows themselves are
/// never touched.
class TransferBlock final : public NewClassRows {
 public:
  TransferBlock() = default;
  TransferBlock(const std::vector<net::CBNLayer>& pretrained, const TransferConfig& config);

  const TransferConfig& config() const noexcept { return config_; }
  TransferConfig& config() noexcept { return config_; }
  std::size_t num_layers() const noexcept { return prior_gamma_.size(); }
  std::size_t num_new() const override { return config_.num_target; }
  std::size_t width(std::size_t layer) const { return prior_gamma_.at(layer).value.cols(); }

  grad::Var rows(grad::Tape& tape, std::size_t layer, ParamKind kind) override;

  /// (gamma, beta) of new class j at layer l, evaluated without a tape.
  std::pair<grad::Tensor, grad::Tensor> propagate_params(std::size_t layer, std::size_t new_class) const;

  grad::Parameter& prior(std::size_t layer, ParamKind kind);
  grad::Parameter& scores(std::size_t layer, ParamKind kind);  // aliased across layers in shared mode
  grad::Parameter& residuals(std::size_t layer, ParamKind kind);
  const grad::Parameter& prior(std::size_t layer, ParamKind kind) const;
  const grad::Parameter& scores(std::size_t layer, ParamKind kind) const;
  const grad::Parameter& residuals(std::size_t layer, ParamKind kind) const;

  /// Scores always; residuals when enabled; priors when tunable. Shared-score
  /// mode lists the single score pair once.
  std::vector<grad::Parameter*> trainable_parameters();
  std::vector<grad::Parameter*> all_parameters();

  std::size_t trainable_count();
  /// Parameters owned by one new class (score rows + residual rows).
  std::size_t per_class_count() const;
  /// Parameters independent of M (tunable prior).
  std::size_t shared_count() const;

  /// lambda_r * L_r + lambda_s * L_s on the tape, using effective lambdas.
  grad::Var regularization_loss(grad::Tape& tape);

  /// Zero residuals and disable them.
  void disable_residuals();
  void enable_residuals() { config_.residuals_enabled = true; }

 private:
  std::size_t score_slot(std::size_t layer) const { return config_.shared_scores ? 0 : layer; }

  TransferConfig config_;
  std::vector<grad::Parameter> prior_gamma_, prior_beta_;
  std::vector<grad::Parameter> score_gamma_, score_beta_;
  std::vector<grad::Parameter> residual_gamma_, residual_beta_;
};

struct RegularizationTerms {
  double residual_l2 = 0.0;  // L_r
  double score_l1 = 0.0;     // L_s
};

/// Raw (unweighted) regularizers. In shared-score mode the single score pair
/// is counted once.
RegularizationTerms transfer_regularization(const TransferBlock& block);

/// Per-layer (gamma, beta) of any class: old classes read the pretrained bank,
/// new classes go through the block.
std::vector<std::pair<grad::Tensor, grad::Tensor>> resolve_class(const std::vector<net::CBNLayer>& bank,
                                                                 const TransferBlock& block, std::size_t class_id);

struct ScoreEntry {
  std::size_t layer;
  ParamKind kind;
  std::size_t new_class;  // global class id (N + j)
  std::size_t rank;       // 0 = strongest
  std::size_t source_class;
  double score;
};

/// Top-k sources per (layer, kind, new class) by |score|, descending, ties to
/// the lower source index.
std::vector<ScoreEntry> export_scores(const TransferBlock& block, std::size_t k);
/// Same ranking for a single score vector.
std::vector<std::pair<std::size_t, double>> top_k_scores(std::span<const double> scores, std::size_t k);

void write_scores_csv(std::ostream& os, const std::vector<ScoreEntry>& entries);

/// Directly-learned new-class rows (batch-statistics adaptation baseline):
/// gamma starts at 1, beta at 0, no sharing between classes.
class FreshClassRows final : public NewClassRows {
 public:
  FreshClassRows() = default;
  FreshClassRows(const std::vector<std::size_t>& widths, std::size_t num_new);

  std::size_t num_new() const override { return num_new_; }
  grad::Var rows(grad::Tape& tape, std::size_t layer, ParamKind kind) override;
  std::vector<grad::Parameter*> parameters();
  grad::Parameter& gamma(std::size_t layer) { return gamma_.at(layer); }
  grad::Parameter& beta(std::size_t layer) { return beta_.at(layer); }

 private:
  std::size_t num_new_ = 0;
  std::vector<grad::Parameter> gamma_, beta_;
};

/// Conditioning over N + M classes: pretrained bank rows for the first N,
/// `rows` for the rest.
class ExtendedResolver final : public net::ClassResolver {
 public:
  ExtendedResolver(std::vector<net::CBNLayer>& bank, bool bank_trainable, NewClassRows& rows)
      : bank_(bank), bank_trainable_(bank_trainable), rows_(rows) {}
  std::size_t num_classes() const override;
  net::AffineTables tables(grad::Tape& tape, std::size_t layer) override;

 private:
  std::vector<net::CBNLayer>& bank_;
  bool bank_trainable_;
  NewClassRows& rows_;
};

}  // namespace cgt::transfer
