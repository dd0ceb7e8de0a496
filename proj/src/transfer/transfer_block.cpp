#include "cgt/transfer/transfer_block.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "cgt/errors.hpp"

namespace cgt::transfer {

using grad::Parameter;
using grad::Shape;
using grad::Tensor;
using grad::Var;

void TransferConfig::validate() const {
  if (num_source == 0) throw ConfigError("transfer: need at least one source class");
  if (num_target == 0) throw ConfigError("transfer: need at least one target class");
  if (lambda_r < 0.0 || lambda_s < 0.0) throw ConfigError("transfer: regularization weights must be >= 0");
}

std::string_view param_kind_name(ParamKind k) noexcept { return k == ParamKind::gamma ? "gamma" : "beta"; }

TransferBlock::TransferBlock(const std::vector<net::CBNLayer>& pretrained, const TransferConfig& config)
    : config_(config) {
  config_.validate();
  if (pretrained.empty()) throw ConfigError("transfer: pretrained generator has no CBN layers");
  const std::size_t n = config_.num_source, m = config_.num_target;
  for (std::size_t l = 0; l < pretrained.size(); ++l) {
    const auto& layer = pretrained[l];
    if (layer.num_classes() != n) {
      throw ConfigError("transfer: layer " + std::to_string(l) + " has " + std::to_string(layer.num_classes()) +
                        " class rows, expected " + std::to_string(n));
    }
    const std::string tag = std::to_string(l);
    prior_gamma_.push_back({"transfer.prior.gamma" + tag, layer.gamma.value});
    prior_beta_.push_back({"transfer.prior.beta" + tag, layer.beta.value});
    residual_gamma_.push_back({"transfer.residual.gamma" + tag, Tensor(Shape{m, layer.width()})});
    residual_beta_.push_back({"transfer.residual.beta" + tag, Tensor(Shape{m, layer.width()})});
  }
  const std::size_t slots = config_.shared_scores ? 1 : pretrained.size();
  const double uniform = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < slots; ++s) {
    const std::string tag = config_.shared_scores ? "shared" : std::to_string(s);
    score_gamma_.push_back({"transfer.score.gamma" + tag, Tensor(Shape{m, n}, uniform)});
    score_beta_.push_back({"transfer.score.beta" + tag, Tensor(Shape{m, n}, uniform)});
  }
}

Parameter& TransferBlock::prior(std::size_t layer, ParamKind kind) {
  return kind == ParamKind::gamma ? prior_gamma_.at(layer) : prior_beta_.at(layer);
}
Parameter& TransferBlock::scores(std::size_t layer, ParamKind kind) {
  if (layer >= num_layers()) throw IndexError("transfer: layer " + std::to_string(layer) + " out of range");
  return kind == ParamKind::gamma ? score_gamma_.at(score_slot(layer)) : score_beta_.at(score_slot(layer));
}
Parameter& TransferBlock::residuals(std::size_t layer, ParamKind kind) {
  return kind == ParamKind::gamma ? residual_gamma_.at(layer) : residual_beta_.at(layer);
}
const Parameter& TransferBlock::prior(std::size_t layer, ParamKind kind) const {
  return kind == ParamKind::gamma ? prior_gamma_.at(layer) : prior_beta_.at(layer);
}
const Parameter& TransferBlock::scores(std::size_t layer, ParamKind kind) const {
  if (layer >= num_layers()) throw IndexError("transfer: layer " + std::to_string(layer) + " out of range");
  return kind == ParamKind::gamma ? score_gamma_.at(score_slot(layer)) : score_beta_.at(score_slot(layer));
}
const Parameter& TransferBlock::residuals(std::size_t layer, ParamKind kind) const {
  return kind == ParamKind::gamma ? residual_gamma_.at(layer) : residual_beta_.at(layer);
}

Var TransferBlock::rows(grad::Tape& tape, std::size_t layer, ParamKind kind) {
  Parameter& p = prior(layer, kind);
  Var prior_var = config_.prior_tunable ? tape.param(p) : tape.constant(p.value);
  Var combined = grad::matmul(tape.param(scores(layer, kind)), prior_var);
  if (!config_.residuals_enabled) return combined;
  return grad::add(combined, tape.param(residuals(layer, kind)));
}

std::pair<Tensor, Tensor> TransferBlock::propagate_params(std::size_t layer, std::size_t new_class) const {
  if (layer >= num_layers()) throw IndexError("propagate_params: layer " + std::to_string(layer) + " out of range");
  if (new_class >= config_.num_target) {
    throw IndexError("propagate_params: new class index " + std::to_string(new_class) + " out of range (M = " +
                     std::to_string(config_.num_target) + ")");
  }
  auto combine = [&](ParamKind kind) {
    const Tensor& hat = prior(layer, kind).value;
    const Tensor& s = scores(layer, kind).value;
    const Tensor& r = residuals(layer, kind).value;
    const std::size_t c = hat.cols();
    Tensor out(Shape{c});
    for (std::size_t i = 0; i < hat.rows(); ++i) {
      const double w = s(new_class, i);
      for (std::size_t k = 0; k < c; ++k) out[k] += w * hat(i, k);
    }
    if (config_.residuals_enabled) {
      for (std::size_t k = 0; k < c; ++k) out[k] += r(new_class, k);
    }
    return out;
  };
  return {combine(ParamKind::gamma), combine(ParamKind::beta)};
}

std::vector<Parameter*> TransferBlock::trainable_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t s = 0; s < score_gamma_.size(); ++s) {
    out.push_back(&score_gamma_[s]);
    out.push_back(&score_beta_[s]);
  }
  if (config_.residuals_enabled) {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      out.push_back(&residual_gamma_[l]);
      out.push_back(&residual_beta_[l]);
    }
  }
  if (config_.prior_tunable) {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      out.push_back(&prior_gamma_[l]);
      out.push_back(&prior_beta_[l]);
    }
  }
  return out;
}

std::vector<Parameter*> TransferBlock::all_parameters() {
  std::vector<Parameter*> out;
  for (auto* group : {&prior_gamma_, &prior_beta_, &score_gamma_, &score_beta_, &residual_gamma_, &residual_beta_}) {
    for (auto& p : *group) out.push_back(&p);
  }
  return out;
}

std::size_t TransferBlock::trainable_count() {
  std::size_t total = 0;
  for (Parameter* p : trainable_parameters()) total += p->value.size();
  return total;
}

std::size_t TransferBlock::per_class_count() const {
  std::size_t count = 2 * config_.num_source * score_gamma_.size();
  if (config_.residuals_enabled) {
    for (std::size_t l = 0; l < num_layers(); ++l) count += 2 * width(l);
  }
  return count;
}

std::size_t TransferBlock::shared_count() const {
  if (!config_.prior_tunable) return 0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) count += 2 * config_.num_source * width(l);
  return count;
}

Var TransferBlock::regularization_loss(grad::Tape& tape) {
  const double lr = config_.effective_lambda_r();
  const double ls = config_.effective_lambda_s();
  Var total = tape.constant(Tensor::scalar(0.0));
  if (lr > 0.0) {
    for (std::size_t l = 0; l < num_layers(); ++l) {
      for (ParamKind k : {ParamKind::gamma, ParamKind::beta}) {
        total = grad::add(total, grad::scale(grad::sum(grad::square(tape.param(residuals(l, k)))), lr));
      }
    }
  }
  if (ls > 0.0) {
    for (std::size_t s = 0; s < score_gamma_.size(); ++s) {
      total = grad::add(total, grad::scale(grad::sum(grad::abs(tape.param(score_gamma_[s]))), ls));
      total = grad::add(total, grad::scale(grad::sum(grad::abs(tape.param(score_beta_[s]))), ls));
    }
  }
  return total;
}

void TransferBlock::disable_residuals() {
  config_.residuals_enabled = false;
  for (auto& r : residual_gamma_) r.value.fill(0.0);
  for (auto& r : residual_beta_) r.value.fill(0.0);
}

RegularizationTerms transfer_regularization(const TransferBlock& block) {
  RegularizationTerms terms;
  for (std::size_t l = 0; l < block.num_layers(); ++l) {
    for (ParamKind k : {ParamKind::gamma, ParamKind::beta}) {
      for (double v : block.residuals(l, k).value.data()) terms.residual_l2 += v * v;
    }
  }
  const std::size_t slots = block.config().shared_scores ? 1 : block.num_layers();
  for (std::size_t l = 0; l < slots; ++l) {
    for (ParamKind k : {ParamKind::gamma, ParamKind::beta}) {
      for (double v : block.scores(l, k).value.data()) terms.score_l1 += std::fabs(v);
    }
  }
  return terms;
}

std::vector<std::pair<Tensor, Tensor>> resolve_class(const std::vector<net::CBNLayer>& bank,
                                                     const TransferBlock& block, std::size_t class_id) {
  const std::size_t n = block.config().num_source;
  const std::size_t total = n + block.config().num_target;
  if (class_id >= total) {
    throw IndexError("resolve_class: class id " + std::to_string(class_id) + " out of range (" + std::to_string(total) +
                     " classes)");
  }
  std::vector<std::pair<Tensor, Tensor>> out;
  for (std::size_t l = 0; l < bank.size(); ++l) {
    if (class_id < n) {
      const auto g = bank[l].gamma.value.row(class_id);
      const auto b = bank[l].beta.value.row(class_id);
      out.emplace_back(Tensor::vector(std::vector<double>(g.begin(), g.end())),
                       Tensor::vector(std::vector<double>(b.begin(), b.end())));
    } else {
      out.push_back(block.propagate_params(l, class_id - n));
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> top_k_scores(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) {
    throw ConfigError("export_scores: k = " + std::to_string(k) + " exceeds " + std::to_string(scores.size()) +
                      " sources");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(scores[a]) > std::fabs(scores[b]); });
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(order[i], scores[order[i]]);
  return out;
}

std::vector<ScoreEntry> export_scores(const TransferBlock& block, std::size_t k) {
  const std::size_t n = block.config().num_source;
  std::vector<ScoreEntry> out;
  for (std::size_t l = 0; l < block.num_layers(); ++l) {
    for (ParamKind kind : {ParamKind::gamma, ParamKind::beta}) {
      const Tensor& s = block.scores(l, kind).value;
      for (std::size_t j = 0; j < block.config().num_target; ++j) {
        const auto top = top_k_scores(s.row(j), k);
        for (std::size_t r = 0; r < top.size(); ++r) {
          out.push_back({l, kind, n + j, r, top[r].first, top[r].second});
        }
      }
    }
  }
  return out;
}

void write_scores_csv(std::ostream& os, const std::vector<ScoreEntry>& entries) {
  os << "layer,param_type,new_class,rank,source_class,score\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.score);
    os << e.layer << ',' << param_kind_name(e.kind) << ',' << e.new_class << ',' << e.rank << ',' << e.source_class
       << ',' << buf << '\n';
  }
}

FreshClassRows::FreshClassRows(const std::vector<std::size_t>& widths, std::size_t num_new) : num_new_(num_new) {
  for (std::size_t l = 0; l < widths.size(); ++l) {
    gamma_.push_back({"fresh.gamma" + std::to_string(l), Tensor(Shape{num_new, widths[l]}, 1.0)});
    beta_.push_back({"fresh.beta" + std::to_string(l), Tensor(Shape{num_new, widths[l]}, 0.0)});
  }
}

Var FreshClassRows::rows(grad::Tape& tape, std::size_t layer, ParamKind kind) {
  return tape.param(kind == ParamKind::gamma ? gamma_.at(layer) : beta_.at(layer));
}

std::vector<Parameter*> FreshClassRows::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < gamma_.size(); ++l) {
    out.push_back(&gamma_[l]);
    out.push_back(&beta_[l]);
  }
  return out;
}

std::size_t ExtendedResolver::num_classes() const {
  return (bank_.empty() ? 0 : bank_.front().num_classes()) + rows_.num_new();
}

net::AffineTables ExtendedResolver::tables(grad::Tape& tape, std::size_t layer) {
  net::CBNLayer& l = bank_.at(layer);
  Var old_gamma = bank_trainable_ ? tape.param(l.gamma) : tape.constant(l.gamma.value);
  Var old_beta = bank_trainable_ ? tape.param(l.beta) : tape.constant(l.beta.value);
  return {grad::concat_rows(old_gamma, rows_.rows(tape, layer, ParamKind::gamma)),
          grad::concat_rows(old_beta, rows_.rows(tape, layer, ParamKind::beta))};
}

}  // namespace cgt::transfer
