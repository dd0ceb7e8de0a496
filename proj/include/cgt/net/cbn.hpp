#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "cgt/grad/tape.hpp"

namespace cgt::net {

/// Class-conditional batch normalization bank for one layer: one (gamma, beta)
/// row per class.
struct CBNLayer {
  grad::Parameter gamma;  // [classes x width]
  grad::Parameter beta;   // [classes x width]
  double eps = 1e-5;

  static CBNLayer identity(std::string name, std::size_t classes, std::size_t width, double eps = 1e-5);

  std::size_t num_classes() const noexcept { return gamma.value.rows(); }
  std::size_t width() const noexcept { return gamma.value.cols(); }
};

/// Per-class (gamma, beta) lookup tables for one layer, each [classes x width].
struct AffineTables {
  grad::Var gamma;
  grad::Var beta;
};

/// Supplies conditioning tables to the generator, one pair per CBN layer.
class ClassResolver {
 public:
  virtual ~ClassResolver() = default;
  virtual std::size_t num_classes() const = 0;
  virtual AffineTables tables(grad::Tape& tape, std::size_t layer) = 0;
};

/// Normalizes each feature by full-batch moments, then modulates every sample
/// with the gamma/beta row of its own class:
///   out = gamma[y] * (f - mean) / sqrt(var + eps) + beta[y]
grad::Var cbn_forward(grad::Var features, std::span<const std::size_t> class_ids, const AffineTables& tables,
                      double eps);

}  // namespace cgt::net
