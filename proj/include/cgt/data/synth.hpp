#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cgt/grad/tensor.hpp"

namespace cgt::data {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

struct ClassDistribution {
  Vec2 center{};
  Mat2 covariance{};  // symmetric positive definite

  void validate() const;
  /// Largest per-axis standard deviation (sqrt of the top eigenvalue).
  double scale() const;
};

enum class Geometry { ring, grid };

struct TaskConfig {
  Geometry geometry = Geometry::ring;
  std::size_t num_source = 8;  // N
  std::size_t num_target = 2;  // M
  std::size_t source_budget = 2000;
  std::size_t target_budget = 50;
  double radius = 2.0;        // ring radius, or grid spacing for the grid geometry
  double sigma = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
  /// Canonical text of the geometry (budgets excluded), used for fingerprints.
  std::string geometry_key() const;
  /// FNV-1a over geometry_key().
  std::uint64_t fingerprint() const;
};

struct Task {
  TaskConfig config;
  std::vector<ClassDistribution> sources;
  std::vector<ClassDistribution> targets;
  std::vector<std::size_t> target_gaps;  // ring: index i of the gap between source i and i+1

  std::size_t num_classes() const noexcept { return sources.size() + targets.size(); }
  /// Global class id: sources are 0..N-1, targets N..N+M-1.
  const ClassDistribution& distribution(std::size_t class_id) const;
};

/// Sources on a circle of radius R at angles 2*pi*i/N with covariance sigma^2 I.
/// Each target sits on the same circle at the midpoint angle of a distinct gap
/// between adjacent sources; the gaps are chosen by a seeded shuffle.
Task make_ring_task(std::size_t num_source, std::size_t num_target, double radius, double sigma, std::uint64_t seed);

/// 5x5 grid of sources with spacing R centred on the origin; targets at the
/// centres of distinct grid cells (16 available), chosen by seed.
Task make_grid_task(std::size_t num_target, double spacing, double sigma, std::uint64_t seed);

Task make_task(const TaskConfig& config);

/// n i.i.d. Gaussian draws, [n x 2]. Deterministic per (dist, n, seed).
grad::Tensor sample_class(const ClassDistribution& dist, std::size_t n, std::uint64_t seed);

/// Uniform subset without replacement per class, original order preserved.
std::vector<grad::Tensor> subsample_dataset(const std::vector<grad::Tensor>& per_class, std::size_t per_class_count,
                                            std::uint64_t seed);

/// CSV (class_id,x0,x1) at 17 significant digits.
void write_dataset_csv(std::ostream& os, const std::vector<std::size_t>& class_ids,
                       const std::vector<grad::Tensor>& per_class);
/// Inverse of write_dataset_csv: points grouped by class id in file order.
std::vector<std::pair<std::size_t, grad::Tensor>> read_dataset_csv(std::istream& is);

/// splitmix64-style seed mixing.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace cgt::data
