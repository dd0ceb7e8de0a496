#pragma once

#include <cstddef>
#include <vector>

#include "cgt/data/synth.hpp"
#include "cgt/grad/tensor.hpp"

namespace cgt::metrics {

/// Sample mean and unbiased (n - 1) covariance of 2D points.
struct GaussianFit {
  data::Vec2 mean{};
  data::Mat2 covariance{};
};

GaussianFit fit_gaussian(const grad::Tensor& points);

/// Symmetric 2x2 eigen-decomposition; eigenvalues ascending, eigenvectors as columns.
struct SymmetricEigen2 {
  std::array<double, 2> values{};
  data::Mat2 vectors{};
};
SymmetricEigen2 eigen_symmetric(const data::Mat2& m);

/// Principal square root of a symmetric PSD matrix. Eigenvalues in
/// [-1e-9, 0) are clamped to 0; anything more negative is rejected.
data::Mat2 sqrt_psd(const data::Mat2& m);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

/// sqrt of the biased MMD^2 estimate with k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
/// Points are [n x d] with matching d.
double kmmd(const grad::Tensor& x, const grad::Tensor& y, double sigma = 1.0);
/// The biased MMD^2 estimate itself (clamped at 0 below -1e-12).
double mmd_squared(const grad::Tensor& x, const grad::Tensor& y, double sigma = 1.0);

struct ModeMetrics {
  double coverage = 0.0;  // fraction of modes with a point within k_sigma * scale
  double quality = 0.0;   // fraction of points within k_sigma * scale of their nearest mode
};

ModeMetrics mode_metrics(const grad::Tensor& points, const std::vector<data::ClassDistribution>& modes,
                         double k_sigma = 3.0);

}  // namespace cgt::metrics
