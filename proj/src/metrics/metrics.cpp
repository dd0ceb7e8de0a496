#include "cgt/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgt/errors.hpp"

namespace cgt::metrics {

namespace {

constexpr double kClamp = 1e-9;

data::Mat2 mul(const data::Mat2& a, const data::Mat2& b) {
  data::Mat2 out{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  }
  return out;
}

void require_2d(const grad::Tensor& points, const char* what) {
  if (points.rank() != 2 || points.cols() != 2) {
    throw ShapeError(std::string(what) + ": expected [n x 2] points, got " + grad::shape_string(points.shape()));
  }
}

void validate_fit(const GaussianFit& f) {
  if (f.covariance[0][1] != f.covariance[1][0]) {
    // Tolerate rounding asymmetry only.
    if (std::fabs(f.covariance[0][1] - f.covariance[1][0]) > 1e-12) {
      throw DomainError("frechet_distance: covariance is not symmetric");
    }
  }
}

}  // namespace

GaussianFit fit_gaussian(const grad::Tensor& points) {
  require_2d(points, "fit_gaussian");
  const std::size_t n = points.rows();
  if (n < 2) throw ShapeError("fit_gaussian: need at least 2 points, got " + std::to_string(n));
  GaussianFit fit;
  for (std::size_t i = 0; i < n; ++i) {
    fit.mean[0] += points(i, 0);
    fit.mean[1] += points(i, 1);
  }
  fit.mean[0] /= static_cast<double>(n);
  fit.mean[1] /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = points(i, 0) - fit.mean[0];
    const double dy = points(i, 1) - fit.mean[1];
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double denom = static_cast<double>(n - 1);
  fit.covariance = {{{sxx / denom, sxy / denom}, {sxy / denom, syy / denom}}};
  return fit;
}

SymmetricEigen2 eigen_symmetric(const data::Mat2& m) {
  const double a = m[0][0], b = 0.5 * (m[0][1] + m[1][0]), d = m[1][1];
  SymmetricEigen2 e;
  if (b == 0.0) {
    if (a <= d) {
      e.values = {a, d};
      e.vectors = {{{1.0, 0.0}, {0.0, 1.0}}};
    } else {
      e.values = {d, a};
      e.vectors = {{{0.0, 1.0}, {1.0, 0.0}}};
    }
    return e;
  }
  const double mid = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  e.values = {mid - rad, mid + rad};
  for (int k = 0; k < 2; ++k) {
    // (A - lambda I) v = 0 -> v = (b, lambda - a), or (lambda - d, b); pick the better conditioned.
    double vx = b, vy = e.values[k] - a;
    const double ux = e.values[k] - d, uy = b;
    if (std::hypot(ux, uy) > std::hypot(vx, vy)) {
      vx = ux;
      vy = uy;
    }
    const double norm = std::hypot(vx, vy);
    e.vectors[0][k] = vx / norm;
    e.vectors[1][k] = vy / norm;
  }
  return e;
}

data::Mat2 sqrt_psd(const data::Mat2& m) {
  const SymmetricEigen2 e = eigen_symmetric(m);
  std::array<double, 2> roots{};
  for (int k = 0; k < 2; ++k) {
    double v = e.values[k];
    if (v < -kClamp) throw DomainError("sqrt_psd: eigenvalue " + std::to_string(v) + " is not PSD");
    roots[k] = std::sqrt(std::max(0.0, v));
  }
  data::Mat2 out{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out[i][j] = e.vectors[i][0] * roots[0] * e.vectors[j][0] + e.vectors[i][1] * roots[1] * e.vectors[j][1];
    }
  }
  return out;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  validate_fit(a);
  validate_fit(b);
  const double dx = a.mean[0] - b.mean[0];
  const double dy = a.mean[1] - b.mean[1];
  const data::Mat2 root_a = sqrt_psd(a.covariance);
  sqrt_psd(b.covariance);  // validates b
  data::Mat2 inner = mul(mul(root_a, b.covariance), root_a);
  const double off = 0.5 * (inner[0][1] + inner[1][0]);
  inner[0][1] = inner[1][0] = off;
  const data::Mat2 cross = sqrt_psd(inner);
  const double trace = a.covariance[0][0] + a.covariance[1][1] + b.covariance[0][0] + b.covariance[1][1] -
                       2.0 * (cross[0][0] + cross[1][1]);
  return std::max(0.0, dx * dx + dy * dy + trace);
}

double mmd_squared(const grad::Tensor& x, const grad::Tensor& y, double sigma) {
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
    throw ShapeError("kmmd: point sets must be [n x d] with equal d");
  }
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  if (n == 0 || m == 0) throw ShapeError("kmmd: empty point set");
  if (!(sigma > 0.0)) throw ConfigError("kmmd: sigma must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);

  auto mean_kernel = [&](const grad::Tensor& p, const grad::Tensor& q) {
    const double* pp = p.data().data();
    const double* qq = q.data().data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < q.rows(); ++j) {
        double dist = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = pp[i * d + k] - qq[j * d + k];
          dist += diff * diff;
        }
        row += std::exp(-dist * inv);
      }
      total += row;
    }
    return total / (static_cast<double>(p.rows()) * static_cast<double>(q.rows()));
  };
  const double value = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
  if (value < -1e-12) throw NumericError("kmmd: negative MMD^2 estimate " + std::to_string(value));
  return std::max(0.0, value);
}

double kmmd(const grad::Tensor& x, const grad::Tensor& y, double sigma) { return std::sqrt(mmd_squared(x, y, sigma)); }

ModeMetrics mode_metrics(const grad::Tensor& points, const std::vector<data::ClassDistribution>& modes, double k_sigma) {
  require_2d(points, "mode_metrics");
  if (points.rows() == 0 || modes.empty()) throw ShapeError("mode_metrics: empty input");
  std::vector<bool> covered(modes.size(), false);
  std::size_t good = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double dist = std::hypot(points(i, 0) - modes[m].center[0], points(i, 1) - modes[m].center[1]);
      if (dist <= k_sigma * modes[m].scale()) covered[m] = true;
      if (dist < best) {
        best = dist;
        nearest = m;
      }
    }
    if (best <= k_sigma * modes[nearest].scale()) ++good;
  }
  ModeMetrics out;
  out.coverage = static_cast<double>(std::count(covered.begin(), covered.end(), true)) /
                 static_cast<double>(modes.size());
  out.quality = static_cast<double>(good) / static_cast<double>(points.rows());
  return out;
}

}  // namespace cgt::metrics
