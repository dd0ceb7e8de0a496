#include "cgt/grad/finite_difference.hpp"

#include <cmath>

#include "cgt/errors.hpp"

namespace cgt::grad {

namespace {
double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("finite_difference_gradient: objective returned a non-finite value");
  return v;
}
}  // namespace

std::vector<Tensor> finite_difference_gradient(const std::function<double()>& f,
                                               std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_gradient: step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) {
    Tensor g(p->value.shape());
    auto w = p->value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = checked(f());
      w[i] = saved - h;
      const double down = checked(f());
      w[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double finite_difference(const std::function<double(double)>& f, double x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_difference: step must be positive");
  return (checked(f(x + h)) - checked(f(x - h))) / (2.0 * h);
}

}  // namespace cgt::grad
