#include "cgt/grad/adam.hpp"

#include <cmath>

#include "cgt/errors.hpp"

namespace cgt::grad {

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i]->value)) {
      throw ShapeError("adam_step: gradient shape " + shape_string(grads[i].shape()) + " does not match parameter '" +
                       params[i]->name + "' " + shape_string(params[i]->value.shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for parameter '" + params[i]->name + "'");
  }
  if (state.first_moment.empty()) {
    for (Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value.data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    if (m.size() != w.size()) throw ShapeError("adam_step: moment shape mismatch for '" + params[i]->name + "'");
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void adam_step(std::span<Parameter* const> params, const Gradients& grads, AdamState& state, double lr) {
  std::vector<Tensor> g;
  g.reserve(params.size());
  for (Parameter* p : params) g.push_back(grads.of(*p));
  adam_step(params, g, state, lr);
}

}  // namespace cgt::grad
