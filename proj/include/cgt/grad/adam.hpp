#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cgt/grad/tape.hpp"

namespace cgt::grad {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place. Moments are created
/// on the first call; later calls must pass parameters with the same shapes
/// in the same order.
void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads, AdamState& state, double lr);

/// Convenience overload pulling gradients from a backward() result.
void adam_step(std::span<Parameter* const> params, const Gradients& grads, AdamState& state, double lr);

}  // namespace cgt::grad
