#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cgt/grad/tape.hpp"

namespace cgt::grad {

/// Central-difference gradient (f(p+h) - f(p-h)) / 2h for every coordinate of
/// every parameter. Parameters are perturbed in place and restored. Unreliable
/// at kinks (|x| at 0 yields 0).
std::vector<Tensor> finite_difference_gradient(const std::function<double()>& f,
                                               std::span<Parameter* const> params, double h = 1e-5);

/// Scalar convenience for unit checks: derivative of f at x.
double finite_difference(const std::function<double(double)>& f, double x, double h = 1e-5);

}  // namespace cgt::grad
