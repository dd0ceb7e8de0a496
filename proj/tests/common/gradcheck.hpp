#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cgt/grad/finite_difference.hpp"
#include "cgt/grad/tape.hpp"

namespace cgt::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<param>[i]" of the worst coordinate
};

/// Compares tape gradients of `build(tape)` against central differences on
/// every coordinate with |grad| > floor.
inline GradCheck check_gradients(const std::function<grad::Var(grad::Tape&)>& build,
                                 std::vector<grad::Parameter*> params, double floor = 1e-6) {
  grad::Tape tape;
  grad::Var loss = build(tape);
  const grad::Gradients analytic = tape.backward(loss, params);
  const auto numeric = grad::finite_difference_gradient(
      [&] {
        grad::Tape t(false);
        return build(t).value().item();
      },
      params);
  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto a = analytic.of(*params[k]).data();
    const auto n = numeric[k].data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::max(std::abs(a[i]), std::abs(n[i])) <= floor) continue;
      const double rel = std::abs(a[i] - n[i]) / std::max(std::abs(a[i]), std::abs(n[i]));
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = params[k]->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace cgt::testing
