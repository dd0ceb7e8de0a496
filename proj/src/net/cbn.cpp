#include "cgt/net/cbn.hpp"

#include "cgt/errors.hpp"

namespace cgt::net {

CBNLayer CBNLayer::identity(std::string name, std::size_t classes, std::size_t width, double eps) {
  if (!(eps > 0.0)) throw ConfigError("CBNLayer: eps must be positive");
  return CBNLayer{
      .gamma = {name + ".gamma", grad::Tensor(grad::Shape{classes, width}, 1.0)},
      .beta = {name + ".beta", grad::Tensor(grad::Shape{classes, width}, 0.0)},
      .eps = eps,
  };
}

grad::Var cbn_forward(grad::Var features, std::span<const std::size_t> class_ids, const AffineTables& tables,
                      double eps) {
  const grad::Tensor& f = features.value();
  if (f.rank() != 2) throw ShapeError("cbn_forward: features must be [batch x channels]");
  const std::size_t batch = f.rows();
  if (batch < 2) throw ShapeError("cbn_forward: batch of " + std::to_string(batch) + " has undefined moments");
  if (class_ids.size() != batch) {
    throw ShapeError("cbn_forward: " + std::to_string(class_ids.size()) + " class ids for batch of " +
                     std::to_string(batch));
  }
  const std::size_t classes = tables.gamma.value().rows();
  if (tables.gamma.value().cols() != f.cols() || !tables.beta.value().same_shape(tables.gamma.value())) {
    throw ShapeError("cbn_forward: affine tables " + grad::shape_string(tables.gamma.value().shape()) +
                     " do not match features " + grad::shape_string(f.shape()));
  }
  for (std::size_t y : class_ids) {
    if (y >= classes) {
      throw IndexError("cbn_forward: unknown class id " + std::to_string(y) + " (" + std::to_string(classes) +
                       " classes)");
    }
  }

  using namespace grad;
  Var mu = broadcast_rows(mean_rows(features), batch);
  Var sd = broadcast_rows(sqrt(add_scalar(var_rows(features), eps)), batch);
  Var normalized = div(sub(features, mu), sd);
  Var g = gather_rows(tables.gamma, class_ids);
  Var b = gather_rows(tables.beta, class_ids);
  return add(mul(g, normalized), b);
}

}  // namespace cgt::net
