#include "cgt/net/discriminator.hpp"

#include <cmath>
#include <string>

#include "cgt/errors.hpp"
#include "cgt/net/generator.hpp"

namespace cgt::net {

void DiscriminatorSpec::validate() const {
  if (hidden.empty()) throw ConfigError("discriminator needs at least one hidden layer");
  if (input_dim == 0 || num_classes == 0) throw ConfigError("discriminator dims must be >= 1");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("discriminator hidden widths must be >= 1");
  }
}

Discriminator Discriminator::init(const DiscriminatorSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Discriminator d;
  d.spec = spec;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::size_t out = spec.hidden[l];
    d.weights.push_back({"disc.w" + std::to_string(l),
                         gaussian_tensor({in, out}, std::sqrt(2.0 / static_cast<double>(in)), rng)});
    d.biases.push_back({"disc.b" + std::to_string(l), grad::Tensor(grad::Shape{out})});
    in = out;
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  d.head_weight = {"disc.head.w", gaussian_tensor({in, 1}, s, rng)};
  d.head_bias = {"disc.head.b", grad::Tensor(grad::Shape{1})};
  d.embedding = {"disc.embed", gaussian_tensor({spec.num_classes, in}, s, rng)};
  return d;
}

void Discriminator::extend_classes(std::size_t count, std::mt19937_64& rng) {
  const grad::Tensor& e = embedding.value;
  const std::size_t rows = e.rows(), cols = e.cols();
  double mean_std = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (double v : e.row(r)) m += v;
    m /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : e.row(r)) var += (v - m) * (v - m);
    mean_std += std::sqrt(var / static_cast<double>(cols));
  }
  mean_std = rows ? mean_std / static_cast<double>(rows) : 1.0;
  if (!(mean_std > 0.0)) mean_std = 1.0 / std::sqrt(static_cast<double>(cols));

  grad::Tensor fresh = gaussian_tensor({count, cols}, mean_std, rng);
  std::vector<double> data(e.storage());
  data.insert(data.end(), fresh.storage().begin(), fresh.storage().end());
  embedding.value = grad::Tensor(grad::Shape{rows + count, cols}, std::move(data));
  spec.num_classes = rows + count;
}

std::vector<grad::Parameter*> Discriminator::parameters() {
  std::vector<grad::Parameter*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  out.push_back(&embedding);
  return out;
}

grad::Var discriminator_features(Discriminator& d, grad::Tape& tape, grad::Var x, bool track) {
  using namespace grad;
  if (x.value().rank() != 2 || x.value().cols() != d.spec.input_dim) {
    throw ShapeError("discriminator: input " + shape_string(x.value().shape()) + " does not match input_dim " +
                     std::to_string(d.spec.input_dim));
  }
  auto p = [&](Parameter& q) { return track ? tape.param(q) : tape.constant(q.value); };
  const std::size_t batch = x.value().rows();
  Var h = x;
  for (std::size_t l = 0; l < d.weights.size(); ++l) {
    h = add(matmul(h, p(d.weights[l])), broadcast_rows(p(d.biases[l]), batch));
    h = leaky_relu(h, d.spec.leaky_slope);
  }
  return h;
}

grad::Var discriminator_forward(Discriminator& d, grad::Tape& tape, grad::Var x, std::span<const std::size_t> class_ids,
                                bool track) {
  using namespace grad;
  const std::size_t batch = x.value().rows();
  if (class_ids.size() != batch) throw ShapeError("discriminator: class id count does not match batch");
  for (std::size_t y : class_ids) {
    if (y >= d.num_classes()) {
      throw IndexError("discriminator: unknown class id " + std::to_string(y) + " (" +
                       std::to_string(d.num_classes()) + " embeddings)");
    }
  }
  auto p = [&](Parameter& q) { return track ? tape.param(q) : tape.constant(q.value); };
  Var phi = discriminator_features(d, tape, x, track);
  Var unconditional = row_sum(add(matmul(phi, p(d.head_weight)), broadcast_rows(p(d.head_bias), batch)));
  Var projection = row_sum(mul(gather_rows(p(d.embedding), class_ids), phi));
  return add(unconditional, projection);
}

grad::Var hinge_d_loss(grad::Var real_scores, grad::Var fake_scores) {
  using namespace grad;
  if (real_scores.value().size() == 0 || fake_scores.value().size() == 0) {
    throw ShapeError("hinge_d_loss: empty score list");
  }
  Var real_term = mean(relu(add_scalar(scale(real_scores, -1.0), 1.0)));
  Var fake_term = mean(relu(add_scalar(fake_scores, 1.0)));
  return add(real_term, fake_term);
}

grad::Var hinge_g_loss(grad::Var fake_scores) {
  using namespace grad;
  if (fake_scores.value().size() == 0) throw ShapeError("hinge_g_loss: empty score list");
  return scale(mean(fake_scores), -1.0);
}

}  // namespace cgt::net
