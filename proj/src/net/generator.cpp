#include "cgt/net/generator.hpp"

#include <cmath>
#include <string>

#include "cgt/errors.hpp"

namespace cgt::net {

void GeneratorSpec::validate() const {
  if (hidden.empty()) throw ConfigError("generator needs at least one hidden layer");
  if (latent_dim == 0 || output_dim == 0 || num_classes == 0) throw ConfigError("generator dims must be >= 1");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("generator hidden widths must be >= 1");
  }
  if (!(eps > 0.0)) throw ConfigError("generator eps must be positive");
  if (!(output_scale > 0.0)) throw ConfigError("generator output_scale must be positive");
}

grad::Tensor gaussian_tensor(grad::Shape shape, double stddev, std::mt19937_64& rng) {
  grad::Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Generator Generator::init(const GeneratorSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Generator g;
  g.spec = spec;
  std::size_t in = spec.latent_dim;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    const std::size_t out = spec.hidden[l];
    g.weights.push_back({"gen.w" + std::to_string(l),
                         gaussian_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)});
    g.bank.push_back(CBNLayer::identity("gen.cbn" + std::to_string(l), spec.num_classes, out, spec.eps));
    in = out;
  }
  g.out_weight = {"gen.out.w", gaussian_tensor({in, spec.output_dim}, 1.0 / std::sqrt(static_cast<double>(in)), rng)};
  g.out_bias = {"gen.out.b", grad::Tensor(grad::Shape{spec.output_dim})};
  return g;
}

std::vector<grad::Parameter*> Generator::filter_parameters() {
  std::vector<grad::Parameter*> out;
  for (auto& w : weights) out.push_back(&w);
  out.push_back(&out_weight);
  out.push_back(&out_bias);
  return out;
}

std::vector<grad::Parameter*> Generator::bank_parameters() {
  std::vector<grad::Parameter*> out;
  for (auto& layer : bank) {
    out.push_back(&layer.gamma);
    out.push_back(&layer.beta);
  }
  return out;
}

std::size_t BankResolver::num_classes() const { return bank_.empty() ? 0 : bank_.front().num_classes(); }

AffineTables BankResolver::tables(grad::Tape& tape, std::size_t layer) {
  CBNLayer& l = bank_.at(layer);
  if (trainable_) return {tape.param(l.gamma), tape.param(l.beta)};
  return {tape.constant(l.gamma.value), tape.constant(l.beta.value)};
}

grad::Var generator_forward(Generator& g, grad::Tape& tape, grad::Var z, std::span<const std::size_t> class_ids,
                            ClassResolver& resolver, bool track_filters) {
  using namespace grad;
  if (z.value().rank() != 2 || z.value().cols() != g.spec.latent_dim) {
    throw ShapeError("generator_forward: latent batch " + shape_string(z.value().shape()) + " does not match latent_dim " +
                     std::to_string(g.spec.latent_dim));
  }
  auto weight = [&](Parameter& p) { return track_filters ? tape.param(p) : tape.constant(p.value); };

  Var h = z;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    h = matmul(h, weight(g.weights[l]));
    h = cbn_forward(h, class_ids, resolver.tables(tape, l), g.bank[l].eps);
    h = leaky_relu(h, g.spec.leaky_slope);
  }
  const std::size_t batch = z.value().rows();
  h = add(matmul(h, weight(g.out_weight)), broadcast_rows(weight(g.out_bias), batch));
  return scale(tanh(h), g.spec.output_scale);
}

grad::Tensor generate(Generator& g, const grad::Tensor& z, std::span<const std::size_t> class_ids,
                      ClassResolver& resolver) {
  grad::Tape tape(/*recording=*/false);
  grad::Var out = generator_forward(g, tape, tape.constant(z), class_ids, resolver, false);
  return out.value();
}

}  // namespace cgt::net
