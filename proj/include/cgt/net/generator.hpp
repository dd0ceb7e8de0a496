#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cgt/grad/tape.hpp"
#include "cgt/net/cbn.hpp"

namespace cgt::net {

struct GeneratorSpec {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> hidden = {64, 64, 64};
  std::size_t output_dim = 2;
  std::size_t num_classes = 8;
  double eps = 1e-5;
  double leaky_slope = 0.2;
  // tanh output is stretched to [-output_scale, output_scale].
  double output_scale = 3.0;

  void validate() const;
};

/// MLP generator: L x (affine -> CBN -> leaky relu), then affine -> tanh.
/// Hidden affines carry no bias since CBN re-centers them.
struct Generator {
  GeneratorSpec spec;
  std::vector<grad::Parameter> weights;  // [in x out] per hidden layer
  std::vector<CBNLayer> bank;            // pretrained per-class rows
  grad::Parameter out_weight;            // [hidden.back() x output_dim]
  grad::Parameter out_bias;              // [output_dim]

  static Generator init(const GeneratorSpec& spec, std::mt19937_64& rng);

  std::size_t num_layers() const noexcept { return spec.hidden.size(); }

  /// Affine weights and output head (everything except the CBN bank).
  std::vector<grad::Parameter*> filter_parameters();
  std::vector<grad::Parameter*> bank_parameters();
};

/// Resolves classes directly from a generator's own bank.
class BankResolver final : public ClassResolver {
 public:
  BankResolver(std::vector<CBNLayer>& bank, bool trainable) : bank_(bank), trainable_(trainable) {}
  std::size_t num_classes() const override;
  AffineTables tables(grad::Tape& tape, std::size_t layer) override;

 private:
  std::vector<CBNLayer>& bank_;
  bool trainable_;
};

/// Forward pass. With `track_filters` false the affine weights enter the tape
/// as constants and receive no gradient.
grad::Var generator_forward(Generator& g, grad::Tape& tape, grad::Var z, std::span<const std::size_t> class_ids,
                            ClassResolver& resolver, bool track_filters = true);

/// Untaped convenience: samples for (z, class_ids) as a [batch x output_dim] tensor.
grad::Tensor generate(Generator& g, const grad::Tensor& z, std::span<const std::size_t> class_ids,
                      ClassResolver& resolver);

grad::Tensor gaussian_tensor(grad::Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace cgt::net
