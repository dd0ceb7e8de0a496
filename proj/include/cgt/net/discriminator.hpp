#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cgt/grad/tape.hpp"

namespace cgt::net {

struct DiscriminatorSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden = {64, 64};  // last entry is the feature dim
  std::size_t num_classes = 8;
  double leaky_slope = 0.2;

  std::size_t feature_dim() const { return hidden.back(); }
  void validate() const;
};

/// Projection discriminator: score = psi(phi(x)) + <embed[y], phi(x)>.
struct Discriminator {
  DiscriminatorSpec spec;
  std::vector<grad::Parameter> weights;  // [in x out]
  std::vector<grad::Parameter> biases;   // [out]
  grad::Parameter head_weight;           // [feature x 1]
  grad::Parameter head_bias;             // [1]
  grad::Parameter embedding;             // [classes x feature]

  static Discriminator init(const DiscriminatorSpec& spec, std::mt19937_64& rng);

  std::size_t num_classes() const noexcept { return embedding.value.rows(); }

  /// Appends `count` class embeddings drawn from N(0, s^2), where s is the
  /// mean per-row standard deviation of the existing embeddings.
  void extend_classes(std::size_t count, std::mt19937_64& rng);

  std::vector<grad::Parameter*> parameters();
};

/// Last feature layer phi(x), [batch x feature].
grad::Var discriminator_features(Discriminator& d, grad::Tape& tape, grad::Var x, bool track = true);

/// Scores [batch].
grad::Var discriminator_forward(Discriminator& d, grad::Tape& tape, grad::Var x, std::span<const std::size_t> class_ids,
                                bool track = true);

/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake))
grad::Var hinge_d_loss(grad::Var real_scores, grad::Var fake_scores);
/// -mean(fake)
grad::Var hinge_g_loss(grad::Var fake_scores);

}  // namespace cgt::net
