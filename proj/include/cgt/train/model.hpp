#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cgt/grad/adam.hpp"
#include "cgt/net/discriminator.hpp"
#include "cgt/net/generator.hpp"
#include "cgt/train/checkpoint.hpp"
#include "cgt/transfer/transfer_block.hpp"

namespace cgt::train {

enum class Mode { pretrained, scratch, transfergan, bsa, propagate };
enum class Phase { pretrain, transfer, finetune };

std::string_view mode_name(Mode m) noexcept;
Mode parse_mode(std::string_view s);
std::string_view phase_name(Phase p) noexcept;
Phase parse_phase(std::string_view s);

/// Complete training state: networks, new-class conditioning, optimizer
/// moments and RNG. Serializes to a Checkpoint.
struct Model {
  Mode mode = Mode::pretrained;
  Phase phase = Phase::pretrain;
  std::size_t num_source = 0;
  std::size_t num_target = 0;  // 0 until transferred
  std::uint64_t task_fingerprint = 0;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;

  net::Generator generator;
  net::Discriminator discriminator;
  std::optional<transfer::TransferBlock> block;  // propagate
  std::optional<transfer::FreshClassRows> fresh;  // bsa, transfergan

  grad::AdamState opt_g;
  grad::AdamState opt_d;
  std::mt19937_64 rng;

  std::size_t total_classes() const noexcept { return num_source + num_target; }
  /// Classes this model was trained to generate (sources, targets, or both).
  std::vector<std::size_t> evaluated_classes() const;
  /// The batch group a class is generated in: all classes of the same phase.
  std::vector<std::size_t> generation_group(std::size_t class_id) const;

  /// Generator-side parameters updated in the current phase.
  std::vector<grad::Parameter*> generator_trainables();
  std::vector<grad::Parameter*> discriminator_trainables();
  bool filters_trainable() const;
  bool bank_trainable() const;

  /// Runs `fn(resolver)` with the conditioning appropriate to the mode.
  template <typename F>
  decltype(auto) with_resolver(F&& fn) {
    if (block) {
      transfer::ExtendedResolver r(generator.bank, false, *block);
      return fn(static_cast<net::ClassResolver&>(r));
    }
    if (fresh) {
      transfer::ExtendedResolver r(generator.bank, bank_trainable(), *fresh);
      return fn(static_cast<net::ClassResolver&>(r));
    }
    net::BankResolver r(generator.bank, bank_trainable());
    return fn(static_cast<net::ClassResolver&>(r));
  }

  /// Untaped samples for (z, class ids).
  grad::Tensor sample(const grad::Tensor& z, const std::vector<std::size_t>& class_ids);

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ck);
};

/// Fresh source-class model for pretraining.
Model init_model(const net::GeneratorSpec& gspec, const net::DiscriminatorSpec& dspec, std::uint64_t task_fingerprint,
                 std::uint64_t seed);

}  // namespace cgt::train
