#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cgt/data/synth.hpp"
#include "cgt/net/discriminator.hpp"
#include "cgt/net/generator.hpp"
#include "cgt/train/trainer.hpp"

namespace cgt::cli {

/// Everything a subcommand needs. Parsed from a sectioned key = value file;
/// see docs/config.md for the schema.
struct ExperimentConfig {
  data::TaskConfig task;
  net::GeneratorSpec gen;
  net::DiscriminatorSpec disc;

  train::TrainConfig pretrain;
  train::TrainConfig transfer;
  train::TrainConfig finetune;

  std::string pretrained;   // checkpoint for transfer/ablate/compare; empty = pretrain first
  std::string transferred;  // checkpoint for finetune
  std::string eval_checkpoint;

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<train::Mode> modes{train::Mode::scratch, train::Mode::transfergan, train::Mode::bsa,
                                 train::Mode::propagate};
  std::vector<std::size_t> budgets{200, 50};

  std::size_t eval_samples = 500;
  std::vector<std::uint64_t> eval_seeds{1};
  double tau = 0.15;

  std::string report_input;  // empty = the output directory
  std::size_t report_samples = 500;
  std::size_t top_k = 3;

  std::string out_dir = "cgt_out";
  std::string label;  // set on per-cell echoes

  ExperimentConfig();

  /// Checks cross-field invariants; throws ConfigError.
  void validate() const;
  /// Canonical text listing every key, re-parseable to an equal config.
  std::string to_text() const;
  /// FNV-1a of to_text().
  std::uint64_t hash() const;
  /// Applies --seed: replaces every seed list and the pretrain seed.
  void override_seed(std::uint64_t seed);
};

/// Parses `text`. Unknown sections, unknown keys, duplicates and malformed
/// values are ConfigErrors naming `source` and the line. Relative paths are
/// resolved against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>",
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a(const std::string& text);

}  // namespace cgt::cli
