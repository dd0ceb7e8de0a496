// cgt: pretrain, transfer, finetune, eval, ablate, compare, report.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "cgt/cli/config.hpp"
#include "cgt/cli/experiment.hpp"
#include "cgt/cli/report.hpp"
#include "cgt/errors.hpp"

namespace fs = std::filesystem;
using namespace cgt;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kMissingCheckpoint = 3, kTrainingAbort = 4 };

fs::path output_root(const cli::ExperimentConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  fs::path dir = cfg.out_dir;
  if (const char* root = std::getenv("CGT_OUT_ROOT"); root && *root && dir.is_relative()) dir = fs::path(root) / dir;
  return dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional-GAN class transfer lab"};
  app.require_subcommand(1, 1);

  std::string config_path, out_flag;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--out", out_flag, "output directory (overrides [output] dir and CGT_OUT_ROOT)");
  auto* seed_opt = app.add_option("--seed", seed, "run only this seed");
  app.add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
  app.fallthrough();

  for (const char* name : {"pretrain", "transfer", "finetune", "eval", "ablate", "compare", "report"})
    app.add_subcommand(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    cli::ExperimentConfig cfg = config_path.empty() ? cli::ExperimentConfig{} : cli::load_config(config_path);
    if (*seed_opt) cfg.override_seed(seed);
    cfg.validate();
    const fs::path out = output_root(cfg, out_flag);
    fs::create_directories(out);

    if (sub == "pretrain") cli::cmd_pretrain(cfg, out);
    else if (sub == "transfer") cli::cmd_transfer(cfg, out, jobs);
    else if (sub == "finetune") cli::cmd_finetune(cfg, out);
    else if (sub == "eval") cli::cmd_eval(cfg, out);
    else if (sub == "ablate") cli::cmd_ablate(cfg, out, jobs);
    else if (sub == "compare") cli::cmd_compare(cfg, out, jobs);
    else cli::cmd_report(cfg, out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "cgt %s: config error: %s\n", sub.c_str(), e.what());
    return kConfig;
  } catch (const cli::MissingCheckpoint& e) {
    std::fprintf(stderr, "cgt %s: %s\n", sub.c_str(), e.what());
    return kMissingCheckpoint;
  } catch (const train::TrainingAbort& e) {
    std::fprintf(stderr, "cgt %s: %s\n", sub.c_str(), e.what());
    return kTrainingAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cgt %s: error: %s\n", sub.c_str(), e.what());
    return kFailure;
  }
  return kOk;
}
