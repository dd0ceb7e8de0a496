#include "cgt/cli/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cgt/cli/report.hpp"
#include "cgt/errors.hpp"

namespace cgt::cli {

namespace fs = std::filesystem;

namespace {

train::TrainConfig base_transfer(const ExperimentConfig& cfg, train::Mode mode, std::uint64_t seed) {
  train::TrainConfig t = cfg.transfer;
  t.phase = train::Phase::transfer;
  t.mode = mode;
  t.seed = seed;
  if (mode != train::Mode::propagate) {
    const train::TrainConfig d;
    t.prior_tunable = d.prior_tunable;
    t.residuals_enabled = d.residuals_enabled;
    t.shared_scores = d.shared_scores;
    t.use_l1 = d.use_l1;
    t.use_l2 = d.use_l2;
  }
  return t;
}

void sort_cells(std::vector<Cell>& cells) {
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.label != b.label) return a.label < b.label;
    if (a.budget != b.budget) return a.budget < b.budget;
    return a.seed < b.seed;
  });
}

void save_result(const train::TrainResult& r, const fs::path& dir) {
  r.final_model.to_checkpoint().save(dir / "final.ckpt");
  r.best_model.to_checkpoint().save(dir / "best.ckpt");
  std::ostringstream os;
  train::write_run_record_csv(os, r.record);
  write_file(dir / "record.csv", os.str());
}

}  // namespace

const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> v{
      {"frozen-prior-no-res", false, false, false, true, true},
      {"frozen-prior-res", false, true, false, true, true},
      {"tunable-prior-no-res", true, false, false, true, true},
      {"shared-scores", true, false, true, true, true},
      {"no-reg", true, true, false, false, false},
      {"no-l1", true, true, false, false, true},
      {"no-l2", true, true, false, true, false},
      {"full", true, true, false, true, true},
  };
  return v;
}

std::vector<Cell> transfer_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (std::uint64_t s : cfg.seeds) {
    const train::Mode m = cfg.transfer.mode;
    cells.push_back({std::string(train::mode_name(m)), m, s, cfg.task.target_budget, base_transfer(cfg, m, s)});
  }
  sort_cells(cells);
  return cells;
}

std::vector<Cell> ablation_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const auto& v : ablation_variants()) {
    for (std::uint64_t s : cfg.seeds) {
      train::TrainConfig t = base_transfer(cfg, train::Mode::propagate, s);
      t.prior_tunable = v.prior_tunable;
      t.residuals_enabled = v.residuals;
      t.shared_scores = v.shared_scores;
      t.use_l1 = v.use_l1;
      t.use_l2 = v.use_l2;
      cells.push_back({v.label, train::Mode::propagate, s, cfg.task.target_budget, t});
    }
  }
  sort_cells(cells);
  return cells;
}

std::vector<Cell> compare_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (train::Mode m : cfg.modes) {
    if (m == train::Mode::pretrained) throw ConfigError("experiment.modes cannot contain 'pretrained'");
    for (std::size_t b : cfg.budgets) {
      for (std::uint64_t s : cfg.seeds) cells.push_back({std::string(train::mode_name(m)), m, s, b, base_transfer(cfg, m, s)});
    }
  }
  sort_cells(cells);
  return cells;
}

fs::path cell_dir(const fs::path& out, const Cell& cell) {
  return out / "runs" / cell.label / ("b" + std::to_string(cell.budget)) / ("seed" + std::to_string(cell.seed));
}

ExperimentConfig cell_config(const ExperimentConfig& cfg, const Cell& cell, const std::string& pretrained_path) {
  ExperimentConfig c = cfg;
  c.task.target_budget = cell.budget;
  c.transfer = cell.config;
  c.pretrained = pretrained_path;
  c.seeds = {cell.seed};
  c.modes = {cell.mode};
  c.budgets = {cell.budget};
  c.label = cell.label;
  return c;
}

Cell cell_from_config(const ExperimentConfig& cfg) {
  if (cfg.seeds.size() != 1) throw FormatError("cell config must name exactly one seed");
  Cell c;
  c.mode = cfg.transfer.mode;
  c.label = cfg.label.empty() ? std::string(train::mode_name(c.mode)) : cfg.label;
  c.seed = cfg.seeds.front();
  c.budget = cfg.task.target_budget;
  c.config = cfg.transfer;
  c.config.seed = c.seed;
  return c;
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << contents;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void echo_config(const ExperimentConfig& cfg, const fs::path& dir) { write_file(dir / "config.ini", cfg.to_text()); }

train::Model load_model(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " checkpoint path is not set");
  if (!fs::exists(path)) throw MissingCheckpoint(std::string(what) + " checkpoint not found: " + path);
  return train::Model::from_checkpoint(train::Checkpoint::load(path));
}

std::pair<train::Model, std::string> obtain_pretrained(const ExperimentConfig& cfg, const fs::path& out) {
  if (!cfg.pretrained.empty()) return {load_model(cfg.pretrained, "pretrained"), cfg.pretrained};
  cmd_pretrain(cfg, out);
  const std::string path = fs::absolute(out / "pretrain" / "best.ckpt").lexically_normal().string();
  return {load_model(path, "pretrained"), path};
}

std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells,
                                  const train::Model& pretrained, const std::string& pretrained_path,
                                  const fs::path& out, std::size_t jobs, bool quiet) {
  std::vector<CellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex log_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      if (failed) break;
      const Cell& cell = cells[i];
      try {
        const ExperimentConfig ccfg = cell_config(cfg, cell, pretrained_path);
        cell.config.validate();
        const data::Task task = data::make_task(ccfg.task);
        const fs::path dir = cell_dir(out, cell);
        fs::create_directories(dir);
        echo_config(ccfg, dir);
        auto r = train::transfer_train(pretrained, task, cell.config);
        save_result(r, dir);
        results[i] = {cell, std::move(r.record)};
        if (!quiet) {
          const auto best = results[i].record.best();
          std::lock_guard lock(log_mutex);
          if (best) {
            std::fprintf(stderr, "[%s b%zu seed%llu] best frechet %.4f at %llu\n", cell.label.c_str(), cell.budget,
                         static_cast<unsigned long long>(cell.seed), best->second,
                         static_cast<unsigned long long>(best->first));
          } else {
            std::fprintf(stderr, "[%s b%zu seed%llu] no eval points\n", cell.label.c_str(), cell.budget,
                         static_cast<unsigned long long>(cell.seed));
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

void cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out) {
  const fs::path dir = out / "pretrain";
  fs::create_directories(dir);
  echo_config(cfg, dir);
  const data::Task task = data::make_task(cfg.task);
  train::TrainConfig t = cfg.pretrain;
  t.phase = train::Phase::pretrain;
  t.mode = train::Mode::pretrained;
  save_result(train::pretrain(task, t, cfg.gen, cfg.disc), dir);
}

void cmd_transfer(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  if (cfg.transfer.mode == train::Mode::pretrained) throw ConfigError("transfer.mode must be a transfer mode");
  const auto cells = transfer_cells(cfg);
  for (const auto& c : cells) c.config.validate();
  echo_config(cfg, out);
  auto [model, path] = obtain_pretrained(cfg, out);
  run_cells(cfg, cells, model, path, out, jobs);
}

void cmd_finetune(const ExperimentConfig& cfg, const fs::path& out) {
  const train::Model input = load_model(cfg.transferred, "transferred");
  const data::Task task = data::make_task(cfg.task);
  echo_config(cfg, out);
  for (std::uint64_t s : cfg.seeds) {
    train::TrainConfig t = cfg.finetune;
    t.phase = train::Phase::finetune;
    t.mode = train::Mode::propagate;
    t.seed = s;
    const fs::path dir = out / "finetune" / ("seed" + std::to_string(s));
    fs::create_directories(dir);
    ExperimentConfig c = cfg;
    c.seeds = {s};
    echo_config(c, dir);
    save_result(train::finetune(input, task, t), dir);
  }
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& out) {
  train::Model model = load_model(cfg.eval_checkpoint, "eval");
  const data::Task task = data::make_task(cfg.task);
  std::vector<train::MetricRow> rows;
  for (std::uint64_t s : cfg.eval_seeds) {
    auto r = train::evaluate(model, task, cfg.eval_samples, s, "eval-seed" + std::to_string(s), 0,
                             cfg.pretrain.k_sigma);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const fs::path dir = out / "eval";
  echo_config(cfg, dir);
  std::ostringstream os;
  train::write_metric_rows_csv(os, rows);
  write_file(dir / "metrics.csv", os.str());
}

void cmd_ablate(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  const auto cells = ablation_cells(cfg);
  echo_config(cfg, out);
  auto [model, path] = obtain_pretrained(cfg, out);
  const auto results = run_cells(cfg, cells, model, path, out, jobs);
  std::ostringstream os;
  write_summary_csv(os, results, cfg.tau);
  write_file(out / "summary.csv", os.str());
}

void cmd_compare(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  const auto cells = compare_cells(cfg);
  for (const auto& c : cells) c.config.validate();
  echo_config(cfg, out);
  auto [model, path] = obtain_pretrained(cfg, out);
  const auto results = run_cells(cfg, cells, model, path, out, jobs);
  std::ostringstream os;
  write_summary_csv(os, results, cfg.tau);
  write_file(out / "summary.csv", os.str());
}

}  // namespace cgt::cli
