// Acceptance run: one PASS/FAIL line per criterion.
//
//   cgt_acceptance [--out DIR] [--jobs N] [--only 1,5,6] [--results FILE]
//
// Experiments (criteria 3, 5, 6, 7, 9, 10) write their run directories under
// DIR so they can be inspected or re-reported with `cgt report`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../common/gradcheck.hpp"
#include "CLI11.hpp"
#include "cgt/cli/experiment.hpp"
#include "cgt/cli/report.hpp"
#include "cgt/metrics/metrics.hpp"
#include "cgt/net/cbn.hpp"

using namespace cgt;
using grad::Tensor;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return kInf;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string show(double v) { return std::isinf(v) ? "none" : fmt("%.6g", v); }

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& diff) {
  std::set<std::string> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.insert(fs::relative(e.path(), a).string());
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.insert(fs::relative(e.path(), b).string());
  if (fa != fb) {
    diff = "file sets differ";
    return false;
  }
  for (const auto& f : fa) {
    if (slurp(a / f) != slurp(b / f)) {
      diff = f;
      return false;
    }
  }
  return true;
}

// Shared state for the experiment criteria.
struct Lab {
  fs::path out;
  std::size_t jobs = 1;
  cli::ExperimentConfig cfg;  // default task, 5 seeds, budget 50

  std::optional<train::Model> pretrained;
  std::string pretrained_path;
  std::optional<std::vector<cli::CellResult>> compare;
  std::optional<std::vector<cli::CellResult>> ablate;

  Lab(fs::path o, std::size_t j) : out(std::move(o)), jobs(j) {
    cfg.budgets = {cfg.task.target_budget};
    cfg.out_dir = out.string();
  }

  const train::Model& pre() {
    if (!pretrained) {
      auto [m, p] = cli::obtain_pretrained(cfg, out / "main");
      pretrained = std::move(m);
      pretrained_path = p;
    }
    return *pretrained;
  }

  const std::vector<cli::CellResult>& compare_runs() {
    if (!compare) compare = cli::run_cells(cfg, cli::compare_cells(cfg), pre(), pretrained_path, out / "main", jobs);
    return *compare;
  }

  const std::vector<cli::CellResult>& ablation_runs() {
    if (!ablate) ablate = cli::run_cells(cfg, cli::ablation_cells(cfg), pre(), pretrained_path, out / "main", jobs);
    return *ablate;
  }
};

std::map<std::string, std::vector<const cli::CellResult*>> by_label(const std::vector<cli::CellResult>& runs) {
  std::map<std::string, std::vector<const cli::CellResult*>> m;
  for (const auto& r : runs) m[r.cell.label].push_back(&r);
  return m;
}

double median_itt(const std::vector<const cli::CellResult*>& runs, double tau) {
  std::vector<double> v;
  for (const auto* r : runs) {
    const auto it = train::iterations_to_threshold(r->record, "frechet", tau);
    v.push_back(it ? static_cast<double>(*it) : kInf);
  }
  return median(v);
}

double median_best(const std::vector<const cli::CellResult*>& runs) {
  std::vector<double> v;
  for (const auto* r : runs) {
    const auto b = r->record.best();
    v.push_back(b ? b->second : kInf);
  }
  return median(v);
}

// 1 -------------------------------------------------------------------------

Verdict gradient_suite() {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  std::string worst_at;
  std::size_t checked = 0, nets = 0;
  for (int mask = 0; mask < 32; ++mask) {
    std::uniform_int_distribution<std::size_t> width(2, 5), nsrc(2, 4), ntgt(1, 2), depth(1, 2);
    net::GeneratorSpec gs;
    gs.latent_dim = 3;
    gs.hidden.assign(depth(rng), 0);
    for (auto& w : gs.hidden) w = width(rng);
    gs.num_classes = nsrc(rng);
    net::Generator g = net::Generator::init(gs, rng);
    for (auto& layer : g.bank) {
      layer.gamma.value = net::gaussian_tensor(layer.gamma.value.shape(), 1.0, rng);
      layer.beta.value = net::gaussian_tensor(layer.beta.value.shape(), 0.5, rng);
    }
    const std::size_t n = gs.num_classes, m = ntgt(rng);

    transfer::TransferConfig tc;
    tc.num_source = n;
    tc.num_target = m;
    tc.prior_tunable = mask & 1;
    tc.residuals_enabled = mask & 2;
    tc.shared_scores = mask & 4;
    tc.use_l1 = mask & 8;
    tc.use_l2 = mask & 16;
    tc.lambda_r = 0.3;
    tc.lambda_s = 0.2;
    transfer::TransferBlock block(g.bank, tc);
    for (grad::Parameter* p : block.trainable_parameters())
      p->value = net::gaussian_tensor(p->value.shape(), 0.7, rng);

    net::DiscriminatorSpec ds;
    ds.hidden = {width(rng), width(rng)};
    ds.num_classes = n + m;
    net::Discriminator d = net::Discriminator::init(ds, rng);

    const std::size_t batch = 6;
    const Tensor z = net::gaussian_tensor({batch, gs.latent_dim}, 1.0, rng);
    const Tensor real = net::gaussian_tensor({batch, 2}, 1.0, rng);
    std::vector<std::size_t> ids(batch);
    for (std::size_t i = 0; i < batch; ++i) ids[i] = i % (n + m);

    auto build = [&](grad::Tape& t) {
      transfer::ExtendedResolver r(g.bank, false, block);
      grad::Var fake = net::generator_forward(g, t, t.constant(z), ids, r);
      grad::Var df = net::discriminator_forward(d, t, fake, ids);
      grad::Var dr = net::discriminator_forward(d, t, t.constant(real), ids);
      grad::Var loss = add(net::hinge_d_loss(dr, df), net::hinge_g_loss(df));
      return add(loss, block.regularization_loss(t));
    };
    std::vector<grad::Parameter*> ps = block.trainable_parameters();
    for (auto* p : g.filter_parameters()) ps.push_back(p);
    for (auto* p : d.parameters()) ps.push_back(p);
    const auto res = testing::check_gradients(build, ps);
    ++nets;
    checked += res.checked;
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      worst_at = "mask " + std::to_string(mask) + " " + res.worst;
    }
  }
  return {worst < 1e-4 && nets >= 20,
          std::to_string(nets) + " random networks, " + std::to_string(checked) + " coordinates, max rel error " +
              fmt("%.2e", worst) + (worst_at.empty() ? "" : " at " + worst_at)};
}

// 2 -------------------------------------------------------------------------

Verdict identity_transfer(Lab& lab) {
  const data::Task task = data::make_task(lab.cfg.task);
  train::TrainConfig tc = lab.cfg.transfer;
  tc.mode = train::Mode::propagate;
  train::Model model = train::prepare_transfer(lab.pre(), task, tc);
  train::Model source = lab.pre();
  const std::size_t n = model.num_source;
  std::mt19937_64 rng(99);
  const Tensor z = net::gaussian_tensor({100, model.generator.spec.latent_dim}, 1.0, rng);
  std::size_t pairs = 0;
  bool ok = true;
  for (std::size_t j = 0; j < model.num_target; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < model.block->num_layers(); ++l) {
        for (auto kind : {transfer::ParamKind::gamma, transfer::ParamKind::beta}) {
          auto& s = model.block->scores(l, kind).value;
          for (std::size_t c = 0; c < n; ++c) s(j, c) = c == k ? 1.0 : 0.0;
        }
      }
      const Tensor copy = model.sample(z, std::vector<std::size_t>(100, n + j));
      const Tensor orig = source.sample(z, std::vector<std::size_t>(100, k));
      ok = ok && grad::bitwise_equal(copy, orig);
      ++pairs;
    }
  }
  return {ok, std::to_string(pairs) + " (new class, source) pairs, 100 z each, bitwise"};
}

// 3 -------------------------------------------------------------------------

Verdict preservation(Lab& lab) {
  train::Model pre = lab.pre();
  const std::size_t n = pre.num_source;
  std::vector<std::size_t> old(n);
  for (std::size_t c = 0; c < n; ++c) old[c] = c;
  const auto reference = train::generate_classes(pre, old, 100, 7);
  std::size_t runs = 0;
  bool ok = true;
  std::string bad;
  auto check = [&](const std::vector<cli::CellResult>& results) {
    for (const auto& r : results) {
      if (r.cell.mode != train::Mode::propagate && r.cell.mode != train::Mode::bsa) continue;
      for (const char* f : {"final.ckpt", "best.ckpt"}) {
        auto m = train::Model::from_checkpoint(train::Checkpoint::load(cli::cell_dir(lab.out / "main", r.cell) / f));
        const auto after = train::generate_classes(m, old, 100, 7);
        for (std::size_t c = 0; c < n; ++c) {
          if (!grad::bitwise_equal(after[c], reference[c])) {
            ok = false;
            bad = r.cell.label + " seed " + std::to_string(r.cell.seed);
          }
        }
        ++runs;
      }
    }
  };
  check(lab.compare_runs());
  check(lab.ablation_runs());
  return {ok && runs > 0, std::to_string(runs) + " propagate/bsa checkpoints, " + std::to_string(n) +
                              " old classes x 100 z" + (ok ? "" : ", first mismatch in " + bad)};
}

// 4 -------------------------------------------------------------------------

Verdict linearity(Lab& lab) {
  bool ok = true;
  std::string detail;
  auto variants = cli::ablation_variants();
  for (const auto& v : variants) {
    std::vector<double> counts;
    double offset = 0;
    for (std::size_t m : {1, 2, 4}) {
      train::TrainConfig tc = lab.cfg.transfer;
      tc.mode = train::Mode::propagate;
      tc.prior_tunable = v.prior_tunable;
      tc.residuals_enabled = v.residuals;
      tc.shared_scores = v.shared_scores;
      tc.use_l1 = v.use_l1;
      tc.use_l2 = v.use_l2;
      transfer::TransferBlock block(lab.pre().generator.bank, tc.transfer_config(lab.pre().num_source, m));
      counts.push_back(static_cast<double>(block.trainable_count()));
      offset = static_cast<double>(block.shared_count());
    }
    // points (1,c1), (2,c2), (4,c4) on c = offset + slope * M
    const double slope = counts[1] - counts[0];
    const bool line = counts[0] == offset + slope && counts[2] == offset + 4 * slope && slope > 0;
    ok = ok && line;
    if (v.label == "full" || !line) {
      detail += v.label + ": " + fmt("%.0f", counts[0]) + "/" + fmt("%.0f", counts[1]) + "/" + fmt("%.0f", counts[2]) +
                " (offset " + fmt("%.0f", offset) + ", slope " + fmt("%.0f", slope) + ") ";
    }
  }
  return {ok, "all 8 variants linear in M in {1,2,4}; " + detail};
}

// 5, 6 ----------------------------------------------------------------------

Verdict convergence_order(Lab& lab) {
  const auto groups = by_label(lab.compare_runs());
  const double p = median_itt(groups.at("propagate"), lab.cfg.tau);
  const double b = median_itt(groups.at("bsa"), lab.cfg.tau);
  const double ratio = std::isinf(p) ? 0.0 : (std::isinf(b) ? kInf : b / p);
  return {p < b && ratio >= 1.5, "median iterations to Frechet <= " + show(lab.cfg.tau) + ": propagate " + show(p) +
                                     ", bsa " + show(b) + ", ratio " + show(ratio) + " (need >= 1.5)"};
}

Verdict quality_order(Lab& lab) {
  const auto groups = by_label(lab.compare_runs());
  const double p = median_best(groups.at("propagate"));
  const double b = median_best(groups.at("bsa"));
  const double t = median_best(groups.at("transfergan"));
  const double s = median_best(groups.at("scratch"));
  const bool ok = p <= b && p < t && p < s && b < t && b < s;
  return {ok, "median best target Frechet: propagate " + show(p) + ", bsa " + show(b) + ", transfergan " + show(t) +
                  ", scratch " + show(s) + " (need propagate <= bsa < transfergan, scratch)"};
}

// 7 -------------------------------------------------------------------------

Verdict ablation_order(Lab& lab) {
  const data::Task task = data::make_task(lab.cfg.task);
  std::vector<std::size_t> targets;
  for (std::size_t j = 0; j < task.targets.size(); ++j) targets.push_back(task.sources.size() + j);
  // Tie tolerance: the largest real-vs-real mean Frechet over 50 oracle draws
  // at the evaluation sample size.
  double floor = 0.0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    const auto rows = train::evaluate_oracle(task, targets, lab.cfg.transfer.eval_samples, 1000 + s);
    double mean = 0.0;
    for (const auto& r : rows) mean += r.frechet;
    floor = std::max(floor, mean / static_cast<double>(rows.size()));
  }
  const auto groups = by_label(lab.ablation_runs());
  double best_other = kInf;
  std::string best_label, all;
  for (const auto& [label, runs] : groups) {
    const double m = median_best(runs);
    all += (all.empty() ? "" : ", ") + label + " " + show(m);
    if (label != "full" && m < best_other) {
      best_other = m;
      best_label = label;
    }
  }
  const double full = median_best(groups.at("full"));
  return {full <= best_other + floor, "full " + show(full) + " vs best other " + best_label + " " + show(best_other) +
                                          " (tie tolerance " + fmt("%.2e", floor) + "); medians: " + all};
}

// 8 -------------------------------------------------------------------------

Verdict metric_examples() {
  std::vector<std::string> failed;
  auto expect = [&](bool c, const char* what) {
    if (!c) failed.push_back(what);
  };
  using metrics::GaussianFit;
  const data::Mat2 eye{{{1, 0}, {0, 1}}};
  const auto two = metrics::fit_gaussian(Tensor::matrix({{0, 0}, {2, 0}}));
  expect(two.mean == data::Vec2{1, 0} && two.covariance == data::Mat2{{{2, 0}, {0, 0}}}, "two-point fit");
  expect(metrics::fit_gaussian(Tensor::matrix({{3, 1}, {3, 1}, {3, 1}})).covariance == data::Mat2{}, "identical points fit");
  const data::ClassDistribution known{{-1.0, 2.0}, {{{0.5, 0.2}, {0.2, 0.3}}}};
  const auto big = metrics::fit_gaussian(data::sample_class(known, 10000, 8));
  bool within = true;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) within = within && std::abs(big.covariance[i][j] - known.covariance[i][j]) <= 0.05 * 0.5;
  expect(within, "10k-sample fit within 5%");

  const GaussianFit a{{0.3, -0.7}, {{{0.5, 0.1}, {0.1, 0.2}}}};
  expect(std::abs(metrics::frechet_distance(a, a)) <= 1e-9, "identical fits -> 0");
  expect(std::abs(metrics::frechet_distance({{0, 0}, eye}, {{1, 0}, eye}) - 1.0) <= 1e-12, "mean shift -> 1");
  expect(std::abs(metrics::frechet_distance({{0, 0}, eye}, {{0, 0}, {{{4, 0}, {0, 4}}}}) - 2.0) <= 1e-12,
         "I vs 4I -> 2");

  const data::ClassDistribution unit{{0, 0}, eye};
  const Tensor x = data::sample_class(unit, 200, 1);
  expect(std::abs(metrics::kmmd(x, x)) <= 1e-12, "kmmd(X, X) = 0");
  const double mmd2 = metrics::mmd_squared(Tensor::matrix({{0.0}}), Tensor::matrix({{1.0}}));
  expect(std::abs(mmd2 - (2.0 - 2.0 * std::exp(-0.5))) <= 1e-12 && std::abs(mmd2 - 0.78694) < 1e-5, "1D MMD^2 = 0.78694");
  expect(metrics::kmmd(data::sample_class(unit, 2000, 5), data::sample_class(unit, 2000, 6)) < 0.05,
         "same-Gaussian kmmd < 0.05");

  std::string detail = "fit, Frechet and KMMD examples";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// 9 -------------------------------------------------------------------------

Verdict determinism(Lab& lab) {
  const fs::path root = lab.out / "determinism";
  fs::remove_all(root);
  cli::ExperimentConfig c = lab.cfg;
  c.gen.hidden = {32, 32};
  c.disc.hidden = {32, 32};
  c.pretrain.iterations = 200;
  c.pretrain.eval_every = 100;
  c.transfer.iterations = 150;
  c.transfer.eval_every = 50;
  c.seeds = {1, 2};
  c.budgets = {20, 50};
  c.report_samples = 200;

  std::vector<std::string> failed;
  cli::cmd_pretrain(c, root / "pre_a");
  cli::cmd_pretrain(c, root / "pre_b");
  std::string diff;
  if (!same_tree(root / "pre_a", root / "pre_b", diff)) failed.push_back("pretrain differs: " + diff);

  c.pretrained = fs::absolute(root / "pre_a" / "pretrain" / "best.ckpt").lexically_normal().string();
  for (const char* run : {"a", "b"}) {
    cli::cmd_compare(c, root / run, lab.jobs);
    cli::cmd_report(c, root / run);
  }
  if (!same_tree(root / "a", root / "b", diff)) failed.push_back("compare/report differs: " + diff);

  std::size_t round_trips = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.path().extension() != ".ckpt") continue;
    const auto raw = slurp(e.path());
    const auto model = train::Model::from_checkpoint(train::Checkpoint::load(e.path()));
    const auto again = model.to_checkpoint().to_bytes();
    if (again != raw) failed.push_back("round trip: " + e.path().string());
    ++round_trips;
  }
  std::string detail = "pretrain x2, compare+report x2 (4 modes x 2 budgets x 2 seeds) byte-identical; " +
                       std::to_string(round_trips) + " checkpoint round trips";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

// 10 ------------------------------------------------------------------------

Verdict single_class(Lab& lab) {
  cli::ExperimentConfig c = lab.cfg;
  c.task.num_target = 1;
  c.modes = {train::Mode::bsa, train::Mode::propagate};
  const fs::path dir = lab.out / "single";
  auto [pre, path] = cli::obtain_pretrained(c, dir);
  const auto runs = cli::run_cells(c, cli::compare_cells(c), pre, path, dir, lab.jobs);
  const auto groups = by_label(runs);
  const double p = median_itt(groups.at("propagate"), c.tau);
  const double b = median_itt(groups.at("bsa"), c.tau);
  return {p < b, "M=1, median iterations to Frechet <= " + show(c.tau) + ": propagate " + show(p) + ", bsa " + show(b) +
                     "; median best: propagate " + show(median_best(groups.at("propagate"))) + ", bsa " +
                     show(median_best(groups.at("bsa")))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_out", results;
  std::size_t jobs = 1;
  std::vector<int> only;
  app.add_option("--out", out, "working directory for experiment runs");
  app.add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--results", results, "also write the verdict lines to this file");
  CLI11_PARSE(app, argc, argv);
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  fs::create_directories(out);
  Lab lab(out, jobs);
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria{
      {1, {"gradient suite", [] { return gradient_suite(); }}},
      {2, {"identity transfer", [&] { return identity_transfer(lab); }}},
      {3, {"old-class preservation", [&] { return preservation(lab); }}},
      {4, {"parameter-count linearity", [&] { return linearity(lab); }}},
      {5, {"convergence ordering", [&] { return convergence_order(lab); }}},
      {6, {"quality ordering", [&] { return quality_order(lab); }}},
      {7, {"ablation ordering", [&] { return ablation_order(lab); }}},
      {8, {"metric examples", [] { return metric_examples(); }}},
      {9, {"determinism and persistence", [&] { return determinism(lab); }}},
      {10, {"single-class target", [&] { return single_class(lab); }}},
  };

  std::ofstream file;
  if (!results.empty()) file.open(results, std::ios::trunc);
  int failures = 0;
  for (int id : only) {
    const auto& [name, fn] = criteria.at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[64];
    std::snprintf(line, sizeof line, "%s criterion %d", v.pass ? "PASS" : "FAIL", id);
    const std::string text = std::string(line) + " (" + name + "): " + v.detail + fmt(" [%.0f s]", secs);
    std::printf("%s\n", text.c_str());
    std::fflush(stdout);
    if (file) file << text << '\n' << std::flush;
    failures += v.pass ? 0 : 1;
  }
  return failures ? 1 : 0;
}
