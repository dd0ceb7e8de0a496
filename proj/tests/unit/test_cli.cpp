#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cgt/cli/config.hpp"
#include "cgt/cli/experiment.hpp"
#include "cgt/cli/report.hpp"
#include "cgt/cli/svg.hpp"
#include "cgt/errors.hpp"

using namespace cgt;
using namespace cgt::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cgt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.ini", "/base");
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c = parse(
      "[model]\ngen_hidden = 16, 16\ndisc_hidden = 16, 16\n"
      "[pretrain]\niterations = 40\nbatch_size = 16\neval_every = 20\neval_samples = 100\n"
      "[transfer]\niterations = 20\nbatch_size = 16\neval_every = 10\neval_samples = 100\n"
      "[experiment]\nseeds = 1\nbudgets = 50\n"
      "[eval]\nn_samples = 100\nseeds = 3, 4\n[report]\nsamples = 100\n");
  c.out_dir = out.string();
  return c;
}

std::vector<std::string> files_in(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("config text round trip") {
  ExperimentConfig c;
  c.seeds = {4, 9};
  c.transfer.use_l1 = false;
  c.gen.hidden = {7, 5};
  c.tau = 0.125;
  c.label = "x";
  const auto back = parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.hash() == c.hash());
  CHECK(ExperimentConfig{}.hash() != c.hash());
}

TEST_CASE("config parsing") {
  const auto c = parse("# comment\n[task]\nnum_target = 1 ; trailing\n\n[transfer]\nmode = bsa\npretrained = ck/p.ckpt\n");
  CHECK(c.task.num_target == 1);
  CHECK(c.transfer.mode == train::Mode::bsa);
  CHECK(c.pretrained == "/base/ck/p.ckpt");

  CHECK_THROWS_WITH_AS(parse("[task]\nradius = 2\nbogus = 1\n"), "test.ini:3: unknown key 'bogus' in [task]", ConfigError);
  CHECK_THROWS_WITH_AS(parse("[nosuch]\n"), "test.ini:1: unknown section [nosuch]", ConfigError);
  CHECK_THROWS_AS(parse("radius = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[task]\nradius = 2\nradius = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[task]\nnum_source = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[task]\nradius = 2x\n"), ConfigError);
  CHECK_THROWS_AS(parse("[transfer]\nresiduals = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse("[transfer]\nmode = nonsense\n"), ConfigError);
  CHECK_THROWS_AS(parse("[eval]\nn_samples = 10\n"), ConfigError);
  CHECK_THROWS_AS(parse("[pretrain]\nbatch_size = 1\n"), ConfigError);
}

TEST_CASE("seed override") {
  ExperimentConfig c;
  c.override_seed(42);
  CHECK(c.seeds == std::vector<std::uint64_t>{42});
  CHECK(c.eval_seeds == std::vector<std::uint64_t>{42});
  CHECK(c.pretrain.seed == 42);
}

TEST_CASE("sweep cells") {
  ExperimentConfig c;
  c.seeds = {2, 1};
  const auto ab = ablation_cells(c);
  CHECK(ab.size() == 16);
  std::set<std::string> labels;
  std::set<std::vector<bool>> flags;
  for (const auto& v : ablation_variants()) {
    labels.insert(v.label);
    flags.insert({v.prior_tunable, v.residuals, v.shared_scores, v.use_l1, v.use_l2});
  }
  CHECK(labels.size() == 8);
  CHECK(flags.size() == 8);
  CHECK(ablation_variants().back().label == "full");

  const auto cmp = compare_cells(c);
  CHECK(cmp.size() == 4 * 2 * 2);
  for (std::size_t i = 1; i < cmp.size(); ++i) {
    const auto& a = cmp[i - 1];
    const auto& b = cmp[i];
    CHECK((a.label < b.label || (a.label == b.label && (a.budget < b.budget || (a.budget == b.budget && a.seed < b.seed)))));
  }
  for (const auto& cell : cmp) {
    CHECK(cell.config.seed == cell.seed);
    CHECK_NOTHROW(cell.config.validate());
  }
}

TEST_CASE("cell config round trip") {
  ExperimentConfig c;
  const auto cell = ablation_cells(c)[3];
  const auto cc = cell_config(c, cell, "/p/best.ckpt");
  const auto back = cell_from_config(parse(cc.to_text()));
  CHECK(back.label == cell.label);
  CHECK(back.seed == cell.seed);
  CHECK(back.budget == cell.budget);
  CHECK(back.config.residuals_enabled == cell.config.residuals_enabled);
  CHECK(back.config.prior_tunable == cell.config.prior_tunable);
}

TEST_CASE("svg canvas") {
  Svg s(0xabcULL);
  s.circle(1, 2, 3, palette_color(0));
  const auto text = s.str();
  CHECK(text.find("width=\"800\" height=\"600\"") != std::string::npos);
  CHECK(text.find("config-hash 0000000000000abc") != std::string::npos);
  std::set<std::string> colors;
  for (std::size_t i = 0; i < 16; ++i) colors.insert(palette_color(i));
  CHECK(colors.size() == 16);
  CHECK(std::string(palette_color(16)) == palette_color(0));
  CHECK(diverging_color(0.0) == "#ffffff");
}

TEST_CASE("eval writes one row per class per eval seed") {
  const auto out = fresh_dir("eval");
  auto cfg = small_config(out);
  cmd_pretrain(cfg, out);
  cfg.eval_checkpoint = (out / "pretrain" / "final.ckpt").string();
  cmd_eval(cfg, out);
  const auto lines = lines_of(slurp(out / "eval" / "metrics.csv"));
  REQUIRE(lines.size() == 1 + 8 * 2);
  CHECK(lines[0] == "run_id,iteration,class_id,frechet,kmmd,coverage,quality");
  CHECK(lines[1].rfind("eval-seed3,", 0) == 0);
  CHECK(lines[9].rfind("eval-seed4,", 0) == 0);
  CHECK(fs::exists(out / "eval" / "config.ini"));
  CHECK(fs::exists(out / "pretrain" / "config.ini"));

  cfg.eval_checkpoint = (out / "missing.ckpt").string();
  CHECK_THROWS_AS(cmd_eval(cfg, out), MissingCheckpoint);
}

TEST_CASE("ablate with one seed ranks eight variants") {
  const auto out = fresh_dir("ablate");
  auto cfg = small_config(out);
  cmd_ablate(cfg, out, 4);
  const auto lines = lines_of(slurp(out / "summary.csv"));
  REQUIRE(lines.size() == 9);
  std::set<std::string> labels;
  double prev = -1.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> f;
    std::istringstream is(lines[i]);
    for (std::string x; std::getline(is, x, ',');) f.push_back(x);
    CHECK(f[1] == std::to_string(i));
    labels.insert(f[2]);
    const double best = std::stod(f[4]);
    CHECK(best >= prev);
    prev = best;
  }
  CHECK(labels.size() == 8);
  for (const auto& cell : ablation_cells(cfg)) {
    const auto dir = cell_dir(out, cell);
    CHECK(fs::exists(dir / "final.ckpt"));
    CHECK(fs::exists(dir / "best.ckpt"));
    CHECK(fs::exists(dir / "record.csv"));
    CHECK(cell_from_config(load_config(dir / "config.ini")).label == cell.label);
  }
}

TEST_CASE("sweeps are identical for any job count") {
  const auto a = fresh_dir("jobs1");
  const auto b = fresh_dir("jobs3");
  auto cfg = small_config(a);
  cfg.modes = {train::Mode::bsa, train::Mode::propagate};
  cmd_compare(cfg, a, 1);
  cfg.pretrained = (a / "pretrain" / "best.ckpt").string();
  const auto cells = compare_cells(cfg);
  const auto model = load_model(cfg.pretrained, "pretrained");
  run_cells(cfg, cells, model, fs::absolute(cfg.pretrained).lexically_normal().string(), b, 3, true);
  for (const auto& cell : cells) {
    for (const char* f : {"final.ckpt", "best.ckpt", "record.csv", "config.ini"})
      CHECK(slurp(cell_dir(a, cell) / f) == slurp(cell_dir(b, cell) / f));
  }
}

TEST_CASE("report") {
  const auto out = fresh_dir("report");
  auto cfg = small_config(out);
  cfg.modes = {train::Mode::bsa, train::Mode::propagate};
  cfg.budgets = {20, 50};
  cmd_compare(cfg, out, 2);
  cmd_report(cfg, out);
  const auto first = files_in(out / "report");
  std::map<std::string, std::string> contents;
  for (const auto& f : first) contents[f] = slurp(out / "report" / f);

  SUBCASE("files") {
    CHECK(contents.count("summary.csv"));
    CHECK(contents.count("convergence.csv"));
    CHECK(contents.count("convergence.svg"));
    CHECK(contents.count("scores_topk.csv"));
    for (std::size_t c = 0; c < 10; ++c) {
      CHECK(contents.count("scatter_bsa_class" + std::to_string(c) + ".svg"));
      CHECK(contents.count("scatter_propagate_class" + std::to_string(c) + ".svg"));
    }
    CHECK(contents.count("heatmap_propagate_class8.svg"));
    CHECK(contents.count("heatmap_propagate_class9.svg"));
    CHECK_FALSE(contents.count("heatmap_bsa_class8.svg"));
    const std::string tag = "config-hash " + [&] {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(cfg.hash()));
      return std::string(buf);
    }();
    for (const auto& [name, text] : contents) {
      if (name.ends_with(".svg")) CHECK(text.find(tag) != std::string::npos);
    }
    CHECK(lines_of(contents["summary.csv"]).size() == 1 + 4);
  }

  SUBCASE("idempotent") {
    cmd_report(cfg, out);
    CHECK(files_in(out / "report") == first);
    for (const auto& f : first) CHECK(slurp(out / "report" / f) == contents[f]);
  }

  SUBCASE("scores_topk agrees with export_scores") {
    std::ostringstream expect;
    expect << "label,budget,seed,layer,param_type,new_class,rank,source_class,score\n";
    for (std::size_t b : {20, 50}) {
      const Cell cell{"propagate", train::Mode::propagate, 1, b, {}};
      const auto m = train::Model::from_checkpoint(train::Checkpoint::load(cell_dir(out, cell) / "best.ckpt"));
      std::ostringstream body;
      transfer::write_scores_csv(body, transfer::export_scores(*m.block, cfg.top_k));
      const auto lines = lines_of(body.str());
      for (std::size_t i = 1; i < lines.size(); ++i) expect << "propagate," << b << ",1," << lines[i] << '\n';
    }
    CHECK(contents["scores_topk.csv"] == expect.str());
  }
}

TEST_CASE("report of untrained runs") {
  const auto out = fresh_dir("report_empty");
  auto cfg = small_config(out);
  cfg.transfer.iterations = 0;
  cmd_transfer(cfg, out, 1);
  cmd_report(cfg, out);
  const auto summary = lines_of(slurp(out / "report" / "summary.csv"));
  CHECK(summary.size() == 1);

  // Untrained scores are all 1/N: every heatmap cell has one colour and value.
  const auto svg = slurp(out / "report" / "heatmap_propagate_class8.svg");
  std::set<std::string> fills, values;
  for (std::size_t pos = svg.find("<title>"); pos != std::string::npos; pos = svg.find("<title>", pos + 1)) {
    const auto rect = svg.rfind("fill=\"", pos);
    fills.insert(svg.substr(rect, 14));
    const auto colon = svg.find(": ", pos);
    values.insert(svg.substr(colon + 2, svg.find('<', colon) - colon - 2));
  }
  CHECK(fills.size() == 1);
  REQUIRE(values.size() == 1);
  CHECK(std::stod(*values.begin()) == doctest::Approx(1.0 / 8).epsilon(1e-12));
}
