#include "cgt/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "cgt/cli/svg.hpp"
#include "cgt/errors.hpp"

namespace cgt::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagReport = 0x7265706fULL;
constexpr double kNone = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  if (std::isinf(v)) return "none";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return kNone;
  if (n % 2) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  return std::isinf(b) ? kNone : 0.5 * (a + b);
}

std::string slug(const std::string& label, std::size_t class_id) {
  return label + "_class" + std::to_string(class_id) + ".svg";
}

struct Group {
  std::string label;
  std::size_t budget;
  std::vector<const CellResult*> runs;
};

std::vector<Group> group_cells(const std::vector<CellResult>& results) {
  std::map<std::pair<std::size_t, std::string>, Group> m;
  for (const auto& r : results) {
    auto& g = m[{r.cell.budget, r.cell.label}];
    g.label = r.cell.label;
    g.budget = r.cell.budget;
    g.runs.push_back(&r);
  }
  std::vector<Group> out;
  for (auto& [k, g] : m) out.push_back(std::move(g));
  return out;
}

void scatter_svg(const std::string& path, std::uint64_t hash, const std::string& title, std::size_t class_id,
                 const grad::Tensor& real, const grad::Tensor& fake) {
  double x0 = kNone, x1 = -kNone, y0 = kNone, y1 = -kNone;
  for (const grad::Tensor* t : {&real, &fake}) {
    for (std::size_t i = 0; i < t->rows(); ++i) {
      x0 = std::min(x0, (*t)(i, 0));
      x1 = std::max(x1, (*t)(i, 0));
      y0 = std::min(y0, (*t)(i, 1));
      y1 = std::max(y1, (*t)(i, 1));
    }
  }
  // equal aspect: square data window around the joint centre
  const double half = 0.55 * std::max({x1 - x0, y1 - y0, 1e-6});
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const Axis ax{cx - half, cx + half, 190, 690};
  const Axis ay{cy - half, cy + half, 560, 60};

  Svg svg(hash);
  svg.text(400, 30, title, 16, "middle");
  svg.rect(190, 60, 500, 500, "#f7f7f7");
  for (std::size_t i = 0; i < real.rows(); ++i) svg.circle(ax(real(i, 0)), ay(real(i, 1)), 2.0, "#555555", 0.35);
  for (std::size_t i = 0; i < fake.rows(); ++i)
    svg.circle(ax(fake(i, 0)), ay(fake(i, 1)), 2.0, palette_color(class_id), 0.6);
  svg.circle(40, 80, 5, "#555555", 0.6);
  svg.text(52, 84, "real");
  svg.circle(40, 100, 5, palette_color(class_id));
  svg.text(52, 104, "generated");
  svg.text(440, 590, "x0 [" + fmt_short(ax.lo) + ", " + fmt_short(ax.hi) + "]", 12, "middle");
  svg.text(100, 320, "x1 [" + fmt_short(ay.lo) + ", " + fmt_short(ay.hi) + "]", 12, "middle");
  write_file(path, svg.str());
}

void heatmap_svg(const std::string& path, std::uint64_t hash, const std::string& title,
                 const transfer::TransferBlock& block, std::size_t j) {
  const std::size_t layers = block.num_layers();
  const std::size_t n = block.config().num_source;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  for (auto kind : {transfer::ParamKind::gamma, transfer::ParamKind::beta}) {
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& s = block.scores(l, kind).value;
      std::vector<double> row(n);
      for (std::size_t k = 0; k < n; ++k) row[k] = s(j, k);
      rows.push_back(std::move(row));
      names.push_back(std::string(transfer::param_kind_name(kind)) + std::to_string(l));
    }
  }
  double scale = 0.0;
  for (const auto& r : rows)
    for (double v : r) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) scale = 1.0;

  Svg svg(hash);
  svg.text(400, 30, title, 16, "middle");
  const double left = 120, top = 70, w = 620, h = 460;
  const double cw = w / static_cast<double>(n), ch = h / static_cast<double>(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    svg.text(left - 8, top + (r + 0.5) * ch + 4, names[r], 12, "end");
    for (std::size_t k = 0; k < n; ++k) {
      char t[64];
      std::snprintf(t, sizeof t, "%s source %zu: %.6g", names[r].c_str(), k, rows[r][k]);
      svg.rect(left + k * cw, top + r * ch, cw, ch, diverging_color(rows[r][k] / scale), t);
    }
  }
  for (std::size_t k = 0; k < n; ++k) svg.text(left + (k + 0.5) * cw, top + h + 18, std::to_string(k), 12, "middle");
  svg.text(left + w / 2, top + h + 40, "source class", 12, "middle");
  svg.text(left + w / 2, 585, "colour scale: +-" + fmt_short(scale), 11, "middle");
  write_file(path, svg.str());
}

void convergence_svg(const std::string& path, std::uint64_t hash, const std::vector<Group>& groups, double tau) {
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> pts;  // (iteration, median mean Frechet)
  };
  std::vector<Series> series;
  double it_max = 1.0, lo = kNone, hi = -kNone;
  for (const auto& g : groups) {
    std::map<std::uint64_t, std::vector<double>> by_it;
    for (const auto* r : g.runs) {
      for (std::size_t i = 0; i < r->record.points.size(); ++i)
        by_it[r->record.points[i].iteration].push_back(r->record.mean_metric(i, "frechet"));
    }
    if (by_it.empty()) continue;
    Series s{g.label + " b" + std::to_string(g.budget), {}};
    for (auto& [it, vals] : by_it) {
      const double m = std::max(median(vals), 1e-6);
      s.pts.emplace_back(static_cast<double>(it), m);
      it_max = std::max(it_max, static_cast<double>(it));
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    series.push_back(std::move(s));
  }
  Svg svg(hash);
  svg.text(400, 30, "median mean Frechet vs iteration", 16, "middle");
  const double left = 90, right = 600, top = 60, bottom = 540;
  svg.line(left, bottom, right, bottom, "#000000");
  svg.line(left, top, left, bottom, "#000000");
  if (series.empty()) {
    svg.text(400, 300, "no evaluated runs", 14, "middle");
    write_file(path, svg.str());
    return;
  }
  lo = std::min(lo, tau);
  hi = std::max(hi, tau);
  const double l0 = std::floor(std::log10(lo)), l1 = std::max(std::ceil(std::log10(hi)), l0 + 1);
  const Axis ax{0.0, it_max, left, right};
  const Axis ay{l0, l1, bottom, top};
  for (double d = l0; d <= l1; d += 1.0) {
    svg.line(left - 4, ay(d), left, ay(d), "#000000");
    svg.text(left - 8, ay(d) + 4, "1e" + std::to_string(static_cast<int>(d)), 11, "end");
  }
  for (int k = 0; k <= 4; ++k) {
    const double it = it_max * k / 4.0;
    svg.text(ax(it), bottom + 18, std::to_string(static_cast<long long>(std::llround(it))), 11, "middle");
  }
  svg.text((left + right) / 2, bottom + 40, "iteration", 12, "middle");
  svg.line(left, ay(std::log10(tau)), right, ay(std::log10(tau)), "#999999", 1.0);
  svg.text(right - 4, ay(std::log10(tau)) - 4, "tau " + fmt_short(tau), 11, "end");
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> px;
    for (const auto& [x, y] : series[i].pts) px.emplace_back(ax(x), ay(std::log10(y)));
    svg.polyline(px, palette_color(i));
    svg.rect(615, 70 + 18.0 * i, 12, 12, palette_color(i));
    svg.text(633, 80 + 18.0 * i, series[i].name, 11);
  }
  write_file(path, svg.str());
}

}  // namespace

RunSummary summarize_run(const train::RunRecord& record, double tau) {
  RunSummary s;
  s.best = record.best("frechet");
  if (!record.points.empty()) {
    s.iterations_to_threshold = train::iterations_to_threshold(record, "frechet", tau);
    s.final_frechet = record.mean_metric(record.points.size() - 1, "frechet");
  }
  return s;
}

void write_summary_csv(std::ostream& os, const std::vector<CellResult>& results, double tau) {
  os << "budget,rank,label,runs,median_best_frechet,median_best_iteration,median_iterations_to_threshold,"
        "runs_reaching_threshold,median_final_frechet\n";
  struct Row {
    std::size_t budget;
    std::string label;
    std::size_t runs, reached;
    double best, best_it, itt, final_f;
  };
  std::vector<Row> rows;
  for (const auto& g : group_cells(results)) {
    std::vector<double> best, best_it, itt, final_f;
    for (const auto* r : g.runs) {
      const auto s = summarize_run(r->record, tau);
      if (!s.best) continue;
      best.push_back(s.best->second);
      best_it.push_back(static_cast<double>(s.best->first));
      itt.push_back(s.iterations_to_threshold ? static_cast<double>(*s.iterations_to_threshold) : kNone);
      final_f.push_back(s.final_frechet);
    }
    if (best.empty()) continue;
    const auto reached = static_cast<std::size_t>(std::count_if(itt.begin(), itt.end(), [](double v) { return !std::isinf(v); }));
    rows.push_back({g.budget, g.label, best.size(), reached, median(best), median(best_it), median(itt), median(final_f)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.budget != b.budget) return a.budget < b.budget;
    if (a.best != b.best) return a.best < b.best;
    return a.label < b.label;
  });
  std::size_t rank = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rank = (i == 0 || rows[i].budget != rows[i - 1].budget) ? 1 : rank + 1;
    const auto& r = rows[i];
    os << r.budget << ',' << rank << ',' << r.label << ',' << r.runs << ',' << fmt(r.best) << ',' << fmt(r.best_it)
       << ',' << fmt(r.itt) << ',' << r.reached << ',' << fmt(r.final_f) << '\n';
  }
}

std::vector<CellResult> load_cells(const fs::path& input) {
  if (!fs::is_directory(input)) throw std::runtime_error("report input is not a directory: " + input.string());
  std::vector<CellResult> out;
  const fs::path runs = input / "runs";
  if (!fs::is_directory(runs)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    if (!entry.is_regular_file() || entry.path().filename() != "record.csv") continue;
    const fs::path dir = entry.path().parent_path();
    CellResult r;
    r.cell = cell_from_config(load_config(dir / "config.ini"));
    std::ifstream is(entry.path());
    r.record = train::read_run_record_csv(is);
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const CellResult& a, const CellResult& b) {
    if (a.cell.label != b.cell.label) return a.cell.label < b.cell.label;
    if (a.cell.budget != b.cell.budget) return a.cell.budget < b.cell.budget;
    return a.cell.seed < b.cell.seed;
  });
  return out;
}

void emit_report(const ExperimentConfig& cfg, const fs::path& input, const fs::path& out_dir) {
  const auto cells = load_cells(input);
  fs::create_directories(out_dir);
  const std::uint64_t hash = cfg.hash();
  echo_config(cfg, out_dir);

  std::ostringstream summary;
  write_summary_csv(summary, cells, cfg.tau);
  write_file(out_dir / "summary.csv", summary.str());

  std::ostringstream runs, conv, topk;
  runs << "label,budget,seed,best_frechet,best_iteration,iterations_to_threshold,final_frechet\n";
  conv << "label,budget,seed,iteration,mean_frechet,mean_kmmd,loss_d,loss_g\n";
  topk << "label,budget,seed,layer,param_type,new_class,rank,source_class,score\n";
  for (const auto& c : cells) {
    const auto s = summarize_run(c.record, cfg.tau);
    const std::string key = c.cell.label + ',' + std::to_string(c.cell.budget) + ',' + std::to_string(c.cell.seed);
    runs << key << ',';
    if (s.best) {
      runs << fmt(s.best->second) << ',' << s.best->first << ','
           << (s.iterations_to_threshold ? std::to_string(*s.iterations_to_threshold) : "none") << ','
           << fmt(s.final_frechet);
    } else {
      runs << ",,,";
    }
    runs << '\n';
    for (std::size_t i = 0; i < c.record.points.size(); ++i) {
      const auto& p = c.record.points[i];
      conv << key << ',' << p.iteration << ',' << fmt(c.record.mean_metric(i, "frechet")) << ','
           << fmt(c.record.mean_metric(i, "kmmd")) << ',' << fmt(p.loss_d) << ',' << fmt(p.loss_g) << '\n';
    }
    const fs::path ck = cell_dir(input, c.cell) / "best.ckpt";
    if (!fs::exists(ck)) continue;
    const auto model = train::Model::from_checkpoint(train::Checkpoint::load(ck));
    if (!model.block) continue;
    std::ostringstream body;
    transfer::write_scores_csv(body, transfer::export_scores(*model.block, cfg.top_k));
    std::istringstream lines(body.str());
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) topk << key << ',' << line << '\n';
  }
  write_file(out_dir / "runs.csv", runs.str());
  write_file(out_dir / "convergence.csv", conv.str());
  write_file(out_dir / "scores_topk.csv", topk.str());

  // One representative run per label: the scarcest budget, then the lowest seed.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0 && cells[i].cell.label == cells[i - 1].cell.label) continue;
    const Cell& cell = cells[i].cell;
    const fs::path dir = cell_dir(input, cell);
    if (!fs::exists(dir / "best.ckpt")) continue;
    const ExperimentConfig ccfg = load_config(dir / "config.ini");
    const data::Task task = data::make_task(ccfg.task);
    auto model = train::Model::from_checkpoint(train::Checkpoint::load(dir / "best.ckpt"));
    const auto classes = model.evaluated_classes();
    const auto fake = train::generate_classes(model, classes, cfg.report_samples, cfg.eval_seeds.front());
    const std::string where = " (b" + std::to_string(cell.budget) + ", seed " + std::to_string(cell.seed) + ")";
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const std::size_t c = classes[k];
      const auto real = data::sample_class(task.distribution(c), cfg.report_samples,
                                           data::derive_seed(task.config.seed, kTagReport, c));
      scatter_svg((out_dir / ("scatter_" + slug(cell.label, c))).string(), hash,
                  cell.label + " class " + std::to_string(c) + where, c, real, fake[k]);
    }
    if (model.block) {
      for (std::size_t j = 0; j < model.num_target; ++j) {
        const std::size_t c = model.num_source + j;
        heatmap_svg((out_dir / ("heatmap_" + slug(cell.label, c))).string(), hash,
                    cell.label + " scores for class " + std::to_string(c) + where, *model.block, j);
      }
    }
  }

  convergence_svg((out_dir / "convergence.svg").string(), hash, group_cells(cells), cfg.tau);
}

void cmd_report(const ExperimentConfig& cfg, const fs::path& out) {
  const fs::path input = cfg.report_input.empty() ? out : fs::path(cfg.report_input);
  emit_report(cfg, input, out / "report");
}

}  // namespace cgt::cli
