#include "cgt/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "cgt/errors.hpp"

namespace cgt::data {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ClassDistribution isotropic(Vec2 center, double sigma) {
  const double v = sigma * sigma;
  return ClassDistribution{center, Mat2{{{v, 0.0}, {0.0, v}}}};
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ b);
}

void ClassDistribution::validate() const {
  const double a = covariance[0][0], b = covariance[0][1], c = covariance[1][0], d = covariance[1][1];
  if (b != c) throw ConfigError("class covariance must be symmetric");
  if (!(a > 0.0) || !(a * d - b * c > 0.0)) throw ConfigError("class covariance must be positive definite");
}

double ClassDistribution::scale() const {
  const double a = covariance[0][0], b = covariance[0][1], d = covariance[1][1];
  const double mid = 0.5 * (a + d);
  const double rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  return std::sqrt(mid + rad);
}

void TaskConfig::validate() const {
  if (num_source < 1 || num_target < 1) throw ConfigError("task: need N >= 1 and M >= 1");
  if (source_budget < 2 || target_budget < 2) throw ConfigError("task: per-class budgets must be >= 2");
  if (!(radius > 0.0)) throw ConfigError("task: radius/spacing must be positive");
  if (!(sigma > 0.0)) throw ConfigError("task: sigma must be positive");
  if (geometry == Geometry::ring) {
    if (num_source < 2) throw ConfigError("ring task: need N >= 2");
    if (num_target > num_source) throw ConfigError("ring task: M must not exceed N");
  } else {
    if (num_source != 25) throw ConfigError("grid task: N is fixed at 25");
    if (num_target > 16) throw ConfigError("grid task: at most 16 targets");
  }
}

std::string TaskConfig::geometry_key() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s;N=%zu;M=%zu;R=%.17g;sigma=%.17g;seed=%llu",
                geometry == Geometry::ring ? "ring" : "grid", num_source, num_target, radius, sigma,
                static_cast<unsigned long long>(seed));
  return buf;
}

std::uint64_t TaskConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : geometry_key()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const ClassDistribution& Task::distribution(std::size_t class_id) const {
  if (class_id < sources.size()) return sources[class_id];
  if (class_id < num_classes()) return targets[class_id - sources.size()];
  throw IndexError("task: class id " + std::to_string(class_id) + " out of range");
}

Task make_ring_task(std::size_t num_source, std::size_t num_target, double radius, double sigma, std::uint64_t seed) {
  TaskConfig cfg;
  cfg.geometry = Geometry::ring;
  cfg.num_source = num_source;
  cfg.num_target = num_target;
  cfg.radius = radius;
  cfg.sigma = sigma;
  cfg.seed = seed;
  cfg.validate();

  Task task;
  task.config = cfg;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(num_source);
  for (std::size_t i = 0; i < num_source; ++i) {
    const double a = step * static_cast<double>(i);
    task.sources.push_back(isotropic({radius * std::cos(a), radius * std::sin(a)}, sigma));
  }
  std::vector<std::size_t> gaps(num_source);
  std::iota(gaps.begin(), gaps.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x6761707301ULL));
  for (std::size_t i = num_source - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(gaps[i], gaps[pick(rng)]);
  }
  gaps.resize(num_target);
  for (std::size_t g : gaps) {
    const double a = step * (static_cast<double>(g) + 0.5);
    task.targets.push_back(isotropic({radius * std::cos(a), radius * std::sin(a)}, sigma));
  }
  task.target_gaps = std::move(gaps);
  return task;
}

Task make_grid_task(std::size_t num_target, double spacing, double sigma, std::uint64_t seed) {
  TaskConfig cfg;
  cfg.geometry = Geometry::grid;
  cfg.num_source = 25;
  cfg.num_target = num_target;
  cfg.radius = spacing;
  cfg.sigma = sigma;
  cfg.seed = seed;
  cfg.validate();

  Task task;
  task.config = cfg;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      task.sources.push_back(isotropic({spacing * (c - 2), spacing * (r - 2)}, sigma));
    }
  }
  std::vector<std::size_t> cells(16);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x63656c6c01ULL));
  for (std::size_t i = cells.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(cells[i], cells[pick(rng)]);
  }
  cells.resize(num_target);
  for (std::size_t cell : cells) {
    const double cx = spacing * (static_cast<double>(cell % 4) - 1.5);
    const double cy = spacing * (static_cast<double>(cell / 4) - 1.5);
    task.targets.push_back(isotropic({cx, cy}, sigma));
  }
  task.target_gaps = std::move(cells);
  return task;
}

Task make_task(const TaskConfig& config) {
  config.validate();
  Task task = config.geometry == Geometry::ring
                  ? make_ring_task(config.num_source, config.num_target, config.radius, config.sigma, config.seed)
                  : make_grid_task(config.num_target, config.radius, config.sigma, config.seed);
  task.config.source_budget = config.source_budget;
  task.config.target_budget = config.target_budget;
  return task;
}

grad::Tensor sample_class(const ClassDistribution& dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_class: n must be >= 1");
  dist.validate();
  // Cholesky factor of the 2x2 covariance.
  const double l00 = std::sqrt(dist.covariance[0][0]);
  const double l10 = dist.covariance[1][0] / l00;
  const double l11 = std::sqrt(std::max(0.0, dist.covariance[1][1] - l10 * l10));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  grad::Tensor out(grad::Shape{n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double a = normal(rng);
    const double b = normal(rng);
    out(i, 0) = dist.center[0] + l00 * a;
    out(i, 1) = dist.center[1] + l10 * a + l11 * b;
  }
  return out;
}

std::vector<grad::Tensor> subsample_dataset(const std::vector<grad::Tensor>& per_class, std::size_t per_class_count,
                                            std::uint64_t seed) {
  std::vector<grad::Tensor> out;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const grad::Tensor& pts = per_class[c];
    const std::size_t available = pts.rows();
    if (per_class_count > available) {
      throw ConfigError("subsample_dataset: class " + std::to_string(c) + " has " + std::to_string(available) +
                        " points, requested " + std::to_string(per_class_count));
    }
    std::vector<std::size_t> idx(available);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, c, 0x737562ULL));
    for (std::size_t i = 0; i < per_class_count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, available - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(per_class_count);
    std::sort(idx.begin(), idx.end());
    grad::Tensor sub(grad::Shape{per_class_count, pts.cols()});
    for (std::size_t i = 0; i < per_class_count; ++i) {
      const auto src = pts.row(idx[i]);
      std::copy(src.begin(), src.end(), sub.row(i).begin());
    }
    out.push_back(std::move(sub));
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const std::vector<std::size_t>& class_ids,
                       const std::vector<grad::Tensor>& per_class) {
  if (class_ids.size() != per_class.size()) throw ConfigError("write_dataset_csv: id/group count mismatch");
  os << "class_id,x0,x1\n";
  char buf[96];
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (std::size_t i = 0; i < per_class[c].rows(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", class_ids[c], per_class[c](i, 0), per_class[c](i, 1));
      os << buf;
    }
  }
}

std::vector<std::pair<std::size_t, grad::Tensor>> read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "class_id,x0,x1") throw FormatError("dataset csv: missing header");
  std::vector<std::size_t> order;
  std::map<std::size_t, std::vector<double>> groups;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw FormatError("dataset csv: malformed line " + std::to_string(lineno));
    }
    try {
      const std::size_t id = std::stoull(a);
      if (!groups.contains(id)) order.push_back(id);
      groups[id].push_back(std::stod(b));
      groups[id].push_back(std::stod(c));
    } catch (const std::logic_error&) {
      throw FormatError("dataset csv: bad number on line " + std::to_string(lineno));
    }
  }
  std::vector<std::pair<std::size_t, grad::Tensor>> out;
  for (std::size_t id : order) {
    auto& v = groups[id];
    const std::size_t n = v.size() / 2;
    out.emplace_back(id, grad::Tensor(grad::Shape{n, 2}, std::move(v)));
  }
  return out;
}

}  // namespace cgt::data
