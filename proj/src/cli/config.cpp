#include "cgt/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cgt/errors.hpp"

namespace cgt::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

struct Context {
  std::string where;
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }
};

std::uint64_t to_u64(const Context& ctx, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) ctx.fail("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const Context& ctx, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) ctx.fail("expected a number, got '" + v + "'");
    return out;
  } catch (const std::logic_error&) {
    ctx.fail("expected a number, got '" + v + "'");
  }
}

bool to_bool(const Context& ctx, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  ctx.fail("expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const Context& ctx, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_u64(ctx, s));
  if (out.empty()) ctx.fail("expected a non-empty list");
  return out;
}

std::vector<std::uint64_t> to_u64s(const Context& ctx, const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_u64(ctx, s));
  if (out.empty()) ctx.fail("expected a non-empty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const Context&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  std::string name;
  Setter set;
  Getter get;
};

struct Section {
  std::string name;
  std::vector<Key> keys;
};

template <typename T>
std::string str(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, double>) return fmt_double(v);
  else return std::to_string(v);
}

std::vector<Key> train_keys(train::TrainConfig ExperimentConfig::*which, bool with_seed) {
  auto tc = [which](ExperimentConfig& c) -> train::TrainConfig& { return c.*which; };
  auto ctc = [which](const ExperimentConfig& c) -> const train::TrainConfig& { return c.*which; };
  std::vector<Key> keys{
      {"iterations", [=](auto& c, auto& x, auto& v) { tc(c).iterations = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).iterations); }},
      {"batch_size", [=](auto& c, auto& x, auto& v) { tc(c).batch_size = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).batch_size); }},
      {"lr_g", [=](auto& c, auto& x, auto& v) { tc(c).lr_g = to_double(x, v); },
       [=](auto& c) { return str(ctc(c).lr_g); }},
      {"lr_d", [=](auto& c, auto& x, auto& v) { tc(c).lr_d = to_double(x, v); },
       [=](auto& c) { return str(ctc(c).lr_d); }},
      {"beta1", [=](auto& c, auto& x, auto& v) { tc(c).beta1 = to_double(x, v); },
       [=](auto& c) { return str(ctc(c).beta1); }},
      {"beta2", [=](auto& c, auto& x, auto& v) { tc(c).beta2 = to_double(x, v); },
       [=](auto& c) { return str(ctc(c).beta2); }},
      {"d_steps", [=](auto& c, auto& x, auto& v) { tc(c).d_steps_per_g_step = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).d_steps_per_g_step); }},
      {"eval_every", [=](auto& c, auto& x, auto& v) { tc(c).eval_every = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).eval_every); }},
      {"eval_samples", [=](auto& c, auto& x, auto& v) { tc(c).eval_samples = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).eval_samples); }},
      {"kmmd_samples", [=](auto& c, auto& x, auto& v) { tc(c).kmmd_samples = to_u64(x, v); },
       [=](auto& c) { return str(ctc(c).kmmd_samples); }},
  };
  if (with_seed) {
    keys.push_back({"seed", [=](auto& c, auto& x, auto& v) { tc(c).seed = to_u64(x, v); },
                    [=](auto& c) { return str(ctc(c).seed); }});
  }
  return keys;
}

std::string path_value(const fs::path& base, const std::string& v) {
  if (v.empty()) return v;
  fs::path p(v);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

// Path setters resolve relative values against `base`.
std::vector<Section> schema(const fs::path& base) {
  std::vector<Section> sections;

  sections.push_back(
      {"task",
       {
           {"geometry",
            [](auto& c, auto& x, auto& v) {
              if (v == "ring") c.task.geometry = data::Geometry::ring;
              else if (v == "grid") c.task.geometry = data::Geometry::grid;
              else x.fail("geometry must be ring or grid");
            },
            [](auto& c) { return std::string(c.task.geometry == data::Geometry::ring ? "ring" : "grid"); }},
           {"num_source", [](auto& c, auto& x, auto& v) { c.task.num_source = to_u64(x, v); },
            [](auto& c) { return str(c.task.num_source); }},
           {"num_target", [](auto& c, auto& x, auto& v) { c.task.num_target = to_u64(x, v); },
            [](auto& c) { return str(c.task.num_target); }},
           {"source_budget", [](auto& c, auto& x, auto& v) { c.task.source_budget = to_u64(x, v); },
            [](auto& c) { return str(c.task.source_budget); }},
           {"target_budget", [](auto& c, auto& x, auto& v) { c.task.target_budget = to_u64(x, v); },
            [](auto& c) { return str(c.task.target_budget); }},
           {"radius", [](auto& c, auto& x, auto& v) { c.task.radius = to_double(x, v); },
            [](auto& c) { return str(c.task.radius); }},
           {"sigma", [](auto& c, auto& x, auto& v) { c.task.sigma = to_double(x, v); },
            [](auto& c) { return str(c.task.sigma); }},
           {"seed", [](auto& c, auto& x, auto& v) { c.task.seed = to_u64(x, v); },
            [](auto& c) { return str(c.task.seed); }},
       }});

  sections.push_back(
      {"model",
       {
           {"latent_dim", [](auto& c, auto& x, auto& v) { c.gen.latent_dim = to_u64(x, v); },
            [](auto& c) { return str(c.gen.latent_dim); }},
           {"gen_hidden", [](auto& c, auto& x, auto& v) { c.gen.hidden = to_sizes(x, v); },
            [](auto& c) { return join<std::size_t>(c.gen.hidden, [](auto& s) { return str(s); }); }},
           {"gen_output_scale", [](auto& c, auto& x, auto& v) { c.gen.output_scale = to_double(x, v); },
            [](auto& c) { return str(c.gen.output_scale); }},
           {"disc_hidden", [](auto& c, auto& x, auto& v) { c.disc.hidden = to_sizes(x, v); },
            [](auto& c) { return join<std::size_t>(c.disc.hidden, [](auto& s) { return str(s); }); }},
           {"leaky_slope",
            [](auto& c, auto& x, auto& v) {
              c.gen.leaky_slope = to_double(x, v);
              c.disc.leaky_slope = c.gen.leaky_slope;
            },
            [](auto& c) { return str(c.gen.leaky_slope); }},
           {"bn_eps", [](auto& c, auto& x, auto& v) { c.gen.eps = to_double(x, v); },
            [](auto& c) { return str(c.gen.eps); }},
       }});

  auto pre = train_keys(&ExperimentConfig::pretrain, true);
  sections.push_back({"pretrain", pre});

  auto tr = train_keys(&ExperimentConfig::transfer, false);
  tr.insert(tr.begin(),
            {{"mode", [](auto& c, auto& x, auto& v) {
                try {
                  c.transfer.mode = train::parse_mode(v);
                } catch (const ConfigError& e) {
                  x.fail(e.what());
                }
              },
              [](auto& c) { return std::string(train::mode_name(c.transfer.mode)); }},
             {"pretrained", [base](auto& c, auto&, auto& v) { c.pretrained = path_value(base, v); },
              [](auto& c) { return c.pretrained; }}});
  auto flag = [&](const char* name, bool train::TrainConfig::*f) {
    tr.push_back({name, [f](auto& c, auto& x, auto& v) { c.transfer.*f = to_bool(x, v); },
                  [f](auto& c) { return str(c.transfer.*f); }});
  };
  flag("prior_tunable", &train::TrainConfig::prior_tunable);
  flag("residuals", &train::TrainConfig::residuals_enabled);
  flag("shared_scores", &train::TrainConfig::shared_scores);
  flag("use_l1", &train::TrainConfig::use_l1);
  flag("use_l2", &train::TrainConfig::use_l2);
  tr.push_back({"lambda_r", [](auto& c, auto& x, auto& v) { c.transfer.lambda_r = to_double(x, v); },
                [](auto& c) { return str(c.transfer.lambda_r); }});
  tr.push_back({"lambda_s", [](auto& c, auto& x, auto& v) { c.transfer.lambda_s = to_double(x, v); },
                [](auto& c) { return str(c.transfer.lambda_s); }});
  sections.push_back({"transfer", tr});

  auto ft = train_keys(&ExperimentConfig::finetune, false);
  ft.insert(ft.begin(), {"transferred", [base](auto& c, auto&, auto& v) { c.transferred = path_value(base, v); },
                         [](auto& c) { return c.transferred; }});
  sections.push_back({"finetune", ft});

  sections.push_back(
      {"experiment",
       {
           {"seeds", [](auto& c, auto& x, auto& v) { c.seeds = to_u64s(x, v); },
            [](auto& c) { return join<std::uint64_t>(c.seeds, [](auto& s) { return str(s); }); }},
           {"modes",
            [](auto& c, auto& x, auto& v) {
              c.modes.clear();
              for (const auto& m : split_list(v)) {
                try {
                  c.modes.push_back(train::parse_mode(m));
                } catch (const ConfigError& e) {
                  x.fail(e.what());
                }
              }
              if (c.modes.empty()) x.fail("expected a non-empty list");
            },
            [](auto& c) {
              return join<train::Mode>(c.modes, [](auto& m) { return std::string(train::mode_name(m)); });
            }},
           {"budgets", [](auto& c, auto& x, auto& v) { c.budgets = to_sizes(x, v); },
            [](auto& c) { return join<std::size_t>(c.budgets, [](auto& s) { return str(s); }); }},
       }});

  sections.push_back(
      {"eval",
       {
           {"checkpoint", [base](auto& c, auto&, auto& v) { c.eval_checkpoint = path_value(base, v); },
            [](auto& c) { return c.eval_checkpoint; }},
           {"n_samples", [](auto& c, auto& x, auto& v) { c.eval_samples = to_u64(x, v); },
            [](auto& c) { return str(c.eval_samples); }},
           {"seeds", [](auto& c, auto& x, auto& v) { c.eval_seeds = to_u64s(x, v); },
            [](auto& c) { return join<std::uint64_t>(c.eval_seeds, [](auto& s) { return str(s); }); }},
           {"tau", [](auto& c, auto& x, auto& v) { c.tau = to_double(x, v); }, [](auto& c) { return str(c.tau); }},
           {"k_sigma",
            [](auto& c, auto& x, auto& v) {
              const double k = to_double(x, v);
              c.pretrain.k_sigma = c.transfer.k_sigma = c.finetune.k_sigma = k;
            },
            [](auto& c) { return str(c.pretrain.k_sigma); }},
       }});

  sections.push_back(
      {"report",
       {
           {"input", [base](auto& c, auto&, auto& v) { c.report_input = path_value(base, v); },
            [](auto& c) { return c.report_input; }},
           {"samples", [](auto& c, auto& x, auto& v) { c.report_samples = to_u64(x, v); },
            [](auto& c) { return str(c.report_samples); }},
           {"top_k", [](auto& c, auto& x, auto& v) { c.top_k = to_u64(x, v); },
            [](auto& c) { return str(c.top_k); }},
       }});

  sections.push_back(
      {"output",
       {
           {"dir", [](auto& c, auto&, auto& v) { c.out_dir = v; }, [](auto& c) { return c.out_dir; }},
           {"label", [](auto& c, auto&, auto& v) { c.label = v; }, [](auto& c) { return c.label; }},
       }});
  return sections;
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

ExperimentConfig::ExperimentConfig() {
  task.seed = 1;
  pretrain.phase = train::Phase::pretrain;
  pretrain.mode = train::Mode::pretrained;
  pretrain.iterations = 3000;
  pretrain.eval_every = 250;
  pretrain.seed = 1;
  transfer.phase = train::Phase::transfer;
  transfer.mode = train::Mode::propagate;
  transfer.iterations = 2000;
  transfer.eval_every = 100;
  finetune.phase = train::Phase::finetune;
  finetune.mode = train::Mode::propagate;
  finetune.iterations = 1000;
  finetune.eval_every = 100;
}

void ExperimentConfig::validate() const {
  task.validate();
  gen.validate();
  disc.validate();
  pretrain.validate();
  // Flags are validated against the actual mode when cells are built.
  train::TrainConfig t = transfer;
  t.mode = train::Mode::propagate;
  t.validate();
  finetune.validate();
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (eval_samples < 100) throw ConfigError("eval.n_samples must be >= 100");
  if (eval_seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (!(tau > 0.0)) throw ConfigError("eval.tau must be positive");
  for (std::size_t b : budgets) {
    if (b < 2) throw ConfigError("experiment.budgets entries must be >= 2");
  }
  if (top_k == 0) throw ConfigError("report.top_k must be >= 1");
  if (report_samples < 2) throw ConfigError("report.samples must be >= 2");
  if (out_dir.empty()) throw ConfigError("output.dir must not be empty");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& section : schema({})) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section.name << "]\n";
    for (const auto& key : section.keys) os << key.name << " = " << key.get(*this) << '\n';
  }
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(to_text()); }

void ExperimentConfig::override_seed(std::uint64_t seed) {
  seeds = {seed};
  eval_seeds = {seed};
  pretrain.seed = seed;
}

ExperimentConfig parse_config(std::istream& in, const std::string& source, const fs::path& base_dir) {
  ExperimentConfig cfg;
  const auto sections = schema(base_dir);
  const Section* current = nullptr;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    Context ctx{source + ":" + std::to_string(lineno)};
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("malformed section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      current = nullptr;
      for (const auto& s : sections) {
        if (s.name == name) current = &s;
      }
      if (!current) ctx.fail("unknown section [" + name + "]");
      continue;
    }
    if (!current) ctx.fail("key outside of any section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Key* k = nullptr;
    for (const auto& cand : current->keys) {
      if (cand.name == key) k = &cand;
    }
    if (!k) ctx.fail("unknown key '" + key + "' in [" + current->name + "]");
    if (!seen.insert(current->name + "." + key).second) ctx.fail("duplicate key '" + key + "'");
    k->set(cfg, ctx, value);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in, path.string(), fs::absolute(path).parent_path());
}

}  // namespace cgt::cli
