#include "cgt/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "cgt/errors.hpp"
#include "cgt/metrics/metrics.hpp"

namespace cgt::train {

namespace {

constexpr std::uint64_t kTagTrain = 0x747261696eULL;
constexpr std::uint64_t kTagSubsample = 0x737562ULL;
constexpr std::uint64_t kTagHeldout = 0x68656c64ULL;
constexpr std::uint64_t kTagEval = 0x6576616cULL;
constexpr std::uint64_t kTagLatent = 0x7a7aULL;
constexpr std::uint64_t kTagTransfer = 0x78666572ULL;
constexpr std::uint64_t kTagFinetune = 0x66696e65ULL;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

grad::Tensor latent_batch(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  grad::Tensor z(grad::Shape{n, dim});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : z.data()) v = normal(rng);
  return z;
}

std::string run_id_for(const TrainConfig& c) {
  return std::string(mode_name(c.mode)) + "-" + std::string(phase_name(c.phase)) + "-seed" + std::to_string(c.seed);
}

void reset_optimizers(Model& m, const TrainConfig& c) {
  m.opt_g = grad::AdamState{};
  m.opt_d = grad::AdamState{};
  m.opt_g.beta1 = m.opt_d.beta1 = c.beta1;
  m.opt_g.beta2 = m.opt_d.beta2 = c.beta2;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t c = lo; c < hi; ++c) out.push_back(c);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("train: Adam betas must be in [0, 1)");
  if (d_steps_per_g_step < 1) throw ConfigError("train: d_steps_per_g_step must be >= 1");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (eval_samples < 2) throw ConfigError("train: eval_samples must be >= 2");
  if (lambda_r < 0.0 || lambda_s < 0.0) throw ConfigError("train: lambda_r and lambda_s must be >= 0");
  if (!(k_sigma > 0.0)) throw ConfigError("train: k_sigma must be positive");
  const bool default_flags = prior_tunable && residuals_enabled && !shared_scores && use_l1 && use_l2;
  if (!default_flags && mode != Mode::propagate) {
    throw ConfigError("train: ablation flags only apply to mode=propagate");
  }
  if (phase == Phase::pretrain && mode != Mode::pretrained) throw ConfigError("train: pretrain phase uses mode=pretrained");
  if (phase != Phase::pretrain && mode == Mode::pretrained) throw ConfigError("train: transfer phases need a transfer mode");
  if (phase == Phase::finetune && mode != Mode::propagate) throw ConfigError("train: finetune applies to mode=propagate");
}

transfer::TransferConfig TrainConfig::transfer_config(std::size_t num_source, std::size_t num_target) const {
  transfer::TransferConfig c;
  c.num_source = num_source;
  c.num_target = num_target;
  c.lambda_r = lambda_r;
  c.lambda_s = lambda_s;
  c.prior_tunable = prior_tunable;
  c.residuals_enabled = residuals_enabled;
  c.shared_scores = shared_scores;
  c.use_l1 = use_l1;
  c.use_l2 = use_l2;
  return c;
}

double RunRecord::mean_metric(std::size_t i, const std::string& metric) const {
  const EvalPoint& p = points.at(i);
  if (p.rows.empty()) throw ConfigError("run record: eval point without rows");
  double total = 0.0;
  for (const MetricRow& r : p.rows) {
    if (metric == "frechet") total += r.frechet;
    else if (metric == "kmmd") total += r.kmmd;
    else if (metric == "coverage") total += r.coverage;
    else if (metric == "quality") total += r.quality;
    else throw ConfigError("unknown metric '" + metric + "'");
  }
  return total / static_cast<double>(p.rows.size());
}

std::optional<std::pair<std::uint64_t, double>> RunRecord::best(const std::string& metric) const {
  std::optional<std::pair<std::uint64_t, double>> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double v = mean_metric(i, metric);
    if (!out || v < out->second) out = std::make_pair(points[i].iteration, v);
  }
  return out;
}

void write_metric_rows_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "run_id,iteration,class_id,frechet,kmmd,coverage,quality\n";
  for (const auto& r : rows) {
    os << r.run_id << ',' << r.iteration << ',' << r.class_id << ',' << fmt(r.frechet) << ',' << fmt(r.kmmd) << ','
       << fmt(r.coverage) << ',' << fmt(r.quality) << '\n';
  }
}

void write_run_record_csv(std::ostream& os, const RunRecord& record) {
  os << "run_id,iteration,class_id,frechet,kmmd,coverage,quality,loss_d,loss_g\n";
  for (const auto& p : record.points) {
    for (const auto& r : p.rows) {
      os << r.run_id << ',' << r.iteration << ',' << r.class_id << ',' << fmt(r.frechet) << ',' << fmt(r.kmmd) << ','
         << fmt(r.coverage) << ',' << fmt(r.quality) << ',' << fmt(p.loss_d) << ',' << fmt(p.loss_g) << '\n';
    }
  }
}

RunRecord read_run_record_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "run_id,iteration,class_id,frechet,kmmd,coverage,quality,loss_d,loss_g") {
    throw FormatError("run record csv: unexpected header");
  }
  RunRecord rec;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw FormatError("run record csv: expected 9 fields in '" + line + "'");
    MetricRow r;
    try {
      r.run_id = f[0];
      r.iteration = std::stoull(f[1]);
      r.class_id = std::stoull(f[2]);
      r.frechet = std::stod(f[3]);
      r.kmmd = std::stod(f[4]);
      r.coverage = std::stod(f[5]);
      r.quality = std::stod(f[6]);
    } catch (const std::logic_error&) {
      throw FormatError("run record csv: bad number in '" + line + "'");
    }
    rec.run_id = r.run_id;
    if (rec.points.empty() || rec.points.back().iteration != r.iteration) {
      if (!rec.points.empty() && r.iteration <= rec.points.back().iteration) {
        throw FormatError("run record csv: iterations must be strictly increasing");
      }
      EvalPoint p;
      p.iteration = r.iteration;
      p.loss_d = std::stod(f[7]);
      p.loss_g = std::stod(f[8]);
      rec.points.push_back(std::move(p));
    }
    rec.points.back().rows.push_back(std::move(r));
  }
  return rec;
}

std::vector<grad::Tensor> source_training_data(const data::Task& task) {
  std::vector<grad::Tensor> out;
  for (std::size_t c = 0; c < task.sources.size(); ++c) {
    out.push_back(data::sample_class(task.sources[c], task.config.source_budget,
                                     data::derive_seed(task.config.seed, kTagTrain, c)));
  }
  return out;
}

std::vector<grad::Tensor> target_training_data(const data::Task& task) {
  const std::size_t pool = std::max(task.config.source_budget, task.config.target_budget);
  std::vector<grad::Tensor> pools;
  const std::size_t n = task.sources.size();
  for (std::size_t j = 0; j < task.targets.size(); ++j) {
    pools.push_back(data::sample_class(task.targets[j], pool, data::derive_seed(task.config.seed, kTagTrain, n + j)));
  }
  return data::subsample_dataset(pools, task.config.target_budget, data::derive_seed(task.config.seed, kTagSubsample));
}

std::vector<grad::Tensor> generate_classes(Model& model, const std::vector<std::size_t>& classes, std::size_t n,
                                           std::uint64_t seed) {
  // One forward pass per generation group, with n samples of every class in
  // the group interleaved, so batch statistics match the training layout.
  std::map<std::size_t, grad::Tensor> by_group_start;
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t c : classes) {
    auto g = model.generation_group(c);
    groups.emplace(g.front(), std::move(g));
  }
  std::map<std::size_t, grad::Tensor> per_class;
  for (const auto& [start, group] : groups) {
    std::vector<std::size_t> ids;
    ids.reserve(n * group.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c : group) ids.push_back(c);
    }
    std::mt19937_64 rng(data::derive_seed(seed, kTagLatent, start));
    const grad::Tensor z = latent_batch(ids.size(), model.generator.spec.latent_dim, rng);
    const grad::Tensor out = model.sample(z, ids);
    const std::size_t dim = out.cols();
    for (std::size_t k = 0; k < group.size(); ++k) {
      grad::Tensor pts(grad::Shape{n, dim});
      for (std::size_t i = 0; i < n; ++i) {
        const auto src = out.row(i * group.size() + k);
        std::copy(src.begin(), src.end(), pts.row(i).begin());
      }
      per_class.emplace(group[k], std::move(pts));
    }
  }
  std::vector<grad::Tensor> result;
  for (std::size_t c : classes) result.push_back(per_class.at(c));
  return result;
}

namespace {

MetricRow score_class(const grad::Tensor& generated, const grad::Tensor& real, const data::ClassDistribution& dist,
                      std::size_t kmmd_samples, double k_sigma) {
  MetricRow row;
  row.frechet = metrics::frechet_distance(metrics::fit_gaussian(generated), metrics::fit_gaussian(real));
  auto head = [&](const grad::Tensor& t) {
    if (kmmd_samples == 0 || kmmd_samples >= t.rows()) return t;
    std::vector<double> d(t.storage().begin(), t.storage().begin() + static_cast<std::ptrdiff_t>(kmmd_samples * t.cols()));
    return grad::Tensor(grad::Shape{kmmd_samples, t.cols()}, std::move(d));
  };
  row.kmmd = metrics::kmmd(head(generated), head(real), 1.0);
  const auto mm = metrics::mode_metrics(generated, {dist}, k_sigma);
  row.coverage = mm.coverage;
  row.quality = mm.quality;
  return row;
}

}  // namespace

std::vector<MetricRow> evaluate_classes(Model& model, const data::Task& task, const std::vector<std::size_t>& classes,
                                        std::size_t n_samples, std::uint64_t seed, const std::string& run_id,
                                        std::size_t kmmd_samples, double k_sigma) {
  if (n_samples < 2) throw ConfigError("evaluate: need at least 2 samples per class");
  if (model.task_fingerprint != task.config.fingerprint()) throw ConfigError("evaluate: checkpoint was trained on a different task");
  const auto generated = generate_classes(model, classes, n_samples, seed);
  std::vector<MetricRow> rows;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const std::size_t c = classes[k];
    const auto& dist = task.distribution(c);
    const grad::Tensor real = data::sample_class(dist, n_samples, data::derive_seed(seed, kTagHeldout, c));
    MetricRow row = score_class(generated[k], real, dist, kmmd_samples, k_sigma);
    row.run_id = run_id;
    row.iteration = model.iteration;
    row.class_id = c;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<MetricRow> evaluate(Model& model, const data::Task& task, std::size_t n_samples, std::uint64_t seed,
                                const std::string& run_id, std::size_t kmmd_samples, double k_sigma) {
  return evaluate_classes(model, task, model.evaluated_classes(), n_samples, seed, run_id, kmmd_samples, k_sigma);
}

std::vector<MetricRow> evaluate_oracle(const data::Task& task, const std::vector<std::size_t>& classes,
                                       std::size_t n_samples, std::uint64_t seed, double k_sigma) {
  std::vector<MetricRow> rows;
  for (std::size_t c : classes) {
    const auto& dist = task.distribution(c);
    const grad::Tensor real = data::sample_class(dist, n_samples, data::derive_seed(seed, kTagHeldout, c));
    const grad::Tensor other = data::sample_class(dist, n_samples, data::derive_seed(seed, kTagHeldout ^ 1, c));
    MetricRow row = score_class(other, real, dist, 0, k_sigma);
    row.run_id = "oracle";
    row.class_id = c;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<std::uint64_t> iterations_to_threshold(const RunRecord& record, const std::string& metric, double tau) {
  if (metric != "frechet" && metric != "kmmd") throw ConfigError("iterations_to_threshold: unknown metric '" + metric + "'");
  if (record.points.empty()) throw ConfigError("iterations_to_threshold: empty run record");
  for (std::size_t i = 0; i < record.points.size(); ++i) {
    if (record.mean_metric(i, metric) <= tau) return record.points[i].iteration;
  }
  return std::nullopt;
}

TrainResult run_training(Model model, const data::Task& task, const std::vector<std::size_t>& classes,
                         const std::vector<grad::Tensor>& data, const TrainConfig& config) {
  config.validate();
  if (classes.size() != data.size() || classes.empty()) throw ConfigError("train: class/data mismatch");
  for (const auto& d : data) {
    if (d.rows() == 0) throw ConfigError("train: empty class data");
  }

  TrainResult result{model, model, RunRecord{run_id_for(config), {}}};
  if (config.iterations == 0) return result;
  reset_optimizers(model, config);

  const auto g_params = model.generator_trainables();
  const auto d_params = model.discriminator_trainables();
  if (g_params.empty()) throw ConfigError("train: no trainable generator parameters in this mode");
  const bool track_filters = model.filters_trainable();
  const std::size_t batch = config.batch_size;
  const std::size_t latent = model.generator.spec.latent_dim;
  const std::uint64_t eval_seed = data::derive_seed(task.config.seed, kTagEval);

  std::uniform_int_distribution<std::size_t> pick_class(0, classes.size() - 1);
  auto draw_classes = [&](std::vector<std::size_t>& slot, std::vector<std::size_t>& ids) {
    slot.resize(batch);
    ids.resize(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      slot[i] = pick_class(model.rng);
      ids[i] = classes[slot[i]];
    }
  };

  double best = std::numeric_limits<double>::infinity();
  double sum_d = 0.0, sum_g = 0.0;
  std::size_t n_d = 0, n_g = 0;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> slot, ids;

  for (std::uint64_t it = 1; it <= config.iterations; ++it) {
    const char* stage = "discriminator";
    try {
      for (std::size_t k = 0; k < config.d_steps_per_g_step; ++k) {
        draw_classes(slot, ids);
        grad::Tensor real(grad::Shape{batch, 2});
        for (std::size_t i = 0; i < batch; ++i) {
          const grad::Tensor& pts = data[slot[i]];
          std::uniform_int_distribution<std::size_t> pick_point(0, pts.rows() - 1);
          const auto src = pts.row(pick_point(model.rng));
          std::copy(src.begin(), src.end(), real.row(i).begin());
        }
        const grad::Tensor z = latent_batch(batch, latent, model.rng);
        const grad::Tensor fake = model.sample(z, ids);

        grad::Tape tape;
        auto real_scores = net::discriminator_forward(model.discriminator, tape, tape.constant(std::move(real)), ids);
        auto fake_scores = net::discriminator_forward(model.discriminator, tape, tape.constant(fake), ids);
        auto loss = net::hinge_d_loss(real_scores, fake_scores);
        sum_d += loss.value().item();
        ++n_d;
        const auto grads = tape.backward(loss, d_params);
        grad::adam_step(d_params, grads, model.opt_d, config.lr_d);
      }

      stage = "generator";
      draw_classes(slot, ids);
      const grad::Tensor z = latent_batch(batch, latent, model.rng);
      grad::Tape tape;
      grad::Var fake = model.with_resolver([&](net::ClassResolver& r) {
        return net::generator_forward(model.generator, tape, tape.constant(z), ids, r, track_filters);
      });
      auto scores = net::discriminator_forward(model.discriminator, tape, fake, ids, /*track=*/false);
      grad::Var loss = net::hinge_g_loss(scores);
      sum_g += loss.value().item();
      ++n_g;
      if (model.block && model.phase == Phase::transfer) loss = grad::add(loss, model.block->regularization_loss(tape));
      const auto grads = tape.backward(loss, g_params);
      grad::adam_step(g_params, grads, model.opt_g, config.lr_g);
    } catch (const NumericError& e) {
      throw TrainingAbort("training aborted at step " + std::to_string(it) + " (" + stage + " update): " + e.what());
    } catch (const DomainError& e) {
      throw TrainingAbort("training aborted at step " + std::to_string(it) + " (" + stage + " update): " + e.what());
    }
    model.iteration = it;

    if (it % config.eval_every == 0 || it == config.iterations) {
      EvalPoint p;
      p.iteration = it;
      p.rows = evaluate_classes(model, task, classes, config.eval_samples, eval_seed, result.record.run_id,
                                config.kmmd_samples, config.k_sigma);
      p.loss_d = n_d ? sum_d / static_cast<double>(n_d) : 0.0;
      p.loss_g = n_g ? sum_g / static_cast<double>(n_g) : 0.0;
      p.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      sum_d = sum_g = 0.0;
      n_d = n_g = 0;
      double mean = 0.0;
      for (const auto& r : p.rows) mean += r.frechet;
      mean /= static_cast<double>(p.rows.size());
      result.record.points.push_back(std::move(p));
      if (mean < best) {
        best = mean;
        result.best_model = model;
      }
    }
  }
  result.final_model = std::move(model);
  return result;
}

TrainResult pretrain(const data::Task& task, const TrainConfig& config, const net::GeneratorSpec& gspec,
                     const net::DiscriminatorSpec& dspec) {
  config.validate();
  if (config.phase != Phase::pretrain) throw ConfigError("pretrain: config phase must be pretrain");
  net::GeneratorSpec gs = gspec;
  gs.num_classes = task.sources.size();
  net::DiscriminatorSpec ds = dspec;
  ds.num_classes = task.sources.size();
  ds.input_dim = 2;
  gs.output_dim = 2;
  Model model = init_model(gs, ds, task.config.fingerprint(), config.seed);
  return run_training(std::move(model), task, range(0, task.sources.size()), source_training_data(task), config);
}

Model prepare_transfer(const Model& pretrained, const data::Task& task, const TrainConfig& config) {
  config.validate();
  if (config.phase != Phase::transfer) throw ConfigError("transfer: config phase must be transfer");
  if (pretrained.mode != Mode::pretrained) throw ConfigError("transfer: input checkpoint is not a pretrained model");
  if (pretrained.task_fingerprint != task.config.fingerprint()) {
    throw ConfigError("transfer: task fingerprint mismatch (checkpoint was pretrained on a different task)");
  }
  const std::size_t n = task.sources.size(), m = task.targets.size();
  if (pretrained.num_source != n) throw ConfigError("transfer: source class count mismatch");

  Model model = pretrained;
  model.mode = config.mode;
  model.phase = Phase::transfer;
  model.num_target = m;
  model.iteration = 0;
  model.seed = config.seed;
  model.rng.seed(data::derive_seed(config.seed, kTagTransfer));
  // Pretraining moments belong to a different trainable set.
  reset_optimizers(model, config);

  switch (config.mode) {
    case Mode::propagate:
      model.block.emplace(model.generator.bank, config.transfer_config(n, m));
      model.discriminator.extend_classes(m, model.rng);
      break;
    case Mode::bsa:
    case Mode::transfergan:
      model.fresh.emplace(model.generator.spec.hidden, m);
      model.discriminator.extend_classes(m, model.rng);
      break;
    case Mode::scratch: {
      net::GeneratorSpec gs = model.generator.spec;
      gs.num_classes = n + m;
      net::DiscriminatorSpec ds = model.discriminator.spec;
      ds.num_classes = n + m;
      model.generator = net::Generator::init(gs, model.rng);
      model.discriminator = net::Discriminator::init(ds, model.rng);
      break;
    }
    case Mode::pretrained:
      throw ConfigError("transfer: mode must be one of scratch, transfergan, bsa, propagate");
  }
  return model;
}

TrainResult transfer_train(const Model& pretrained, const data::Task& task, const TrainConfig& config) {
  Model model = prepare_transfer(pretrained, task, config);
  const std::size_t n = task.sources.size();
  return run_training(std::move(model), task, range(n, n + task.targets.size()), target_training_data(task), config);
}

TrainResult finetune(const Model& transferred, const data::Task& task, const TrainConfig& config) {
  config.validate();
  if (transferred.mode != Mode::propagate || !transferred.block) {
    throw ConfigError("finetune: input checkpoint was produced by mode=" + std::string(mode_name(transferred.mode)) +
                      ", expected propagate");
  }
  if (transferred.task_fingerprint != task.config.fingerprint()) throw ConfigError("finetune: task fingerprint mismatch");
  if (config.iterations == 0) return TrainResult{transferred, transferred, RunRecord{run_id_for(config), {}}};

  Model model = transferred;
  model.phase = Phase::finetune;
  model.iteration = 0;
  model.seed = config.seed;
  model.rng.seed(data::derive_seed(config.seed, kTagFinetune));
  model.block->enable_residuals();
  const std::size_t n = task.sources.size();
  return run_training(std::move(model), task, range(n, n + task.targets.size()), target_training_data(task), config);
}

}  // namespace cgt::train
