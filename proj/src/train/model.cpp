#include "cgt/train/model.hpp"

#include <cstdio>
#include <sstream>

#include "cgt/data/synth.hpp"
#include "cgt/errors.hpp"

namespace cgt::train {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  return out;
}

double parse_double(const Checkpoint& ck, const std::string& key) { return std::stod(ck.require_meta(key)); }
std::uint64_t parse_u64(const Checkpoint& ck, const std::string& key) { return std::stoull(ck.require_meta(key)); }
bool parse_bool(const Checkpoint& ck, const std::string& key) { return ck.require_meta(key) == "1"; }

void put_params(Checkpoint& ck, const std::vector<grad::Parameter*>& params) {
  for (const grad::Parameter* p : params) {
    if (!ck.tensors.emplace(p->name, p->value).second) {
      throw FormatError("checkpoint: duplicate tensor name '" + p->name + "'");
    }
  }
}

void get_params(const Checkpoint& ck, const std::vector<grad::Parameter*>& params) {
  for (grad::Parameter* p : params) {
    const grad::Tensor& t = ck.require_tensor(p->name);
    if (!t.same_shape(p->value)) {
      throw FormatError("checkpoint: tensor '" + p->name + "' has shape " + grad::shape_string(t.shape()) +
                        ", expected " + grad::shape_string(p->value.shape()));
    }
    p->value = t;
  }
}

void put_adam(Checkpoint& ck, const std::string& tag, const grad::AdamState& st,
              const std::vector<grad::Parameter*>& params) {
  ck.meta["opt." + tag + ".step"] = fmt_u64(static_cast<std::uint64_t>(st.step));
  ck.meta["opt." + tag + ".beta1"] = fmt_double(st.beta1);
  ck.meta["opt." + tag + ".beta2"] = fmt_double(st.beta2);
  ck.meta["opt." + tag + ".eps"] = fmt_double(st.eps);
  if (st.first_moment.empty()) return;
  if (st.first_moment.size() != params.size()) throw FormatError("checkpoint: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.tensors["opt." + tag + ".m:" + params[i]->name] = st.first_moment[i];
    ck.tensors["opt." + tag + ".v:" + params[i]->name] = st.second_moment[i];
  }
}

grad::AdamState get_adam(const Checkpoint& ck, const std::string& tag, const std::vector<grad::Parameter*>& params) {
  grad::AdamState st;
  st.step = static_cast<std::int64_t>(parse_u64(ck, "opt." + tag + ".step"));
  st.beta1 = parse_double(ck, "opt." + tag + ".beta1");
  st.beta2 = parse_double(ck, "opt." + tag + ".beta2");
  st.eps = parse_double(ck, "opt." + tag + ".eps");
  if (params.empty() || !ck.tensors.contains("opt." + tag + ".m:" + params.front()->name)) return st;
  for (const grad::Parameter* p : params) {
    st.first_moment.push_back(ck.require_tensor("opt." + tag + ".m:" + p->name));
    st.second_moment.push_back(ck.require_tensor("opt." + tag + ".v:" + p->name));
  }
  return st;
}

}  // namespace

std::string_view mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::pretrained: return "pretrained";
    case Mode::scratch: return "scratch";
    case Mode::transfergan: return "transfergan";
    case Mode::bsa: return "bsa";
    case Mode::propagate: return "propagate";
  }
  return "unknown";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::pretrained, Mode::scratch, Mode::transfergan, Mode::bsa, Mode::propagate}) {
    if (mode_name(m) == s) return m;
  }
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

std::string_view phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::pretrain: return "pretrain";
    case Phase::transfer: return "transfer";
    case Phase::finetune: return "finetune";
  }
  return "unknown";
}

Phase parse_phase(std::string_view s) {
  for (Phase p : {Phase::pretrain, Phase::transfer, Phase::finetune}) {
    if (phase_name(p) == s) return p;
  }
  throw ConfigError("unknown phase '" + std::string(s) + "'");
}

std::vector<std::size_t> Model::evaluated_classes() const {
  std::vector<std::size_t> out;
  const std::size_t first = mode == Mode::scratch ? num_source : 0;
  for (std::size_t c = first; c < total_classes(); ++c) out.push_back(c);
  return out;
}

std::vector<std::size_t> Model::generation_group(std::size_t class_id) const {
  if (class_id >= total_classes()) {
    throw IndexError("class " + std::to_string(class_id) + " absent from checkpoint (" +
                     std::to_string(total_classes()) + " classes)");
  }
  if (mode == Mode::scratch && class_id < num_source) {
    throw IndexError("class " + std::to_string(class_id) + " absent from scratch checkpoint");
  }
  std::vector<std::size_t> out;
  const bool is_new = class_id >= num_source;
  const std::size_t lo = is_new ? num_source : 0;
  const std::size_t hi = is_new ? total_classes() : num_source;
  for (std::size_t c = lo; c < hi; ++c) out.push_back(c);
  return out;
}

bool Model::filters_trainable() const {
  switch (mode) {
    case Mode::pretrained:
    case Mode::scratch:
    case Mode::transfergan:
      return true;
    case Mode::bsa:
      return false;
    case Mode::propagate:
      return phase == Phase::finetune;
  }
  return false;
}

bool Model::bank_trainable() const {
  return mode == Mode::pretrained || mode == Mode::scratch || mode == Mode::transfergan;
}

std::vector<grad::Parameter*> Model::generator_trainables() {
  std::vector<grad::Parameter*> out;
  if (filters_trainable()) out = generator.filter_parameters();
  if (bank_trainable()) {
    for (auto* p : generator.bank_parameters()) out.push_back(p);
  }
  if (fresh && (mode == Mode::bsa || mode == Mode::transfergan)) {
    for (auto* p : fresh->parameters()) out.push_back(p);
  }
  if (block) {
    if (phase == Phase::finetune) {
      for (std::size_t l = 0; l < block->num_layers(); ++l) {
        out.push_back(&block->residuals(l, transfer::ParamKind::gamma));
        out.push_back(&block->residuals(l, transfer::ParamKind::beta));
      }
    } else {
      for (auto* p : block->trainable_parameters()) out.push_back(p);
    }
  }
  return out;
}

std::vector<grad::Parameter*> Model::discriminator_trainables() { return discriminator.parameters(); }

grad::Tensor Model::sample(const grad::Tensor& z, const std::vector<std::size_t>& class_ids) {
  return with_resolver([&](net::ClassResolver& r) { return net::generate(generator, z, class_ids, r); });
}

Checkpoint Model::to_checkpoint() const {
  Model& self = const_cast<Model&>(*this);  // parameter accessors are non-const; nothing is mutated
  Checkpoint ck;
  auto& m = ck.meta;
  m["format"] = "cgt-model";
  m["mode"] = mode_name(mode);
  m["phase"] = phase_name(phase);
  m["num_source"] = fmt_u64(num_source);
  m["num_target"] = fmt_u64(num_target);
  m["task_fingerprint"] = fmt_u64(task_fingerprint);
  m["seed"] = fmt_u64(seed);
  m["iteration"] = fmt_u64(iteration);

  const auto& gs = generator.spec;
  m["gen.latent_dim"] = fmt_u64(gs.latent_dim);
  m["gen.hidden"] = fmt_list(gs.hidden);
  m["gen.output_dim"] = fmt_u64(gs.output_dim);
  m["gen.num_classes"] = fmt_u64(gs.num_classes);
  m["gen.eps"] = fmt_double(gs.eps);
  m["gen.leaky_slope"] = fmt_double(gs.leaky_slope);
  m["gen.output_scale"] = fmt_double(gs.output_scale);
  const auto& ds = discriminator.spec;
  m["disc.input_dim"] = fmt_u64(ds.input_dim);
  m["disc.hidden"] = fmt_list(ds.hidden);
  m["disc.num_classes"] = fmt_u64(ds.num_classes);
  m["disc.leaky_slope"] = fmt_double(ds.leaky_slope);

  put_params(ck, self.generator.filter_parameters());
  put_params(ck, self.generator.bank_parameters());
  put_params(ck, self.discriminator.parameters());
  if (block) {
    const auto& c = block->config();
    m["transfer.kind"] = "propagate";
    m["transfer.lambda_r"] = fmt_double(c.lambda_r);
    m["transfer.lambda_s"] = fmt_double(c.lambda_s);
    m["transfer.prior_tunable"] = c.prior_tunable ? "1" : "0";
    m["transfer.residuals_enabled"] = c.residuals_enabled ? "1" : "0";
    m["transfer.shared_scores"] = c.shared_scores ? "1" : "0";
    m["transfer.use_l1"] = c.use_l1 ? "1" : "0";
    m["transfer.use_l2"] = c.use_l2 ? "1" : "0";
    put_params(ck, self.block->all_parameters());
  } else if (fresh) {
    m["transfer.kind"] = "fresh";
    put_params(ck, self.fresh->parameters());
  } else {
    m["transfer.kind"] = "none";
  }
  put_adam(ck, "g", opt_g, self.generator_trainables());
  put_adam(ck, "d", opt_d, self.discriminator_trainables());
  std::ostringstream rs;
  rs << rng;
  m["rng"] = rs.str();
  return ck;
}

Model Model::from_checkpoint(const Checkpoint& ck) {
  if (ck.require_meta("format") != "cgt-model") throw FormatError("checkpoint: not a model checkpoint");
  Model model;
  model.mode = parse_mode(ck.require_meta("mode"));
  model.phase = parse_phase(ck.require_meta("phase"));
  model.num_source = parse_u64(ck, "num_source");
  model.num_target = parse_u64(ck, "num_target");
  model.task_fingerprint = parse_u64(ck, "task_fingerprint");
  model.seed = parse_u64(ck, "seed");
  model.iteration = parse_u64(ck, "iteration");

  net::GeneratorSpec gs;
  gs.latent_dim = parse_u64(ck, "gen.latent_dim");
  gs.hidden = parse_list(ck.require_meta("gen.hidden"));
  gs.output_dim = parse_u64(ck, "gen.output_dim");
  gs.num_classes = parse_u64(ck, "gen.num_classes");
  gs.eps = parse_double(ck, "gen.eps");
  gs.leaky_slope = parse_double(ck, "gen.leaky_slope");
  gs.output_scale = parse_double(ck, "gen.output_scale");
  net::DiscriminatorSpec ds;
  ds.input_dim = parse_u64(ck, "disc.input_dim");
  ds.hidden = parse_list(ck.require_meta("disc.hidden"));
  ds.num_classes = parse_u64(ck, "disc.num_classes");
  ds.leaky_slope = parse_double(ck, "disc.leaky_slope");

  std::mt19937_64 scratch_rng(0);
  model.generator = net::Generator::init(gs, scratch_rng);
  model.discriminator = net::Discriminator::init(ds, scratch_rng);
  get_params(ck, model.generator.filter_parameters());
  get_params(ck, model.generator.bank_parameters());
  get_params(ck, model.discriminator.parameters());

  const std::string& kind = ck.require_meta("transfer.kind");
  if (kind == "propagate") {
    transfer::TransferConfig c;
    c.num_source = model.num_source;
    c.num_target = model.num_target;
    c.lambda_r = parse_double(ck, "transfer.lambda_r");
    c.lambda_s = parse_double(ck, "transfer.lambda_s");
    c.prior_tunable = parse_bool(ck, "transfer.prior_tunable");
    c.residuals_enabled = parse_bool(ck, "transfer.residuals_enabled");
    c.shared_scores = parse_bool(ck, "transfer.shared_scores");
    c.use_l1 = parse_bool(ck, "transfer.use_l1");
    c.use_l2 = parse_bool(ck, "transfer.use_l2");
    model.block.emplace(model.generator.bank, c);
    get_params(ck, model.block->all_parameters());
  } else if (kind == "fresh") {
    model.fresh.emplace(gs.hidden, model.num_target);
    get_params(ck, model.fresh->parameters());
  } else if (kind != "none") {
    throw FormatError("checkpoint: unknown transfer kind '" + kind + "'");
  }
  model.opt_g = get_adam(ck, "g", model.generator_trainables());
  model.opt_d = get_adam(ck, "d", model.discriminator_trainables());
  std::istringstream rs(ck.require_meta("rng"));
  rs >> model.rng;
  if (!rs) throw FormatError("checkpoint: corrupt rng state");
  return model;
}

Model init_model(const net::GeneratorSpec& gspec, const net::DiscriminatorSpec& dspec, std::uint64_t task_fingerprint,
                 std::uint64_t seed) {
  Model model;
  model.mode = Mode::pretrained;
  model.phase = Phase::pretrain;
  model.num_source = gspec.num_classes;
  model.num_target = 0;
  model.task_fingerprint = task_fingerprint;
  model.seed = seed;
  model.rng.seed(data::derive_seed(seed, 0x696e6974ULL));
  model.generator = net::Generator::init(gspec, model.rng);
  model.discriminator = net::Discriminator::init(dspec, model.rng);
  return model;
}

}  // namespace cgt::train
