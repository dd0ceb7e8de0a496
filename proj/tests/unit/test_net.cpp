#include "doctest.h"

#include <cmath>
#include <random>

#include "../common/gradcheck.hpp"
#include "cgt/errors.hpp"
#include "cgt/net/cbn.hpp"
#include "cgt/net/discriminator.hpp"
#include "cgt/net/generator.hpp"

using namespace cgt;
using namespace cgt::grad;
using namespace cgt::net;

namespace {

AffineTables tables_of(Tape& t, const Tensor& gamma, const Tensor& beta) {
  return {t.constant(gamma), t.constant(beta)};
}

// Plain-loop reference for one generator forward pass.
std::vector<std::vector<double>> trace_generator(const Generator& g, const std::vector<std::vector<double>>& z,
                                                 const std::vector<std::size_t>& ids) {
  auto h = z;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const Tensor& w = g.weights[l].value;
    const std::size_t out = w.cols();
    std::vector<std::vector<double>> a(h.size(), std::vector<double>(out, 0.0));
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < out; ++j)
        for (std::size_t k = 0; k < h[i].size(); ++k) a[i][j] += h[i][k] * w(k, j);
    for (std::size_t j = 0; j < out; ++j) {
      double mu = 0.0, var = 0.0;
      for (auto& r : a) mu += r[j];
      mu /= static_cast<double>(a.size());
      for (auto& r : a) var += (r[j] - mu) * (r[j] - mu);
      var /= static_cast<double>(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double n = (a[i][j] - mu) / std::sqrt(var + g.bank[l].eps);
        const double y = g.bank[l].gamma.value(ids[i], j) * n + g.bank[l].beta.value(ids[i], j);
        a[i][j] = y > 0.0 ? y : g.spec.leaky_slope * y;
      }
    }
    h = std::move(a);
  }
  std::vector<std::vector<double>> out(h.size(), std::vector<double>(g.spec.output_dim));
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < g.spec.output_dim; ++j) {
      double acc = g.out_bias.value[j];
      for (std::size_t k = 0; k < h[i].size(); ++k) acc += h[i][k] * g.out_weight.value(k, j);
      out[i][j] = g.spec.output_scale * std::tanh(acc);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("cbn on a constant batch returns beta") {
  Tape t;
  const Tensor gamma = Tensor::matrix({{3.0, -2.0}, {0.5, 7.0}});
  const Tensor beta = Tensor::matrix({{0.25, -1.5}, {4.0, 2.0}});
  const std::vector<std::size_t> ids{0, 1, 1};
  Var out = cbn_forward(t.constant(Tensor::matrix({{1.5, -2.0}, {1.5, -2.0}, {1.5, -2.0}})), ids,
                        tables_of(t, gamma, beta), 1e-5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.value()(i, 0) == beta(ids[i], 0));
    CHECK(out.value()(i, 1) == beta(ids[i], 1));
  }
}

TEST_CASE("cbn scalar evaluation") {
  Tape t;
  const std::vector<std::size_t> ids{0, 0};
  Var out = cbn_forward(t.constant(Tensor::matrix({{1}, {3}})), ids,
                        tables_of(t, Tensor::matrix({{2}}), Tensor::matrix({{1}})), 1e-5);
  CHECK(std::abs(out.value()(0, 0) + 0.99999) < 1e-4);
  CHECK(std::abs(out.value()(1, 0) - 2.99999) < 1e-4);
}

TEST_CASE("cbn with identity affine normalizes") {
  std::mt19937_64 rng(5);
  Tape t;
  const Tensor x = gaussian_tensor({16, 3}, 2.0, rng);
  const std::vector<std::size_t> ids(16, 0);
  Var out = cbn_forward(t.constant(x), ids, tables_of(t, Tensor::matrix(1, 3, 1.0), Tensor::matrix(1, 3, 0.0)), 1e-5);
  const Tensor in_var = var_rows(t.constant(x)).value();
  const Tensor mu = mean_rows(out).value();
  const Tensor var = var_rows(out).value();
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(mu[j]) < 1e-9);
    CHECK(std::sqrt(var[j]) == doctest::Approx(std::sqrt(in_var[j] / (in_var[j] + 1e-5))).epsilon(1e-9));
  }
}

TEST_CASE("cbn errors") {
  Tape t;
  const AffineTables tab = tables_of(t, Tensor::matrix(2, 1, 1.0), Tensor::matrix(2, 1, 0.0));
  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(cbn_forward(t.constant(Tensor::matrix({{1}})), one, tab, 1e-5), ShapeError);
  const std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(cbn_forward(t.constant(Tensor::matrix({{1}, {2}})), bad, tab, 1e-5), IndexError);
  const std::vector<std::size_t> ok{0, 1};
  CHECK_THROWS_AS(cbn_forward(t.constant(Tensor::matrix({{1, 2}, {2, 3}})), ok, tab, 1e-5), ShapeError);
}

TEST_CASE("cbn gradients match finite differences") {
  std::mt19937_64 rng(9);
  Parameter x{"x", gaussian_tensor({6, 3}, 1.0, rng)};
  Parameter gamma{"gamma", gaussian_tensor({2, 3}, 1.0, rng)};
  Parameter beta{"beta", gaussian_tensor({2, 3}, 1.0, rng)};
  const std::vector<std::size_t> ids{0, 1, 1, 0, 1, 0};
  const Tensor probe = gaussian_tensor({6, 3}, 1.0, rng);
  auto build = [&](Tape& t) {
    Var y = cbn_forward(t.param(x), ids, {t.param(gamma), t.param(beta)}, 1e-5);
    return sum(mul(tanh(y), t.constant(probe)));
  };
  const auto r = testing::check_gradients(build, {&x, &gamma, &beta});
  CHECK(r.checked > 0);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("generator is deterministic per row") {
  std::mt19937_64 rng(0);
  GeneratorSpec spec;
  Generator g = Generator::init(spec, rng);
  Tensor z(Shape{4, spec.latent_dim});
  const Tensor row = gaussian_tensor({spec.latent_dim}, 1.0, rng);
  for (std::size_t i = 0; i < 4; ++i) std::copy(row.data().begin(), row.data().end(), z.row(i).begin());
  BankResolver r(g.bank, false);
  const std::vector<std::size_t> ids(4, 3);
  const Tensor out = generate(g, z, ids, r);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(out(i, 0) == out(0, 0));
    CHECK(out(i, 1) == out(0, 1));
  }
}

namespace {

class CopyResolver final : public ClassResolver {
 public:
  explicit CopyResolver(const std::vector<CBNLayer>& bank) : bank_(bank) {}
  std::size_t num_classes() const override { return bank_.front().num_classes(); }
  AffineTables tables(Tape& tape, std::size_t layer) override {
    return {tape.constant(bank_[layer].gamma.value), tape.constant(bank_[layer].beta.value)};
  }

 private:
  std::vector<CBNLayer> bank_;
};

}  // namespace

TEST_CASE("resolvers with the same rows give bitwise-identical output") {
  std::mt19937_64 rng(2);
  Generator g = Generator::init(GeneratorSpec{}, rng);
  for (auto& layer : g.bank) {
    layer.gamma.value = gaussian_tensor(layer.gamma.value.shape(), 1.0, rng);
    layer.beta.value = gaussian_tensor(layer.beta.value.shape(), 1.0, rng);
  }
  const Tensor z = gaussian_tensor({10, g.spec.latent_dim}, 1.0, rng);
  const std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5, 6, 7, 0, 1};
  BankResolver a(g.bank, true);
  CopyResolver b(g.bank);
  CHECK(bitwise_equal(generate(g, z, ids, a), generate(g, z, ids, b)));
}

TEST_CASE("generator matches a hand-traced forward pass") {
  std::mt19937_64 rng(0);
  GeneratorSpec spec;
  spec.hidden = {5, 4};
  spec.latent_dim = 3;
  spec.num_classes = 2;
  Generator g = Generator::init(spec, rng);
  for (auto& layer : g.bank) {
    layer.gamma.value = gaussian_tensor(layer.gamma.value.shape(), 1.0, rng);
    layer.beta.value = gaussian_tensor(layer.beta.value.shape(), 1.0, rng);
  }
  g.out_bias.value = gaussian_tensor({2}, 0.3, rng);
  const std::vector<std::vector<double>> z{{0, 0, 0}, {0.4, -1.2, 0.9}, {1.1, 0.3, -0.2}};
  const std::vector<std::size_t> ids{0, 1, 0};
  Tensor zt(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) zt(i, j) = z[i][j];
  BankResolver r(g.bank, false);
  const Tensor out = generate(g, zt, ids, r);
  const auto ref = trace_generator(g, z, ids);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(out(i, j) - ref[i][j]) < 1e-10);
}

TEST_CASE("generator gradients match finite differences") {
  std::mt19937_64 rng(4);
  GeneratorSpec spec;
  spec.hidden = {4, 3};
  spec.latent_dim = 2;
  spec.num_classes = 3;
  Generator g = Generator::init(spec, rng);
  for (auto& layer : g.bank) {
    layer.gamma.value = gaussian_tensor(layer.gamma.value.shape(), 1.0, rng);
    layer.beta.value = gaussian_tensor(layer.beta.value.shape(), 0.5, rng);
  }
  const Tensor z = gaussian_tensor({6, 2}, 1.0, rng);
  const std::vector<std::size_t> ids{0, 1, 2, 0, 1, 2};
  std::vector<Parameter*> ps = g.filter_parameters();
  for (Parameter* p : g.bank_parameters()) ps.push_back(p);
  auto build = [&](Tape& t) {
    BankResolver r(g.bank, true);
    return mean(square(generator_forward(g, t, t.constant(z), ids, r)));
  };
  const auto res = testing::check_gradients(build, ps);
  CHECK(res.checked > 20);
  CHECK_MESSAGE(res.max_rel_error < 1e-4, res.worst);
}

TEST_CASE("frozen filters receive no gradient") {
  std::mt19937_64 rng(4);
  Generator g = Generator::init(GeneratorSpec{}, rng);
  const Tensor z = gaussian_tensor({8, g.spec.latent_dim}, 1.0, rng);
  const std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5, 6, 7};
  Tape t;
  BankResolver r(g.bank, true);
  Var loss = mean(generator_forward(g, t, t.constant(z), ids, r, false));
  const auto fp = g.filter_parameters();
  const Gradients grads = t.backward(loss, fp);
  for (Parameter* p : fp) CHECK(grads.of(*p) == Tensor(p->value.shape(), 0.0));
}

TEST_CASE("projection discriminator") {
  std::mt19937_64 rng(1);
  DiscriminatorSpec spec;
  spec.hidden = {4, 3};
  spec.num_classes = 3;
  Discriminator d = Discriminator::init(spec, rng);
  for (auto& b : d.biases) b.value = gaussian_tensor(b.value.shape(), 0.3, rng);
  d.head_bias.value = Tensor::vector({0.7});
  const Tensor x = Tensor::matrix({{0.5, -1.0}, {2.0, 0.25}});
  const std::vector<std::size_t> ids{2, 0};

  SUBCASE("matches a direct oracle") {
    Tape t;
    Var phi = discriminator_features(d, t, t.constant(x));
    const Tensor s = discriminator_forward(d, t, t.constant(x), ids).value();
    for (std::size_t i = 0; i < 2; ++i) {
      double psi = d.head_bias.value[0], proj = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        psi += phi.value()(i, k) * d.head_weight.value(k, 0);
        proj += phi.value()(i, k) * d.embedding.value(ids[i], k);
      }
      CHECK(std::abs(s[i] - (psi + proj)) < 1e-10);
    }
  }
  SUBCASE("zero embedding gives the unconditional head") {
    d.embedding.value.fill(0.0);
    Tape t;
    Var phi = discriminator_features(d, t, t.constant(x));
    const Tensor s = discriminator_forward(d, t, t.constant(x), ids).value();
    for (std::size_t i = 0; i < 2; ++i) {
      double psi = d.head_bias.value[0];
      for (std::size_t k = 0; k < 3; ++k) psi += phi.value()(i, k) * d.head_weight.value(k, 0);
      CHECK(std::abs(s[i] - psi) < 1e-12);
    }
  }
  SUBCASE("zero features give psi(0)") {
    for (auto& b : d.biases) b.value.fill(0.0);
    Tape t;
    const Tensor s = discriminator_forward(d, t, t.constant(Tensor::matrix(2, 2, 0.0)), ids).value();
    CHECK(s[0] == 0.7);
    CHECK(s[1] == 0.7);
  }
  SUBCASE("unknown class") {
    Tape t;
    const std::vector<std::size_t> bad{0, 3};
    CHECK_THROWS_AS(discriminator_forward(d, t, t.constant(x), bad), IndexError);
  }
  SUBCASE("extending appends rows and keeps the old ones") {
    const Tensor before = d.embedding.value;
    d.extend_classes(2, rng);
    CHECK(d.num_classes() == 5);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(d.embedding.value[i] == before[i]);
  }
}

TEST_CASE("hinge losses") {
  Tape t;
  auto v = [&](std::initializer_list<double> xs) { return t.constant(Tensor::vector(xs)); };
  CHECK(hinge_d_loss(v({2, 3}), v({-2, -3})).value().item() == 0.0);
  CHECK(hinge_g_loss(v({-2, -3})).value().item() == 2.5);
  CHECK(hinge_d_loss(v({0}), v({0})).value().item() == 2.0);
  CHECK(hinge_g_loss(v({0})).value().item() == 0.0);
  CHECK(hinge_d_loss(v({0.5, -0.5}), v({0.2})).value().item() == doctest::Approx(2.2).epsilon(1e-14));
}

TEST_CASE("discriminator loss gradients match finite differences") {
  std::mt19937_64 rng(8);
  DiscriminatorSpec spec;
  spec.hidden = {5, 4};
  spec.num_classes = 3;
  Discriminator d = Discriminator::init(spec, rng);
  const Tensor real = gaussian_tensor({5, 2}, 1.0, rng);
  const Tensor fake = gaussian_tensor({5, 2}, 1.0, rng);
  const std::vector<std::size_t> ids{0, 1, 2, 1, 0};
  auto build = [&](Tape& t) {
    return hinge_d_loss(discriminator_forward(d, t, t.constant(real), ids),
                        discriminator_forward(d, t, t.constant(fake), ids));
  };
  const auto r = testing::check_gradients(build, d.parameters());
  CHECK(r.checked > 0);
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}
