#include <doctest/doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "mcvae/losses.hpp"
#include "support/oracles.hpp"

using namespace mcvae;
using ad::Tensor;

namespace {

std::optional<double> cox_value(const std::vector<double>& f, const std::vector<double>& t,
                                const std::vector<std::uint8_t>& d) {
  const auto loss = losses::cox_loss(Tensor::constant({f.size(), 1}, f), t, d);
  if (!loss) return std::nullopt;
  return loss->item();
}

ModalityLatent latent(std::vector<std::size_t> rows, std::size_t batch, Tensor mu, Tensor log_var, Tensor z) {
  ModalityLatent l;
  l.z_full = ad::scatter_rows(z, rows, batch);
  l.rows = std::move(rows);
  l.mu = std::move(mu);
  l.log_var = std::move(log_var);
  l.z = std::move(z);
  return l;
}

}  // namespace

TEST_CASE("cox single event patient") {
  CHECK(*cox_value({1.7}, {2.0}, {1}) == 0.0);
}

TEST_CASE("cox two events hand value") {
  CHECK(*cox_value({0.0, 0.0}, {1.0, 2.0}, {1, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("cox shift invariance and monotonicity") {
  Rng rng(3);
  const std::vector<double> t{3.0, 1.0, 2.0, 2.0, 5.0, 4.0};
  const std::vector<std::uint8_t> d{1, 1, 0, 1, 0, 1};
  std::vector<double> f(6);
  for (auto& x : f) x = rng.uniform(-2.0, 2.0);
  const double base = *cox_value(f, t, d);
  auto shifted = f;
  for (auto& x : shifted) x += 3.25;
  CHECK(std::abs(*cox_value(shifted, t, d) - base) < 1e-9);
  auto raised = f;
  raised[1] += 0.3;  // event patient
  CHECK(*cox_value(raised, t, d) < base);
}

TEST_CASE("cox no-event batch is signalled") {
  CHECK_FALSE(cox_value({0.1, 0.2}, {1.0, 2.0}, {0, 0}).has_value());
  CHECK_THROWS_AS((void)cox_value({0.1}, {0.0}, {1}), std::invalid_argument);
}

TEST_CASE("cox matches brute force with ties") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> f(n), t(n);
    std::vector<std::uint8_t> d(n);
    std::vector<int> di(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = rng.uniform(-3.0, 3.0);
      t[i] = 1.0 + static_cast<double>(rng.below(5));  // frequent ties
      d[i] = rng.bernoulli(0.6);
      di[i] = d[i];
    }
    const auto got = cox_value(f, t, d);
    if (std::count(d.begin(), d.end(), 1) == 0) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    CHECK(std::abs(*got - oracle::cox(f, t, di)) < 1e-10);
  }
}

TEST_CASE("cox gradient") {
  Rng rng(5);
  auto f = oracle::random_parameter({7, 1}, rng);
  const std::vector<double> t{1, 2, 2, 3, 5, 4, 6};
  const std::vector<std::uint8_t> d{1, 0, 1, 1, 0, 1, 0};
  CHECK(oracle::check_gradients([&] { return *losses::cox_loss(f, t, d); }, {f}).ok());
}

TEST_CASE("reconstruction loss values") {
  const auto x = Tensor::constant({1, 2}, {1.0, 0.0});
  const auto zero = Tensor::constant({1, 2}, 0.0);
  const std::vector<losses::ModalityReconstruction> one{{x, zero}};
  CHECK(losses::reconstruction_loss(one, 1).item() == 1.0);
  const std::vector<losses::ModalityReconstruction> perfect{{x, x}};
  CHECK(losses::reconstruction_loss(perfect, 1).item() == 0.0);
  CHECK(losses::reconstruction_loss(std::span<const losses::ModalityReconstruction>{}, 4).item() == 0.0);
}

TEST_CASE("reconstruction dense mask excludes rows and gradients") {
  auto recon = Tensor::parameter({3, 2}, {1.0, 1.0, 5.0, 5.0, 2.0, 0.0});
  const auto target = Tensor::constant({3, 2}, 0.0);
  const auto loss = losses::reconstruction_loss({target}, {recon}, {{1, 0, 1}});
  CHECK(loss.item() == doctest::Approx((2.0 + 4.0) / 3.0));
  ad::backward(loss);
  CHECK(recon.grad()[2] == 0.0);
  CHECK(recon.grad()[3] == 0.0);
  CHECK(recon.grad()[0] != 0.0);
}

TEST_CASE("kl loss closed form") {
  const std::size_t d = 5;
  const auto logits = Tensor::constant({2}, {0.3, -0.2});
  const double w0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-0.2));
  std::vector<ModalityLatent> ls;
  ls.push_back(latent({0}, 1, Tensor::constant({1, d}, 1.0), Tensor::constant({1, d}, 0.0), Tensor::constant({1, d}, 1.0)));
  ls.push_back(missing_latent(1, d));
  CHECK(losses::kl_loss(ls, logits, 1).item() == doctest::Approx(w0 * d / 2.0).epsilon(1e-14));

  ls[0] = latent({0}, 1, Tensor::constant({1, d}, 0.0), Tensor::constant({1, d}, 0.0), Tensor::constant({1, d}, 0.0));
  CHECK(losses::kl_loss(ls, logits, 1).item() == 0.0);

  const auto eq = ad::softmax(Tensor::constant({1, 4}, 0.7), 1);
  for (double v : eq.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("kl loss matches oracle on random posteriors") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng.below(6), d = 1 + rng.below(5), k = 1 + rng.below(4);
    std::vector<double> logits(k);
    for (auto& v : logits) v = rng.uniform(-1.0, 1.0);
    double zsum = 0.0;
    for (double v : logits) zsum += std::exp(v);
    std::vector<ModalityLatent> ls;
    double expected = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < b; ++r)
        if (rng.bernoulli(0.7)) rows.push_back(r);
      if (rows.empty()) {
        ls.push_back(missing_latent(b, d));
        continue;
      }
      std::vector<double> mu(rows.size() * d), lv(rows.size() * d);
      for (auto& v : mu) v = rng.uniform(-2.0, 2.0);
      for (auto& v : lv) v = rng.uniform(-2.0, 2.0);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        expected += std::exp(logits[m]) / zsum *
                    oracle::gaussian_kl({mu.begin() + r * d, mu.begin() + (r + 1) * d},
                                        {lv.begin() + r * d, lv.begin() + (r + 1) * d});
      }
      const auto mu_t = Tensor::constant({rows.size(), d}, mu);
      ls.push_back(latent(rows, b, mu_t, Tensor::constant({rows.size(), d}, lv), mu_t));
    }
    const double got = losses::kl_loss(ls, Tensor::constant({k}, logits), b).item();
    CHECK(std::abs(got - expected / static_cast<double>(b)) < 1e-10);
  }
}

TEST_CASE("contrastive loss worked example") {
  // patient 0 along e1 in both modalities, patient 1 along e2
  const auto z = Tensor::constant({2, 2}, {1.0, 0.0, 0.0, 1.0});
  std::vector<ModalityLatent> ls{latent({0, 1}, 2, z, z, z), latent({0, 1}, 2, z, z, z)};
  const double e = std::exp(1.0);
  CHECK(losses::contrastive_loss(ls, 1.0).item() == doctest::Approx(-std::log(e / (e + 2.0))).epsilon(1e-14));
  CHECK(-std::log(e / (e + 2.0)) == doctest::Approx(0.5514).epsilon(1e-4));
}

TEST_CASE("contrastive loss edge cases") {
  const auto z = Tensor::constant({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 0.0});
  std::vector<ModalityLatent> only_one{latent({0, 1}, 2, z, z, z), missing_latent(2, 3)};
  CHECK(losses::contrastive_loss(only_one, 0.1).item() == 0.0);
  const auto z1 = Tensor::constant({1, 3}, {1.0, 2.0, 3.0});
  std::vector<ModalityLatent> disjoint{latent({0}, 2, z1, z1, z1), latent({1}, 2, z1, z1, z1)};
  CHECK(losses::contrastive_loss(disjoint, 0.1).item() == 0.0);
  CHECK_THROWS_AS((void)losses::contrastive_loss(only_one, 0.0), std::invalid_argument);
}

TEST_CASE("contrastive loss decreases as positives align") {
  auto make = [](double angle) {
    const auto a = Tensor::constant({2, 2}, {1.0, 0.0, -1.0, 0.2});
    const auto b = Tensor::constant({2, 2}, {std::cos(angle), std::sin(angle), -1.0, 0.3});
    return std::vector<ModalityLatent>{latent({0, 1}, 2, a, a, a), latent({0, 1}, 2, b, b, b)};
  };
  const double wide = losses::contrastive_loss(make(1.2), 0.5).item();
  const double narrow = losses::contrastive_loss(make(0.4), 0.5).item();
  CHECK(narrow < wide);
}

TEST_CASE("contrastive loss matches brute force") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng.below(4), d = 2 + rng.below(3), k = 4;
    const double tau = rng.uniform(0.05, 2.0);
    std::vector<std::vector<std::optional<std::vector<double>>>> ref(b, std::vector<std::optional<std::vector<double>>>(k));
    std::vector<ModalityLatent> ls;
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<std::size_t> rows;
      std::vector<double> values;
      for (std::size_t r = 0; r < b; ++r) {
        if (!rng.bernoulli(0.6)) continue;
        rows.push_back(r);
        std::vector<double> v(d);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        values.insert(values.end(), v.begin(), v.end());
        ref[r][m] = v;
      }
      if (rows.empty()) {
        ls.push_back(missing_latent(b, d));
        continue;
      }
      const auto zt = Tensor::constant({rows.size(), d}, values);
      ls.push_back(latent(rows, b, zt, zt, zt));
    }
    CHECK(std::abs(losses::contrastive_loss(ls, tau).item() - oracle::info_nce(ref, tau)) < 1e-10);
  }
}

TEST_CASE("beta schedule") {
  CHECK(losses::beta_schedule(0, 30, 1.0) == 0.0);
  CHECK(losses::beta_schedule(15, 30, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(losses::beta_schedule(30, 30, 0.106) == 0.106);
  CHECK(losses::beta_schedule(75, 30, 1.0) == 1.0);
  CHECK_THROWS_AS((void)losses::beta_schedule(1, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("total loss with unit variances is half the sum") {
  losses::LossComponents c{Tensor::scalar(1.5), Tensor::scalar(2.0), Tensor::scalar(0.25), Tensor::scalar(4.0)};
  const auto out = losses::total_loss(c, Tensor::parameter({4}, {0, 0, 0, 0}), 0.5);
  CHECK(out.breakdown.total == doctest::Approx(0.5 * (1.5 + 2.0 + 0.25 + 4.0)).epsilon(1e-15));
  CHECK(out.breakdown.weights[0] == 0.5);
  CHECK(out.breakdown.beta == 0.5);
}

TEST_CASE("total loss algebra and s gradient") {
  Rng rng(41);
  auto s = oracle::random_parameter({4}, rng, -1.0, 1.0);
  const double L[] = {1.2, 0.3, 2.5, 0.9};
  const losses::LossComponents c{Tensor::scalar(L[0]), Tensor::scalar(L[1]), Tensor::scalar(L[2]), Tensor::scalar(L[3])};
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) expected += std::exp(-s.values()[i]) / 2.0 * L[i] + s.values()[i] / 2.0;
  CHECK(std::abs(losses::total_loss(c, s, 1.0).breakdown.total - expected) < 1e-10);
  CHECK(oracle::check_gradients([&] { return losses::total_loss(c, s, 1.0).total; }, {s}).ok());
}

TEST_CASE("minimizing over s gives log L") {
  const double L[] = {0.7, 3.0, 0.05, 1.0};
  auto s = Tensor::parameter({4}, {0, 0, 0, 0});
  const losses::LossComponents c{Tensor::scalar(L[0]), Tensor::scalar(L[1]), Tensor::scalar(L[2]), Tensor::scalar(L[3])};
  // Newton steps on the separable objective exp(-s) L / 2 + s / 2
  for (int it = 0; it < 60; ++it) {
    s.zero_grad();
    ad::backward(losses::total_loss(c, s, 1.0).total);
    auto v = s.mutable_values();
    for (int i = 0; i < 4; ++i) v[i] -= s.grad()[i] / (std::exp(-v[i]) * L[i] / 2.0);
  }
  for (int i = 0; i < 4; ++i) CHECK(s.values()[i] == doctest::Approx(std::log(L[i])).epsilon(1e-10));
}

TEST_CASE("skipped task term and non-finite components") {
  losses::LossComponents c{std::nullopt, Tensor::scalar(2.0), Tensor::scalar(0.0), Tensor::scalar(1.0)};
  const auto out = losses::total_loss(c, Tensor::parameter({4}, {5.0, 0, 0, 0}), 1.0);
  CHECK(out.breakdown.task_skipped);
  CHECK(out.breakdown.total == doctest::Approx(1.5));
  c.kl = Tensor::scalar(std::nan(""));
  try {
    (void)losses::total_loss(c, Tensor::parameter({4}, {0, 0, 0, 0}), 1.0);
    FAIL("expected rejection");
  } catch (const losses::NonFiniteLoss& e) {
    CHECK(e.component() == "kl");
  }
}
