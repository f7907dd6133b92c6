#include <doctest/doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mcvae/stats.hpp"
#include "support/oracles.hpp"

using namespace mcvae;

namespace {

stats::FoldResults table(const std::vector<std::vector<double>>& rows) {
  stats::FoldResults r;
  for (std::size_t j = 0; j < rows.front().size(); ++j) r.configurations.push_back("cfg" + std::to_string(j));
  for (std::size_t i = 0; i < rows.size(); ++i) r.blocks.push_back("b" + std::to_string(i));
  r.values = rows;
  return r;
}

std::vector<std::vector<double>> random_rows(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(k));
  for (auto& row : rows)
    for (auto& v : row) v = 0.5 + 0.05 * static_cast<double>(rng.below(6));
  return rows;
}

}  // namespace

TEST_CASE("friedman identical columns") {
  const auto r = stats::friedman_test(table({{0.6, 0.6, 0.6}, {0.7, 0.7, 0.7}, {0.55, 0.55, 0.55}}));
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("friedman dominating column") {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({0.8 + 0.001 * i, 0.6, 0.5 - 0.001 * i});
  const auto r = stats::friedman_test(table(rows));
  CHECK(r.statistic == doctest::Approx(oracle::friedman_statistic(rows)).epsilon(1e-12));
  CHECK(r.statistic == doctest::Approx(20.0));  // n (k - 1) for a total order
  CHECK(r.mean_ranks == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(r.p_value == doctest::Approx(std::exp(-10.0)).epsilon(1e-10));  // chi2 with 2 dof
}

TEST_CASE("friedman without ties matches brute force, permutation and row shift") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> rows(8, std::vector<double>(4));
    for (auto& row : rows)
      for (auto& v : row) v = rng.uniform();
    const double s = stats::friedman_test(table(rows)).statistic;
    CHECK(s == doctest::Approx(oracle::friedman_statistic(rows)).epsilon(1e-12));
    auto permuted = rows;
    for (auto& row : permuted) std::swap(row[0], row[3]);
    CHECK(stats::friedman_test(table(permuted)).statistic == doctest::Approx(s).epsilon(1e-14));
    auto shifted = rows;
    for (auto& v : shifted[2]) v += 0.25;
    CHECK(stats::friedman_test(table(shifted)).statistic == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("friedman rejects incomplete blocks") {
  auto t = table({{0.5, std::nan("")}, {0.6, 0.7}, {0.6, 0.8}});
  CHECK_THROWS_AS((void)stats::friedman_test(t), stats::IncompleteBlock);
  CHECK(t.complete_blocks().rows() == 2);
}

TEST_CASE("nemenyi shape, identity and rank differences") {
  Rng rng(6);
  const auto rows = random_rows(rng, 10, 3);
  const auto r = stats::nemenyi_posthoc(table(rows));
  std::vector<double> expected(3, 0.0);
  for (const auto& row : rows) {
    const auto rk = oracle::ranks_desc(row);
    for (std::size_t j = 0; j < 3; ++j) expected[j] += rk[j] / 10.0;
  }
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.mean_ranks[j] == doctest::Approx(expected[j]).epsilon(1e-14));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.p_values[i][i] == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(r.p_values[i][j] == r.p_values[j][i]);
  }
  const auto same = stats::nemenyi_posthoc(table({{0.5, 0.5}, {0.6, 0.6}, {0.7, 0.7}}));
  CHECK(same.p_values[0][1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("studentized range reference values") {
  // Tabulated upper 5% points for infinite degrees of freedom.
  CHECK(stats::studentized_range_quantile(0.95, 2) == doctest::Approx(2.772).epsilon(1e-3));
  CHECK(stats::studentized_range_quantile(0.95, 3) == doctest::Approx(3.314).epsilon(1e-3));
  CHECK(stats::studentized_range_quantile(0.95, 8) == doctest::Approx(4.286).epsilon(1e-3));
  // k = 2: range of two normals is sqrt(2)|N|
  CHECK(stats::studentized_range_cdf(1.5, 2) == doctest::Approx(1.0 - 2.0 * stats::normal_sf(1.5 / std::sqrt(2.0))).epsilon(1e-8));
}

TEST_CASE("wilcoxon exact minimum p for ten positive differences") {
  std::vector<double> d(10);
  for (std::size_t i = 0; i < 10; ++i) d[i] = 0.01 * static_cast<double>(i + 1);
  const auto r = stats::wilcoxon_signed_rank(d, stats::Alternative::kGreater);
  CHECK(r.exact);
  CHECK(r.w_plus == 55.0);
  CHECK(r.p_value == doctest::Approx(oracle::wilcoxon_exact_greater(10, 55.0)).epsilon(1e-15));
  CHECK(r.p_value == doctest::Approx(1.0 / 1024.0).epsilon(1e-15));
  CHECK(std::abs(r.p_value - 0.00098) < 1e-5);
}

TEST_CASE("wilcoxon exact distribution against enumeration") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng.below(10);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = (rng.bernoulli(0.5) ? 1.0 : -1.0) * (1.0 + static_cast<double>(i));
    const auto r = stats::wilcoxon_signed_rank(d, stats::Alternative::kGreater);
    CHECK(r.p_value == doctest::Approx(oracle::wilcoxon_exact_greater(n, r.w_plus)).epsilon(1e-12));
    const auto less = stats::wilcoxon_signed_rank(d, stats::Alternative::kLess);
    const double max_w = static_cast<double>(n * (n + 1) / 2);
    CHECK(less.p_value == doctest::Approx(oracle::wilcoxon_exact_greater(n, max_w - r.w_plus)).epsilon(1e-12));
  }
}

TEST_CASE("wilcoxon normal approximation and untestable input") {
  std::vector<double> d(40);
  for (std::size_t i = 0; i < 40; ++i) d[i] = (i % 3 == 0 ? -1.0 : 1.0) * static_cast<double>(i + 1);
  const auto r = stats::wilcoxon_signed_rank(d, stats::Alternative::kGreater);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 0.5);
  CHECK_THROWS_AS((void)stats::wilcoxon_signed_rank(std::vector<double>(10, 0.0), stats::Alternative::kGreater),
                  stats::Untestable);
  CHECK_THROWS_AS((void)stats::wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 0, 0, 0}, stats::Alternative::kGreater),
                  stats::Untestable);
}

TEST_CASE("holm adjustment") {
  CHECK(stats::holm_adjust(std::vector<double>{0.03}) == std::vector<double>{0.03});
  const std::vector<double> p{0.04, 0.01, 0.03, 0.2};
  const auto adj = stats::holm_adjust(p);
  CHECK(adj[1] == doctest::Approx(0.04));
  CHECK(adj[2] == doctest::Approx(0.09));
  CHECK(adj[0] == doctest::Approx(0.09));
  CHECK(adj[3] == doctest::Approx(0.2));
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(1 + rng.below(8));
    for (auto& v : q) v = rng.uniform();
    const auto a = stats::holm_adjust(q);
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(a[i] >= q[i]);
      CHECK(a[i] <= 1.0);
      for (std::size_t j = 0; j < q.size(); ++j)
        if (q[i] < q[j]) CHECK(a[i] <= a[j]);
    }
  }
}

TEST_CASE("wilcoxon_holm marks untestable comparisons") {
  const std::vector<std::vector<double>> diffs{{1, 2, 3, 4, 5, 6}, {0, 0, 0, 0, 0, 0}, {1, -2, 3, 4, 5, 6}};
  const auto out = stats::wilcoxon_holm(diffs, stats::Alternative::kGreater);
  CHECK(out[0].testable);
  CHECK_FALSE(out[1].testable);
  CHECK_FALSE(out[1].reason.empty());
  CHECK(out[0].adjusted_p >= out[0].wilcoxon.p_value);
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(stats::mean(x) == 2.5);
  CHECK(stats::stddev(x) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(stats::stddev(std::vector<double>{1.0}) == 0.0);
}
