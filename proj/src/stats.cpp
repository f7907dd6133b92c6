#include "mcvae/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace mcvae::stats {

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

void check_shape(const FoldResults& r, const char* who) {
  if (r.cols() < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 configurations");
  if (r.rows() < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 blocks");
  for (std::size_t i = 0; i < r.rows(); ++i) {
    if (r.values[i].size() != r.cols()) throw IncompleteBlock(std::string(who) + ": block " + std::to_string(i) + " has the wrong width");
    for (double v : r.values[i]) {
      if (std::isnan(v)) throw IncompleteBlock(std::string(who) + ": block '" + (i < r.blocks.size() ? r.blocks[i] : std::to_string(i)) + "' has a missing value");
    }
  }
}

std::vector<double> mean_ranks(const FoldResults& r) {
  std::vector<double> sums(r.cols(), 0.0);
  for (const auto& row : r.values) {
    const auto ranks = rank_descending(row);
    for (std::size_t j = 0; j < ranks.size(); ++j) sums[j] += ranks[j];
  }
  for (auto& s : sums) s /= static_cast<double>(r.rows());
  return sums;
}

// Average ranks of |d| (ascending, rank 1 smallest); ties share the mean rank.
std::vector<double> abs_ranks(std::span<const double> d, double& tie_term) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> ranks(n);
  tie_term = 0.0;
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    while (q < n && std::abs(d[order[q]]) == std::abs(d[order[p]])) ++q;
    const double avg = 0.5 * static_cast<double>(p + 1 + q);
    for (std::size_t t = p; t < q; ++t) ranks[order[t]] = avg;
    const double t = static_cast<double>(q - p);
    tie_term += t * t * t - t;
    p = q;
  }
  return ranks;
}

}  // namespace

FoldResults FoldResults::complete_blocks() const {
  FoldResults out;
  out.configurations = configurations;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::none_of(values[i].begin(), values[i].end(), [](double v) { return std::isnan(v); })) {
      out.values.push_back(values[i]);
      if (i < blocks.size()) out.blocks.push_back(blocks[i]);
    }
  }
  return out;
}

std::vector<double> rank_descending(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] > values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t p = 0; p < n;) {
    std::size_t q = p;
    while (q < n && values[order[q]] == values[order[p]]) ++q;
    const double avg = 0.5 * static_cast<double>(p + 1 + q);
    for (std::size_t t = p; t < q; ++t) ranks[order[t]] = avg;
    p = q;
  }
  return ranks;
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

FriedmanResult friedman_test(const FoldResults& results) {
  check_shape(results, "friedman");
  const double n = static_cast<double>(results.rows());
  const double k = static_cast<double>(results.cols());
  FriedmanResult out;
  out.mean_ranks = mean_ranks(results);

  double tie_sum = 0.0;
  for (const auto& row : results.values) {
    auto sorted = row;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t p = 0; p < sorted.size();) {
      std::size_t q = p;
      while (q < sorted.size() && sorted[q] == sorted[p]) ++q;
      const double t = static_cast<double>(q - p);
      tie_sum += t * t * t - t;
      p = q;
    }
  }
  const double correction = 1.0 - tie_sum / (n * (k * k * k - k));
  double ss = 0.0;
  for (double r : out.mean_ranks) ss += (r - 0.5 * (k + 1.0)) * (r - 0.5 * (k + 1.0));
  const double raw = 12.0 * n / (k * (k + 1.0)) * ss;
  if (correction <= 0.0) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.statistic = raw / correction;
  out.p_value = chi_square_sf(out.statistic, k - 1.0);
  return out;
}

double studentized_range_cdf(double q, std::size_t k) {
  if (q <= 0.0) return 0.0;
  if (k < 2) throw std::invalid_argument("studentized range needs k >= 2");
  // P(range < q) = k * integral phi(z) [Phi(z + q) - Phi(z)]^(k-1) dz, Simpson's rule.
  constexpr double lo = -9.0;
  const double hi = 9.0;
  constexpr int intervals = 4000;
  const double h = (hi - lo) / intervals;
  auto f = [&](double z) {
    return normal_pdf(z) * std::pow(normal_cdf(z + q) - normal_cdf(z), static_cast<double>(k - 1));
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return std::clamp(static_cast<double>(k) * s * h / 3.0, 0.0, 1.0);
}

double studentized_range_quantile(double probability, std::size_t k) {
  double lo = 0.0;
  double hi = 20.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (studentized_range_cdf(mid, k) < probability ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

NemenyiResult nemenyi_posthoc(const FoldResults& results) {
  check_shape(results, "nemenyi");
  const std::size_t k = results.cols();
  const double n = static_cast<double>(results.rows());
  NemenyiResult out;
  out.mean_ranks = mean_ranks(results);
  const double se = std::sqrt(static_cast<double>(k * (k + 1)) / (12.0 * n));
  out.p_values.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double q = std::abs(out.mean_ranks[i] - out.mean_ranks[j]) / se;
      const double p = std::clamp(1.0 - studentized_range_cdf(q, k), 0.0, 1.0);
      out.p_values[i][j] = out.p_values[j][i] = p;
    }
  }
  out.critical_difference = studentized_range_quantile(0.95, k) * se;
  return out;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences, Alternative alternative) {
  std::vector<double> d;
  for (double x : differences) {
    if (std::isnan(x)) throw std::invalid_argument("wilcoxon: NaN difference");
    if (x != 0.0) d.push_back(x);
  }
  if (d.empty()) throw Untestable("wilcoxon: all paired differences are zero");
  if (d.size() < kWilcoxonMinimumPairs) {
    throw Untestable("wilcoxon: only " + std::to_string(d.size()) + " nonzero differences (need " +
                     std::to_string(kWilcoxonMinimumPairs) + ")");
  }
  double tie_term = 0.0;
  const auto ranks = abs_ranks(d, tie_term);
  WilcoxonResult out;
  out.n = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) out.w_plus += ranks[i];
  }
  const double n = static_cast<double>(out.n);

  if (out.n <= kWilcoxonExactLimit) {
    // Null distribution of W+ over all 2^n sign assignments; doubled ranks are integers.
    std::vector<long> doubled(d.size());
    long total = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      doubled[i] = std::lround(2.0 * ranks[i]);
      total += doubled[i];
    }
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r : doubled) {
      for (long s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    const double denom = std::ldexp(1.0, static_cast<int>(d.size()));
    const long observed = std::lround(2.0 * out.w_plus);
    double upper = 0.0;
    double lower = 0.0;
    for (long s = 0; s <= total; ++s) {
      if (s >= observed) upper += counts[static_cast<std::size_t>(s)];
      if (s <= observed) lower += counts[static_cast<std::size_t>(s)];
    }
    upper /= denom;
    lower /= denom;
    out.exact = true;
    switch (alternative) {
      case Alternative::kGreater: out.p_value = upper; break;
      case Alternative::kLess: out.p_value = lower; break;
      case Alternative::kTwoSided: out.p_value = std::min(1.0, 2.0 * std::min(upper, lower)); break;
    }
    return out;
  }

  out.exact = false;
  const double mu = n * (n + 1.0) / 4.0;
  const double sd = std::sqrt(n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0);
  switch (alternative) {
    case Alternative::kGreater: out.p_value = normal_sf((out.w_plus - mu - 0.5) / sd); break;
    case Alternative::kLess: out.p_value = normal_cdf((out.w_plus - mu + 0.5) / sd); break;
    case Alternative::kTwoSided: {
      const double z = (std::abs(out.w_plus - mu) - 0.5) / sd;
      out.p_value = std::min(1.0, 2.0 * normal_sf(z));
      break;
    }
  }
  return out;
}

std::vector<double> holm_adjust(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double candidate = std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
    running = std::max(running, candidate);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

std::vector<ComparisonTest> wilcoxon_holm(const std::vector<std::vector<double>>& differences,
                                          Alternative alternative) {
  std::vector<ComparisonTest> out(differences.size());
  std::vector<double> raw;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < differences.size(); ++i) {
    try {
      out[i].wilcoxon = wilcoxon_signed_rank(differences[i], alternative);
      out[i].testable = true;
      raw.push_back(out[i].wilcoxon.p_value);
      slots.push_back(i);
    } catch (const Untestable& e) {
      out[i].reason = e.what();
    }
  }
  const auto adjusted = holm_adjust(raw);
  for (std::size_t j = 0; j < slots.size(); ++j) out[slots[j]].adjusted_p = adjusted[j];
  return out;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace mcvae::stats
