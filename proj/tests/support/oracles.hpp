#pragma once

// Independent reference implementations used only by the tests. Each one is
// written from the textbook definition with explicit loops and shares no code
// with the library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mcvae/autodiff.hpp"
#include "mcvae/rng.hpp"

namespace oracle {

using mcvae::ad::Tensor;

// -- finite differences ------------------------------------------------------

struct GradCheck {
  double worst_relative = 0.0;  // over entries whose absolute gap exceeds the floor
  double worst_absolute = 0.0;
  std::size_t checked = 0;
  bool ok(double rel_tol = 1e-4) const { return worst_relative < rel_tol; }
};

inline constexpr double kStep = 1e-5;
inline constexpr double kAbsoluteFloor = 1e-6;

/// Compares backward() against central differences for every entry of every
/// tensor in `params`. `loss` must rebuild the graph from the current values
/// on each call (and reseed any randomness it uses).
inline GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                 std::size_t max_entries_per_param = 40) {
  for (auto& p : params) p.zero_grad();
  mcvae::ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    const auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }
  GradCheck out;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    const std::size_t n = values.size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_entries_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const double up = loss().item();
      values[i] = saved - kStep;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double a = analytic[pi][i];
      const double gap = std::abs(a - numeric);
      out.worst_absolute = std::max(out.worst_absolute, gap);
      if (gap > kAbsoluteFloor) {
        out.worst_relative = std::max(out.worst_relative, gap / std::max(std::abs(a), std::abs(numeric)));
      }
      ++out.checked;
    }
  }
  for (auto& p : params) p.zero_grad();
  return out;
}

inline Tensor random_parameter(mcvae::ad::Shape shape, mcvae::Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(mcvae::ad::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::parameter(std::move(shape), std::move(v));
}

// -- Cox partial likelihood ----------------------------------------------------

/// -sum over events of [f_i - log sum_{j: t_j >= t_i} exp f_j], risk sets materialized.
inline double cox(const std::vector<double>& f, const std::vector<double>& t, const std::vector<int>& d) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!d[i]) continue;
    std::vector<std::size_t> risk;
    for (std::size_t j = 0; j < f.size(); ++j)
      if (t[j] >= t[i]) risk.push_back(j);
    double s = 0.0;
    for (auto j : risk) s += std::exp(f[j]);
    total -= f[i] - std::log(s);
  }
  return total;
}

// -- Gaussian KL ------------------------------------------------------------------

inline double gaussian_kl(const std::vector<double>& mu, const std::vector<double>& log_var) {
  double s = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    const double var = std::exp(log_var[d]);
    s += mu[d] * mu[d] + var - log_var[d] - 1.0;
  }
  return 0.5 * s;
}

// -- InfoNCE ------------------------------------------------------------------------

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

/// z[i][k] is the latent of patient i, modality k, or nullopt when absent.
/// Mean over positive pairs of -log(exp(s_pos/tau) / sum_{others} exp(s/tau)).
inline double info_nce(const std::vector<std::vector<std::optional<std::vector<double>>>>& z, double tau) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t k = 0; k < z[i].size(); ++k) {
      if (!z[i][k]) continue;
      double denominator = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j)
        for (std::size_t m = 0; m < z[j].size(); ++m) {
          if (!z[j][m] || (j == i && m == k)) continue;
          denominator += std::exp(cosine(*z[i][k], *z[j][m]) / tau);
        }
      for (std::size_t l = 0; l < z[i].size(); ++l) {
        if (l == k || !z[i][l]) continue;
        total -= std::log(std::exp(cosine(*z[i][k], *z[i][l]) / tau) / denominator);
        ++pairs;
      }
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

// -- concordance -----------------------------------------------------------------------

struct PairCount {
  double concordant = 0.0;
  std::size_t comparable = 0;
};

/// Every ordered pair (i, j): comparable when i has an event and either
/// t_i < t_j, or t_i == t_j with j censored.
inline PairCount harrell(const std::vector<double>& risk, const std::vector<double>& t, const std::vector<int>& d) {
  PairCount out;
  for (std::size_t i = 0; i < risk.size(); ++i)
    for (std::size_t j = 0; j < risk.size(); ++j) {
      if (i == j || !d[i]) continue;
      const bool comparable = t[i] < t[j] || (t[i] == t[j] && !d[j]);
      if (!comparable) continue;
      ++out.comparable;
      if (risk[i] > risk[j]) out.concordant += 1.0;
      else if (risk[i] == risk[j]) out.concordant += 0.5;
    }
  return out;
}

// -- Breslow ----------------------------------------------------------------------------

inline double breslow_cumulative(const std::vector<double>& f, const std::vector<double>& t,
                                 const std::vector<int>& d, double at) {
  std::vector<double> event_times;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (d[i] && t[i] <= at) event_times.push_back(t[i]);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());
  double h = 0.0;
  for (double s : event_times) {
    double deaths = 0.0, risk = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (d[j] && t[j] == s) deaths += 1.0;
      if (t[j] >= s) risk += std::exp(f[j]);
    }
    h += deaths / risk;
  }
  return h;
}

// -- rank statistics ---------------------------------------------------------------------

/// Average ranks, rank 1 for the largest value.
inline std::vector<double> ranks_desc(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double greater = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] > v[i]) greater += 1.0;
      if (v[j] == v[i]) equal += 1.0;
    }
    r[i] = greater + (equal + 1.0) / 2.0;
  }
  return r;
}

/// Friedman chi-square (no tie correction) from row-wise brute-force ranks.
inline double friedman_statistic(const std::vector<std::vector<double>>& rows) {
  const double n = static_cast<double>(rows.size());
  const double k = static_cast<double>(rows.front().size());
  std::vector<double> rank_sum(rows.front().size(), 0.0);
  for (const auto& row : rows) {
    const auto r = ranks_desc(row);
    for (std::size_t j = 0; j < r.size(); ++j) rank_sum[j] += r[j];
  }
  double s = 0.0;
  for (double rs : rank_sum) s += rs * rs;
  return 12.0 / (n * k * (k + 1.0)) * s - 3.0 * n * (k + 1.0);
}

/// Exact one-sided P(W+ >= observed) by enumerating all 2^n sign patterns of
/// ranks 1..n (no ties).
inline double wilcoxon_exact_greater(std::size_t n, double w_observed) {
  std::size_t hits = 0;
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    double w = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      if (mask >> b & 1U) w += static_cast<double>(b + 1);
    if (w >= w_observed) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(patterns);
}

// -- AdamW ---------------------------------------------------------------------------------

struct AdamScalar {
  double lr, beta1, beta2, eps, decay;
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double param, double g) {
    ++t;
    param -= lr * decay * param;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, t));
    const double v_hat = v / (1.0 - std::pow(beta2, t));
    return param - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace oracle
