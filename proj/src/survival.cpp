#include "mcvae/survival.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mcvae::survival {

Concordance concordance(std::span<const double> risks, std::span<const Outcome> outcomes) {
  if (risks.size() != outcomes.size()) {
    throw std::invalid_argument("concordance: " + std::to_string(risks.size()) + " risks for " +
                                std::to_string(outcomes.size()) + " outcomes");
  }
  Concordance c;
  const std::size_t n = risks.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool earlier = outcomes[i].time < outcomes[j].time;
      const bool tied_vs_censored = outcomes[i].time == outcomes[j].time && !outcomes[j].event;
      if (!earlier && !tied_vs_censored) continue;
      ++c.comparable;
      if (risks[i] > risks[j]) {
        c.concordant += 1.0;
      } else if (risks[i] == risks[j]) {
        c.concordant += 0.5;
      }
    }
  }
  return c;
}

std::optional<double> c_index(std::span<const double> risks, std::span<const Outcome> outcomes) {
  return concordance(risks, outcomes).index();
}

double BaselineHazard::cumulative_hazard(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0.0;
  return cumulative_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double BaselineHazard::survival(double t, double log_hazard) const {
  return std::exp(-cumulative_hazard(t) * std::exp(log_hazard));
}

BaselineHazard breslow_baseline(std::span<const double> log_hazards, std::span<const Outcome> outcomes) {
  if (log_hazards.size() != outcomes.size()) throw std::invalid_argument("breslow: size mismatch");
  const std::size_t n = outcomes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return outcomes[a].time < outcomes[b].time; });

  // Suffix sums of exp(f) give the risk-set denominators.
  std::vector<double> at_risk(n + 1, 0.0);
  for (std::size_t p = n; p-- > 0;) at_risk[p] = at_risk[p + 1] + std::exp(log_hazards[order[p]]);

  std::vector<double> times;
  std::vector<double> cumulative;
  double h = 0.0;
  for (std::size_t p = 0; p < n;) {
    const double t = outcomes[order[p]].time;
    std::size_t q = p;
    double deaths = 0.0;
    while (q < n && outcomes[order[q]].time == t) deaths += outcomes[order[q++]].event;
    if (deaths > 0.0) {
      h += deaths / at_risk[p];
      times.push_back(t);
      cumulative.push_back(h);
    }
    p = q;
  }
  if (times.empty()) throw std::invalid_argument("breslow: no events to estimate a baseline hazard");
  return BaselineHazard(std::move(times), std::move(cumulative));
}

}  // namespace mcvae::survival
