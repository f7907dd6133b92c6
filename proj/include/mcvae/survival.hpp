#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mcvae::survival {

struct Outcome {
  double time = 0.0;
  std::uint8_t event = 0;
};

struct Concordance {
  double concordant = 0.0;  // ties in risk count 1/2
  std::size_t comparable = 0;

  std::optional<double> index() const {
    if (comparable == 0) return std::nullopt;
    return concordant / static_cast<double>(comparable);
  }
};

/// Harrell's pair counts. A pair is comparable when the earlier time is an
/// event, or the times tie with exactly one event (the censored patient
/// survived at least as long). Two tied events are not comparable.
Concordance concordance(std::span<const double> risks, std::span<const Outcome> outcomes);

/// Harrell's C-index; nullopt when no pair is comparable.
std::optional<double> c_index(std::span<const double> risks, std::span<const Outcome> outcomes);

/// Breslow cumulative baseline hazard as a right-continuous step function.
class BaselineHazard {
 public:
  BaselineHazard(std::vector<double> event_times, std::vector<double> cumulative)
      : times_(std::move(event_times)), cumulative_(std::move(cumulative)) {}

  double cumulative_hazard(double t) const;
  /// S(t | f) = exp(-H0(t) exp(f)).
  double survival(double t, double log_hazard) const;

  const std::vector<double>& event_times() const { return times_; }
  const std::vector<double>& cumulative() const { return cumulative_; }

 private:
  std::vector<double> times_;
  std::vector<double> cumulative_;
};

/// Throws std::invalid_argument when there is no event.
BaselineHazard breslow_baseline(std::span<const double> log_hazards, std::span<const Outcome> outcomes);

}  // namespace mcvae::survival
