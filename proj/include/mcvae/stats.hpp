#pragma once

// Model-comparison statistics over fold-level C-index values.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcvae::stats {

/// Rows are blocks (fold x seed), columns are configurations. NaN marks a
/// missing cell.
struct FoldResults {
  std::vector<std::string> configurations;
  std::vector<std::string> blocks;
  std::vector<std::vector<double>> values;  // [block][configuration]

  std::size_t rows() const { return values.size(); }
  std::size_t cols() const { return configurations.size(); }
  /// Drops every block with a missing cell.
  FoldResults complete_blocks() const;
};

class IncompleteBlock : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Untestable : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Average ranks within one block, rank 1 for the largest value.
std::vector<double> rank_descending(std::span<const double> values);

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> mean_ranks;
};

/// Tie-corrected Friedman chi-square with k-1 degrees of freedom.
FriedmanResult friedman_test(const FoldResults& results);

struct NemenyiResult {
  std::vector<double> mean_ranks;
  std::vector<std::vector<double>> p_values;  // symmetric, unit diagonal
  double critical_difference = 0.0;           // at alpha = 0.05
};

NemenyiResult nemenyi_posthoc(const FoldResults& results);

/// CDF of the studentized range of k standard normals (infinite df).
double studentized_range_cdf(double q, std::size_t k);
/// Inverse of studentized_range_cdf by bisection.
double studentized_range_quantile(double probability, std::size_t k);

double chi_square_sf(double x, double dof);
double normal_sf(double z);

enum class Alternative { kGreater, kLess, kTwoSided };

struct WilcoxonResult {
  double w_plus = 0.0;
  std::size_t n = 0;  // nonzero differences used
  double p_value = 1.0;
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonMinimumPairs = 5;
inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Signed-rank test on paired differences. Zeros are dropped; exact null
/// for n <= 25, normal approximation with continuity and tie correction
/// above. Throws Untestable with fewer than 5 nonzero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences, Alternative alternative);

/// Holm step-down adjustment; output aligned with input.
std::vector<double> holm_adjust(std::span<const double> p_values);

struct ComparisonTest {
  bool testable = false;
  std::string reason;
  WilcoxonResult wilcoxon;
  double adjusted_p = 1.0;
};

/// One signed-rank test per comparison, Holm-adjusted across the testable ones.
std::vector<ComparisonTest> wilcoxon_holm(const std::vector<std::vector<double>>& differences,
                                          Alternative alternative);

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1); zero for fewer than two values.
double stddev(std::span<const double> xs);

}  // namespace mcvae::stats
