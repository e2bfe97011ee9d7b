#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace surpnov::stats {

/// Kahan-Babuska (Neumaier) compensated summation.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double mean(std::span<const double> xs);

struct Correlation {
  double coefficient = 0.0;
  /// Two-sided, from the t statistic with n-2 degrees of freedom.
  double p = 1.0;
  std::size_t n = 0;
};

/// Product-moment correlation. Throws StatsError if sizes differ, n < 3, or
/// either input has zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> xs);

/// pearson(average_ranks(x), average_ranks(y)).
Correlation spearman(std::span<const double> x, std::span<const double> y);

struct MannWhitney {
  std::size_t n_novel = 0;
  std::size_t n_conventional = 0;
  /// Pair counts over all novel x conventional pairs.
  std::uint64_t wins = 0;
  std::uint64_t losses = 0;
  std::uint64_t ties = 0;
  /// U statistic of the novel group: wins + ties/2.
  double u = 0.0;
  double rank_biserial = 0.0;
  double auc = 0.0;
  double p = 1.0;
  bool exact_p = false;
};

/// Largest pooled sample for which the p-value is enumerated exactly.
inline constexpr std::size_t kExactPooledLimit = 20;

/// Mann-Whitney U with rank-biserial effect size and AUC (ties weigh 0.5).
/// Throws StatsError if either group is empty.
MannWhitney mann_whitney(std::span<const double> novel,
                         std::span<const double> conventional);

/// Two-sided exact permutation p-value of U under H0, from the frequency
/// distribution of first-group rank sums (mid-ranks when tied) built by a
/// subset-sum recursion.
double exact_u_pvalue(std::span<const double> novel, std::span<const double> conventional);

/// Two-sided normal approximation with tie and continuity corrections.
double normal_u_pvalue(std::span<const double> novel, std::span<const double> conventional);

enum class GainMode { relative, absolute_points };

/// relative: 100 (variant - base) / |base|; absolute_points: 100 (variant - base).
double gain_percent(double base, double variant, GainMode mode);

}  // namespace surpnov::stats
