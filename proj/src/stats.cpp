#include "surpnov/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <boost/math/distributions/students_t.hpp>

#include "surpnov/error.hpp"

namespace surpnov::stats {

double mean(std::span<const double> xs) {
  NeumaierSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw StatsError("correlation inputs differ in length (" + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()) + ")");
  }
  const std::size_t n = x.size();
  if (n < 3) throw StatsError("correlation needs at least 3 observations");
  const double mx = mean(x);
  const double my = mean(y);
  NeumaierSum sxy, sxx, syy;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (!(sxx.value() > 0.0) || !(syy.value() > 0.0)) {
    throw StatsError("correlation undefined: zero variance");
  }
  Correlation out;
  out.n = n;
  out.coefficient =
      std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double r2 = out.coefficient * out.coefficient;
  if (r2 >= 1.0) {
    out.p = 0.0;
  } else {
    const double t = std::abs(out.coefficient) * std::sqrt(df / (1.0 - r2));
    boost::math::students_t dist(df);
    out.p = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && xs[order[j]] == xs[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw StatsError("correlation inputs differ in length (" + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()) + ")");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

void require_groups(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw StatsError("Mann-Whitney needs two nonempty groups");
  for (double v : a) {
    if (std::isnan(v)) throw StatsError("Mann-Whitney input contains NaN");
  }
  for (double v : b) {
    if (std::isnan(v)) throw StatsError("Mann-Whitney input contains NaN");
  }
}

std::vector<double> pooled(std::span<const double> a, std::span<const double> b) {
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  return all;
}

// Tolerance for comparing |U - mean| values, which are multiples of 0.5.
constexpr double kUEps = 1e-9;

}  // namespace

MannWhitney mann_whitney(std::span<const double> novel,
                         std::span<const double> conventional) {
  require_groups(novel, conventional);
  MannWhitney out;
  out.n_novel = novel.size();
  out.n_conventional = conventional.size();

  std::vector<double> sorted(conventional.begin(), conventional.end());
  std::sort(sorted.begin(), sorted.end());
  for (double v : novel) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), v);
    const auto hi = std::upper_bound(lo, sorted.end(), v);
    out.wins += static_cast<std::uint64_t>(lo - sorted.begin());
    out.ties += static_cast<std::uint64_t>(hi - lo);
    out.losses += static_cast<std::uint64_t>(sorted.end() - hi);
  }
  const double pairs = static_cast<double>(out.n_novel) * static_cast<double>(out.n_conventional);
  out.u = static_cast<double>(out.wins) + 0.5 * static_cast<double>(out.ties);
  out.auc = out.u / pairs;
  out.rank_biserial =
      (static_cast<double>(out.wins) - static_cast<double>(out.losses)) / pairs;

  out.exact_p = novel.size() + conventional.size() <= kExactPooledLimit;
  out.p = out.exact_p ? exact_u_pvalue(novel, conventional)
                      : normal_u_pvalue(novel, conventional);
  return out;
}

double exact_u_pvalue(std::span<const double> novel, std::span<const double> conventional) {
  require_groups(novel, conventional);
  const std::size_t n1 = novel.size();
  const std::size_t n = n1 + conventional.size();
  if (n > 30) throw StatsError("exact Mann-Whitney p limited to 30 pooled observations");
  const auto all = pooled(novel, conventional);
  const auto ranks = average_ranks(all);

  // Work in doubled rank sums so mid-ranks stay integral.
  long observed2 = 0;
  for (std::size_t i = 0; i < n1; ++i) observed2 += std::lround(2.0 * ranks[i]);
  const long min2 = static_cast<long>(n1 * (n1 + 1));
  const double mean_u2 = static_cast<double>(n1 * (n - n1));  // 2 * n1*n2/2
  const double obs_dev = std::abs(static_cast<double>(observed2 - min2) - mean_u2);

  // freq[s] = number of n1-subsets with doubled rank sum s.
  std::vector<long> rank2(n);
  for (std::size_t i = 0; i < n; ++i) rank2[i] = std::lround(2.0 * ranks[i]);
  const long max_sum = std::accumulate(rank2.begin(), rank2.end(), 0L);
  std::vector<std::vector<double>> freq(n1 + 1, std::vector<double>(max_sum + 1, 0.0));
  freq[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const long w = rank2[i];
    for (std::size_t k = std::min(i + 1, n1); k >= 1; --k) {
      for (long s = max_sum; s >= w; --s) freq[k][s] += freq[k - 1][s - w];
    }
  }
  double total = 0.0;
  double extreme = 0.0;
  for (long s = 0; s <= max_sum; ++s) {
    const double f = freq[n1][s];
    if (f == 0.0) continue;
    total += f;
    if (std::abs(static_cast<double>(s - min2) - mean_u2) >= obs_dev - kUEps) extreme += f;
  }
  return std::clamp(extreme / total, 0.0, 1.0);
}

double normal_u_pvalue(std::span<const double> novel, std::span<const double> conventional) {
  require_groups(novel, conventional);
  const double n1 = static_cast<double>(novel.size());
  const double n2 = static_cast<double>(conventional.size());
  const double n = n1 + n2;
  auto all = pooled(novel, conventional);
  const auto ranks = average_ranks(all);
  NeumaierSum r1;
  for (std::size_t i = 0; i < novel.size(); ++i) r1.add(ranks[i]);
  const double u = r1.value() - n1 * (n1 + 1.0) / 2.0;

  std::sort(all.begin(), all.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i + 1;
    while (j < all.size() && all[j] == all[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double dev = std::max(std::abs(u - n1 * n2 / 2.0) - 0.5, 0.0);
  return std::clamp(std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)), 0.0, 1.0);
}

double gain_percent(double base, double variant, GainMode mode) {
  if (mode == GainMode::absolute_points) return 100.0 * (variant - base);
  if (base == 0.0) throw StatsError("relative gain undefined for base 0");
  return 100.0 * (variant - base) / std::abs(base);
}

}  // namespace surpnov::stats
