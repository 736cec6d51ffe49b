#include "markovdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace markovdiff::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.05) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1) ? term : -term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_one_sample(std::vector<double> sample,
                       const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    const double hi = (static_cast<double>(i) + 1.0) / n - f;
    const double lo = f - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return KsResult{d, kolmogorov_sf(std::sqrt(n) * d)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return KsResult{d, kolmogorov_sf(std::sqrt(ne) * d)};
}

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

} // namespace

double energy_distance(const std::vector<std::vector<double>>& xs,
                       const std::vector<std::vector<double>>& ys) {
  const size_t n = xs.size();
  const size_t m = ys.size();
  if (n < 2 || m < 2) {
    throw std::invalid_argument("energy_distance: need at least 2 per sample");
  }
  if (xs[0].size() != ys[0].size()) {
    throw std::invalid_argument("energy_distance: dimension mismatch");
  }
  double cross = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      cross += euclidean(xs[i], ys[j]);
    }
  }
  double within_x = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      within_x += euclidean(xs[i], xs[j]);
    }
  }
  double within_y = 0.0;
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = i + 1; j < m; ++j) {
      within_y += euclidean(ys[i], ys[j]);
    }
  }
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return 2.0 * cross / (nd * md) - 2.0 * within_x / (nd * (nd - 1.0)) -
         2.0 * within_y / (md * (md - 1.0));
}

EnergyEstimate energy_distance_paired_jackknife(
    const std::vector<std::vector<double>>& xs,
    const std::vector<std::vector<double>>& ys) {
  const size_t n = xs.size();
  if (ys.size() != n) {
    throw std::invalid_argument(
        "energy_distance_paired_jackknife: samples must have equal size");
  }
  if (n < 3) {
    throw std::invalid_argument(
        "energy_distance_paired_jackknife: need at least 3 per sample");
  }
  if (xs[0].size() != ys[0].size()) {
    throw std::invalid_argument(
        "energy_distance_paired_jackknife: dimension mismatch");
  }
  // Row sums let each leave-one-out estimate be assembled in O(1).
  std::vector<double> cross_row(n, 0.0); // sum_j |x_i - y_j|
  std::vector<double> cross_col(n, 0.0); // sum_i |x_i - y_j|
  std::vector<double> within_x(n, 0.0);  // sum_{j != i} |x_i - x_j|
  std::vector<double> within_y(n, 0.0);
  std::vector<double> diag(n, 0.0); // |x_i - y_i|
  for (size_t i = 0; i < n; ++i) {
    diag[i] = euclidean(xs[i], ys[i]);
    for (size_t j = 0; j < n; ++j) {
      const double d = euclidean(xs[i], ys[j]);
      cross_row[i] += d;
      cross_col[j] += d;
    }
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = euclidean(xs[i], xs[j]);
      within_x[i] += dx;
      within_x[j] += dx;
      const double dy = euclidean(ys[i], ys[j]);
      within_y[i] += dy;
      within_y[j] += dy;
    }
  }
  double sum_cross = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sum_cross += cross_row[i];
    sum_x += within_x[i];
    sum_y += within_y[i];
  }
  const double nd = static_cast<double>(n);
  EnergyEstimate out;
  out.n = static_cast<int>(n);
  out.value = 2.0 * sum_cross / (nd * nd) - sum_x / (nd * (nd - 1.0)) -
              sum_y / (nd * (nd - 1.0));
  std::vector<double> loo(n, 0.0);
  const double m = nd - 1.0;
  double loo_mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double cross_i = sum_cross - cross_row[i] - cross_col[i] + diag[i];
    const double x_i = sum_x - 2.0 * within_x[i];
    const double y_i = sum_y - 2.0 * within_y[i];
    loo[i] = 2.0 * cross_i / (m * m) - x_i / (m * (m - 1.0)) -
             y_i / (m * (m - 1.0));
    loo_mean += loo[i];
  }
  loo_mean /= nd;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = loo[i] - loo_mean;
    ss += d * d;
  }
  out.std_error = std::sqrt((nd - 1.0) / nd * ss);
  return out;
}

Moments sample_moments(const std::vector<double>& xs) {
  Moments out;
  out.n = static_cast<int>(xs.size());
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double x : xs) {
      const double d = x - out.mean;
      ss += d * d;
    }
    out.variance = ss / (static_cast<double>(out.n) - 1.0);
    out.std_error = std::sqrt(out.variance / static_cast<double>(out.n));
  }
  return out;
}

} // namespace markovdiff::stats
