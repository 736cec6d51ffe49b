#pragma once

#include <functional>
#include <vector>

namespace markovdiff::stats {

double normal_cdf(double z);

// Survival function of the Kolmogorov distribution,
// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_sf(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov against a continuous CDF (asymptotic p-value).
KsResult ks_one_sample(std::vector<double> sample,
                       const std::function<double(double)>& cdf);

// Two-sample Kolmogorov-Smirnov (asymptotic p-value with effective n).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Unbiased (U-statistic) energy distance between two samples of equal
// dimension: 2 E|X-Y| - E|X-X'| - E|Y-Y'| with diagonal terms excluded.
double energy_distance(const std::vector<std::vector<double>>& xs,
                       const std::vector<std::vector<double>>& ys);

struct EnergyEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n = 0;
};

// Energy distance for equally sized samples with a delete-one jackknife
// standard error (observation i removed from both samples together, matching
// paired or coupled sampling designs). O(n^2) time, O(n) memory.
EnergyEstimate energy_distance_paired_jackknife(
    const std::vector<std::vector<double>>& xs,
    const std::vector<std::vector<double>>& ys);

struct Moments {
  double mean = 0.0;
  double variance = 0.0; // unbiased (n-1 denominator)
  int n = 0;
  double std_error = 0.0; // of the mean
};

Moments sample_moments(const std::vector<double>& xs);

} // namespace markovdiff::stats
