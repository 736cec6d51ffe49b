#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "markovdiff/rng.hpp"
#include "markovdiff/stats.hpp"

#include <cmath>
#include <vector>

using namespace markovdiff;

TEST_CASE("normal cdf reference points") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-5));
  CHECK(stats::normal_cdf(-8.0) < 1e-14);
}

TEST_CASE("kolmogorov survival function reference points") {
  CHECK(stats::kolmogorov_sf(0.5) == doctest::Approx(0.9639).epsilon(1e-3));
  CHECK(stats::kolmogorov_sf(1.358) == doctest::Approx(0.05).epsilon(2e-2));
  CHECK(stats::kolmogorov_sf(0.01) == doctest::Approx(1.0));
}

TEST_CASE("one-sample ks accepts the true law and rejects a wrong one") {
  Philox gen(5, 0);
  std::vector<double> uniforms;
  for (int i = 0; i < 5000; ++i) uniforms.push_back(gen.uniform01());
  const auto ok =
      stats::ks_one_sample(uniforms, [](double x) { return x; });
  CHECK(ok.p_value > 0.01);
  const auto bad = stats::ks_one_sample(
      uniforms, [](double x) { return stats::normal_cdf(x); });
  CHECK(bad.p_value < 1e-6);
}

TEST_CASE("two-sample ks separates shifted laws") {
  Philox gen(6, 0);
  std::vector<double> a, b, c;
  for (int i = 0; i < 4000; ++i) {
    a.push_back(gen.normal());
    b.push_back(gen.normal());
    c.push_back(gen.normal() + 0.25);
  }
  CHECK(stats::ks_two_sample(a, b).p_value > 0.01);
  CHECK(stats::ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("energy distance is near zero for equal laws, positive for shifts") {
  Philox gen(7, 0);
  const int n = 1500;
  std::vector<std::vector<double>> xs, ys, zs;
  for (int i = 0; i < n; ++i) {
    xs.push_back({gen.normal(), gen.normal()});
    ys.push_back({gen.normal(), gen.normal()});
    zs.push_back({gen.normal() + 1.0, gen.normal()});
  }
  const double same = stats::energy_distance(xs, ys);
  const double shifted = stats::energy_distance(xs, zs);
  CHECK(std::abs(same) < 0.05);
  CHECK(shifted > 0.1);
  CHECK(shifted > same);
}

TEST_CASE("energy distance validates inputs") {
  std::vector<std::vector<double>> a = {{0.0}, {1.0}};
  std::vector<std::vector<double>> b = {{0.0, 1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(stats::energy_distance(a, b), std::invalid_argument);
  std::vector<std::vector<double>> tiny = {{0.0}};
  CHECK_THROWS_AS(stats::energy_distance(tiny, a), std::invalid_argument);
}

TEST_CASE("sample moments") {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const auto m = stats::sample_moments(xs);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.variance == doctest::Approx(5.0 / 3.0));
  CHECK(m.n == 4);
  CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 12.0)));
}

TEST_CASE("paired jackknife energy distance matches the plain estimator and "
          "leave-one-out recomputation") {
  Philox gen(99, 0);
  const int n = 12;
  std::vector<std::vector<double>> xs, ys;
  for (int i = 0; i < n; ++i) {
    xs.push_back({gen.normal(), gen.normal(), gen.normal()});
    ys.push_back({gen.normal() + 0.5, gen.normal(), gen.normal()});
  }
  const auto jack = stats::energy_distance_paired_jackknife(xs, ys);
  CHECK(jack.value ==
        doctest::Approx(stats::energy_distance(xs, ys)).epsilon(1e-12));
  CHECK(jack.n == n);
  // Oracle: recompute each leave-one-out estimate by brute force and apply
  // the jackknife variance formula directly.
  std::vector<double> loo;
  for (int drop = 0; drop < n; ++drop) {
    std::vector<std::vector<double>> xr, yr;
    for (int i = 0; i < n; ++i) {
      if (i == drop) continue;
      xr.push_back(xs[static_cast<size_t>(i)]);
      yr.push_back(ys[static_cast<size_t>(i)]);
    }
    loo.push_back(stats::energy_distance(xr, yr));
  }
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  const double want_se =
      std::sqrt((static_cast<double>(n) - 1.0) / static_cast<double>(n) * ss);
  CHECK(jack.std_error == doctest::Approx(want_se).epsilon(1e-10));
  std::vector<std::vector<double>> two = {{0.0}, {1.0}};
  CHECK_THROWS_AS(stats::energy_distance_paired_jackknife(two, two),
                  std::invalid_argument);
}
