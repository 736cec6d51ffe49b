#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "markovdiff/models.hpp"
#include "markovdiff/quadrature.hpp"
#include "markovdiff/rng.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace markovdiff;

namespace {

const std::vector<double> kProbeXs = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};

double central_diff(const RealFn& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

} // namespace

TEST_CASE("built-in coefficient derivatives match finite differences") {
  for (const auto& mod :
       {unit_model(), zero_drift_model(), smooth_model(0.7, 0.4), ou_model()}) {
    for (double x : kProbeXs) {
      CHECK(std::abs(mod.m_prime(x) - central_diff(mod.m, x)) < 1e-6);
      CHECK(std::abs(mod.m_second(x) - central_diff(mod.m_prime, x)) < 1e-6);
      CHECK(std::abs(mod.sigma_prime(x) - central_diff(mod.sigma, x)) < 1e-6);
      CHECK(std::abs(mod.sigma_second(x) - central_diff(mod.sigma_prime, x)) <
            1e-6);
    }
  }
}

TEST_CASE("declared variance band holds on the probe grid") {
  for (const auto& mod :
       {unit_model(), zero_drift_model(), smooth_model(0.3, 0.3), ou_model()}) {
    CHECK(mod.sigma2_lower > 0.0);
    for (double x : kProbeXs) {
      const double s2 = mod.sigma(x) * mod.sigma(x);
      CHECK(s2 >= mod.sigma2_lower - 1e-12);
      CHECK(s2 <= mod.sigma2_upper + 1e-12);
    }
  }
}

TEST_CASE("state-to-unit-diffusion map with constant coefficient") {
  CHECK(lamperti_S(unit_model(), 2.0) == doctest::Approx(2.0).epsilon(1e-12));

  CoefficientModel twice = unit_model();
  twice.sigma = [](double) { return 2.0; };
  twice.sigma2_lower = 4.0;
  twice.sigma2_upper = 4.0;
  CHECK(lamperti_S(twice, 3.0) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("state map matches a brute-force trapezoid oracle") {
  const CoefficientModel mod = smooth_model(0.0, 0.5);
  // Independent oracle: 1e6-panel trapezoid of 1/sigma over [0, 1].
  const int panels = 1000000;
  const double dx = 1.0 / panels;
  double acc = 0.5 * (1.0 / mod.sigma(0.0) + 1.0 / mod.sigma(1.0));
  for (int i = 1; i < panels; ++i) {
    acc += 1.0 / mod.sigma(i * dx);
  }
  const double oracle = acc * dx;
  CHECK(std::abs(lamperti_S(mod, 1.0) - oracle) < 1e-8);
}

TEST_CASE("state map is strictly monotone") {
  const CoefficientModel mod = smooth_model(0.4, 0.5);
  double prev = lamperti_S(mod, kProbeXs.front());
  for (size_t i = 1; i < kProbeXs.size(); ++i) {
    const double cur = lamperti_S(mod, kProbeXs[i]);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("transformed drift and potential at constant coefficients") {
  const CoefficientModel mod = unit_model();
  CHECK(drift_potential_C(mod, 0.7) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(potential_g(mod, 0.7) == doctest::Approx(-0.5).epsilon(1e-12));

  const CoefficientModel zero = zero_drift_model();
  CHECK(drift_potential_C(zero, 1.3) == doctest::Approx(0.0));
  CHECK(potential_g(zero, 1.3) == doctest::Approx(0.0));
}

TEST_CASE("transformed drift derivative for sinusoidal drift") {
  const CoefficientModel mod = smooth_model(1.0, 0.0); // m = sin, sigma = 1
  CHECK(drift_potential_C(mod, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(drift_potential_C_prime(mod, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(potential_g(mod, 0.0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("potential agrees with finite-difference drift derivative") {
  const CoefficientModel mod = smooth_model(0.3, 0.3);
  for (double u : {-1.0, -0.3, 0.0, 0.4, 1.1}) {
    const double c = drift_potential_C(mod, u);
    const double du = 1e-5;
    const double c_prime_fd =
        (drift_potential_C(mod, u + du) - drift_potential_C(mod, u - du)) /
        (2.0 * du);
    const double g_fd = -0.5 * (c * c + c_prime_fd);
    CHECK(std::abs(potential_g(mod, u) - g_fd) < 1e-5);
  }
}

TEST_CASE("H transform closed forms") {
  CHECK(transform_H(unit_model(), 1.0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(transform_H(zero_drift_model(), 2.5) == doctest::Approx(0.0));
  // m = sin, sigma = 1: H(1) = 1 - cos(1).
  const CoefficientModel mod = smooth_model(1.0, 0.0);
  CHECK(transform_H(mod, 1.0) ==
        doctest::Approx(1.0 - std::cos(1.0)).epsilon(1e-10));
}

TEST_CASE("table-backed transform agrees with direct quadrature") {
  const CoefficientModel mod = smooth_model(0.3, 0.3);
  const Lamperti lam(mod, -8.0, 8.0, 64);
  for (double x : kProbeXs) {
    CHECK(std::abs(lam.S(x) - lamperti_S(mod, x)) < 1e-10);
    CHECK(std::abs(lam.H(x) - transform_H(mod, x)) < 1e-10);
    CHECK(lam.S_inv(lam.S(x)) == doctest::Approx(x).epsilon(1e-10));
  }
  for (double v : {-1.0, -0.2, 0.0, 0.5, 1.4}) {
    CHECK(std::abs(lam.C(v) - drift_potential_C(mod, v)) < 1e-9);
    CHECK(std::abs(lam.g(v) - potential_g(mod, v)) < 1e-9);
  }
}

TEST_CASE("skewed mixture hits its target third moment") {
  const MixtureParams params = solve_mixture(1.0, 0.25);
  CHECK(params.mu3() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(params.s > 0.0);
  // Unit variance by construction.
  const double b = params.second_mean();
  const double var = params.w * params.a * params.a +
                     (1.0 - params.w) * b * b + params.s * params.s;
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mixture solver rejects unreachable targets") {
  CHECK_THROWS_AS(solve_mixture(5.0, 0.25), std::invalid_argument);
  CHECK_THROWS_AS(solve_mixture(1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(solve_mixture(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("symmetric mixture has zero skew and negative excess kurtosis") {
  const MixtureParams params{0.5, 0.9, std::sqrt(1.0 - 0.81)};
  CHECK(params.mu3() == doctest::Approx(0.0));
  // mu4 = 3 - 2 a^4 for the symmetric unit-variance location mixture.
  CHECK(params.mu4() == doctest::Approx(3.0 - 2.0 * std::pow(0.9, 4)));
}

TEST_CASE("innovation moments: gaussian closed forms") {
  const CoefficientModel mod = unit_model();
  const InnovationModel innov = gaussian_innovation(mod);
  CHECK(innovation_moment(innov, 0.3, 1) == doctest::Approx(0.0));
  CHECK(innovation_moment(innov, 0.3, 2) == doctest::Approx(1.0));
  CHECK(innovation_moment(innov, 0.3, 3) == doctest::Approx(0.0));
  CHECK(innovation_moment(innov, 0.3, 4) == doctest::Approx(3.0));
  CHECK_THROWS_AS(innovation_moment(innov, 0.0, 5), std::invalid_argument);
}

TEST_CASE("innovation moments match quadrature on a state-dependent model") {
  const CoefficientModel mod = smooth_model(0.3, 0.3);
  const InnovationModel gauss = gaussian_innovation(mod);
  const InnovationModel mix = mixture_innovation(mod, solve_mixture(0.8, 0.3));
  for (const auto& innov : {gauss, mix}) {
    for (double x : {-1.0, 0.0, 1.5}) {
      for (int nu = 1; nu <= 4; ++nu) {
        const double closed = innovation_moment(innov, x, nu);
        const double quadr = innovation_moment_quadrature(innov, x, nu);
        CHECK(std::abs(closed - quadr) < 1e-6);
      }
    }
  }
}

TEST_CASE("innovation densities are centered and normalized") {
  const CoefficientModel mod = smooth_model(0.2, 0.4);
  for (const auto& innov :
       {gaussian_innovation(mod), mixture_innovation(mod, solve_mixture(1.0))}) {
    for (double x : kProbeXs) {
      const double radius = innov.support_radius * innov.sigma(x);
      const double mean = quad::integrate_or_throw(
          [&](double y) { return y * innov.density(x, y); }, -radius, radius);
      const double mass = quad::integrate_or_throw(
          [&](double y) { return innov.density(x, y); }, -radius, radius);
      CHECK(std::abs(mean) < 1e-8);
      CHECK(std::abs(mass - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("mixture sampler matches its declared moments") {
  const CoefficientModel mod = unit_model();
  const InnovationModel innov = mixture_innovation(mod, solve_mixture(1.0));
  Philox gen(2024, 0);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double xi = innov.sample(0.0, gen);
    s1 += xi;
    s2 += xi * xi;
    s3 += xi * xi * xi;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  const double m3 = s3 / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  const double mu4 = innov.std_mu4;
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt((mu4 - 1.0) / n));
  // Var(xi^3) = mu6 - mu3^2; bound mu6 crudely by 60 for this shape.
  CHECK(std::abs(m3 - 1.0) < 4.0 * std::sqrt(60.0 / n));
}

TEST_CASE("regime classification from declared targets") {
  CHECK(classify_regime({0.1 / 1024, 1024, 16}) == Regime::VanishingRatio);
  CHECK(classify_regime({0.05 / 128, 128, 128}) == Regime::FixedRatio);
  CHECK(classify_regime({0.01, 16, 64}) == Regime::Neither);
  CHECK(regime_name(Regime::FixedRatio) == std::string("fixed-ratio"));
}

TEST_CASE("grid arithmetic") {
  const GridSpec grid{0.001, 100, 10};
  CHECK(grid.coarse_dt() == doctest::Approx(0.1));
  CHECK(grid.horizon() == doctest::Approx(1.0));
}

TEST_CASE("assumption validation passes on a compliant configuration") {
  const CoefficientModel mod = unit_model();
  const InnovationModel innov = gaussian_innovation(mod);
  // hk = 0.4 with k = 400: lower bound k^{-0.19} = 0.32 < 0.4 < 1.
  const GridSpec grid{0.001, 400, 10};
  const ValidationReport report = validate_assumptions(mod, innov, grid);
  for (const auto& check : report.checks) {
    INFO(check.name, ": ", check.detail);
    CHECK(check.pass);
  }
  CHECK(report.all_pass());
}

TEST_CASE("assumption validation accepts a wider grid constant") {
  const CoefficientModel mod = unit_model();
  const InnovationModel innov = gaussian_innovation(mod);
  const GridSpec grid{0.001, 100, 10};
  ProbeConfig probe;
  probe.bound_const = 5.0; // loosens the lower grid bound to 0.083 < 0.1
  CHECK(validate_assumptions(mod, innov, grid, probe).all_pass());
}

TEST_CASE("off-center innovation fails the centering check") {
  const CoefficientModel mod = unit_model();
  InnovationModel biased;
  biased.name = "biased";
  biased.sigma = [](double) { return 1.0; };
  biased.density = [](double, double y) { return normal_pdf(y - 0.1); };
  biased.sample = [](double, Philox& gen) { return 0.1 + gen.normal(); };
  biased.closed_moments = false;
  const GridSpec grid{0.001, 400, 10};
  const ValidationReport report = validate_assumptions(mod, biased, grid);
  CHECK_FALSE(report.all_pass());
  bool a1_failed = false;
  for (const auto& check : report.checks) {
    if (check.name == "A1") a1_failed = !check.pass;
  }
  CHECK(a1_failed);
}

TEST_CASE("oversized coarse step fails the grid condition") {
  const CoefficientModel mod = unit_model();
  const InnovationModel innov = gaussian_innovation(mod);
  const GridSpec grid{10.0, 1, 10};
  const ValidationReport report = validate_assumptions(mod, innov, grid);
  bool a5_failed = false;
  for (const auto& check : report.checks) {
    if (check.name == "A5") a5_failed = !check.pass;
  }
  CHECK(a5_failed);
}
