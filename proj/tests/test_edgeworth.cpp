#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "markovdiff/density.hpp"
#include "markovdiff/edgeworth.hpp"
#include "markovdiff/models.hpp"
#include "markovdiff/paths.hpp"
#include "markovdiff/quadrature.hpp"

#include <cmath>
#include <vector>

using namespace markovdiff;

namespace {

EdgeworthContext skewed_unit_context(double mu3 = 1.0, double h = 0.001,
                                     int k = 100) {
  const CoefficientModel coeff = unit_model();
  return make_context(coeff, mixture_innovation(coeff, solve_mixture(mu3)),
                      GridSpec{h, k, 1});
}

EdgeworthContext gaussian_unit_context() {
  const CoefficientModel coeff = unit_model();
  return make_context(coeff, gaussian_innovation(coeff), GridSpec{0.001, 100, 1});
}

// Symmetric two-component mixture with means +/-a: zero skewness, negative
// excess kurtosis -2a^4, unit variance.
EdgeworthContext symmetric_mixture_context(double a) {
  const CoefficientModel coeff = unit_model();
  MixtureParams params;
  params.w = 0.5;
  params.a = a;
  params.s = std::sqrt(1.0 - a * a);
  return make_context(coeff, mixture_innovation(coeff, params),
                      GridSpec{0.001, 100, 1});
}

} // namespace

TEST_CASE("context flags grids outside the step/ratio band") {
  const CoefficientModel coeff = unit_model();
  const InnovationModel innov = gaussian_innovation(coeff);
  CHECK_FALSE(make_context(coeff, innov, GridSpec{0.001, 400, 10})
                  .regime_violating);
  CHECK(make_context(coeff, innov, GridSpec{10.0, 1, 1}).regime_violating);
  // Fixed-ratio grids (n/k order one) sit below the band and stay usable.
  CHECK(make_context(coeff, innov, GridSpec{0.001, 100, 100})
            .regime_violating);
}

TEST_CASE("innovation cumulant fields") {
  const EdgeworthContext gauss = gaussian_unit_context();
  CHECK(skewness_at(gauss, 0.3) == 0.0);
  CHECK(excess_kurtosis_at(gauss, 0.3) == doctest::Approx(0.0).epsilon(1e-12));

  const EdgeworthContext skew = skewed_unit_context(1.0);
  CHECK(skewness_at(skew, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

  const EdgeworthContext sym = symmetric_mixture_context(0.7);
  CHECK(skewness_at(sym, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(excess_kurtosis_at(sym, 0.0) ==
        doctest::Approx(-0.4802).epsilon(1e-12));
}

TEST_CASE("diffusion kernel matches the density module") {
  const EdgeworthContext ctx = gaussian_unit_context();
  const Kernel p = diffusion_kernel(ctx);
  CHECK(p.value(0.5, 0.1, 0.8) ==
        doctest::Approx(closed_form_p_unit(0.5, 0.1, 0.8)).epsilon(1e-14));
  CHECK(p.x_derivative(3, 0.5, 0.1, 0.8) ==
        doctest::Approx(p_derivative(ctx.coeff, 0.5, 0.1, 0.8, Deriv::Dxxx))
            .epsilon(1e-12));
  CHECK(p.y_derivative(4, 0.5, 0.1, 0.8) ==
        doctest::Approx(p_derivative(ctx.coeff, 0.5, 0.1, 0.8, Deriv::D4y))
            .epsilon(1e-12));
}

TEST_CASE("kernel derivative falls back to finite differences") {
  const EdgeworthContext ctx = gaussian_unit_context();
  const Kernel analytic = diffusion_kernel(ctx);
  Kernel value_only = analytic;
  value_only.x_derivative = nullptr;
  const double t = 0.25;
  const double sd = std::sqrt(t);
  const double p_max = closed_form_p_unit(t, 0.1, 0.1 + t);
  for (int n = 1; n <= 4; ++n) {
    const double want = analytic.x_derivative(n, t, 0.1, 0.6);
    const double got = kernel_x_derivative(value_only, n, t, 0.1, 0.6);
    const double scale = p_max / std::pow(sd, n);
    CHECK(std::abs(got - want) < 1e-3 * scale);
  }
  CHECK_THROWS_AS(kernel_x_derivative(value_only, 5, t, 0.1, 0.6),
                  std::invalid_argument);
  CHECK_THROWS_AS(kernel_x_derivative(value_only, 0, t, 0.1, 0.6),
                  std::invalid_argument);
}

TEST_CASE("time-space convolution collapses p with itself to t p") {
  const EdgeworthContext ctx = gaussian_unit_context();
  const Kernel p = diffusion_kernel(ctx);
  const double got = convolve_time_space(p, p, 1.0, 0.0, 1.0, ctx.quad);
  CHECK(got == doctest::Approx(0.3989422804014327).epsilon(1e-8));
  CHECK(convolve_time_space(p, zero_kernel(), 1.0, 0.0, 1.0, ctx.quad) ==
        0.0);
}

TEST_CASE("convolution with the skew operator matches the closed form") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const Kernel p = diffusion_kernel(ctx);
  const Kernel f1p = apply_F1(ctx, p);
  for (double y : {0.5, 1.5, 2.0}) {
    const double got = convolve_time_space(p, f1p, 1.0, 0.0, y, ctx.quad);
    const double want = pi1_closed_constant(1.0, 1.0, 0.0, y);
    CHECK(std::abs(got - want) / std::abs(want) < 1e-3);
  }
}

TEST_CASE("skew and kurtosis operators vanish for gaussian innovations") {
  const EdgeworthContext ctx = gaussian_unit_context();
  const Kernel p = diffusion_kernel(ctx);
  const Kernel f1p = apply_F1(ctx, p);
  const Kernel f2p = apply_F2(ctx, p);
  for (double y : {-0.5, 0.7, 2.0}) {
    CHECK(f1p.value(0.4, 0.0, y) == 0.0);
    CHECK(f2p.value(0.4, 0.0, y) == 0.0);
  }
}

TEST_CASE("skew operator spot value") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const Kernel f1p = apply_F1(ctx, diffusion_kernel(ctx));
  CHECK(f1p.value(1.0, 0.0, 2.0) ==
        doctest::Approx(-0.08065690817304778).epsilon(1e-9));
}

TEST_CASE("frozen generator term vanishes for constant coefficients") {
  const EdgeworthContext unit = gaussian_unit_context();
  CHECK(frozen_generator_term(unit, 0.5, 0.0, 0.5) == 0.0);
  const CoefficientModel flat = zero_drift_model();
  const EdgeworthContext ctx =
      make_context(flat, gaussian_innovation(flat), GridSpec{0.001, 400, 1});
  CHECK(frozen_generator_term(ctx, 0.5, 0.0, 0.5) == 0.0);
}

TEST_CASE("frozen generator term is stable under quadrature refinement") {
  const CoefficientModel coeff = smooth_model(0.3, 0.3);
  ConvolveConfig quad;
  quad.theta_nodes = 48;
  quad.abs_tol = 1e-6;
  quad.rel_tol = 1e-4;
  BridgeConfig bridge;
  bridge.samples = 48;
  bridge.mesh = 32;
  const GridSpec grid{0.001, 100, 1};
  const InnovationModel innov = gaussian_innovation(coeff);
  const EdgeworthContext base = make_context(coeff, innov, grid, quad, bridge);
  ConvolveConfig fine = quad;
  fine.theta_nodes = 96;
  fine.abs_tol = 5e-7;
  fine.rel_tol = 5e-5;
  const EdgeworthContext refined =
      make_context(coeff, innov, grid, fine, bridge);
  const double a = frozen_generator_term(base, 0.1, 0.0, 0.1);
  const double b = frozen_generator_term(refined, 0.1, 0.0, 0.1);
  CHECK(std::isfinite(a));
  CHECK(a != 0.0);
  CHECK(std::abs(a - b) <= 0.1 * std::max(std::abs(a), std::abs(b)));
}

TEST_CASE("pi1 vanishes without skewness") {
  const EdgeworthContext ctx = gaussian_unit_context();
  CHECK(pi1(ctx, 0.1, 0.0, 0.3) == 0.0);
  CHECK(pi1(ctx, 0.1, 0.0, 0.3, CorrectionMethod::Numeric) == 0.0);
}

TEST_CASE("numerical pi1 matches the closed form on the probe grid") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  for (double t : {0.04, 0.1, 0.25}) {
    const double sd = std::sqrt(t);
    const double floor = 0.02 * closed_form_p_unit(t, 0.0, t) / sd;
    for (double c : {-4.0, -2.0, -1.0, 1.0, 3.0, 4.0}) {
      const double y = c * sd; // x = 0, |y - x| <= 4 sd
      const double num = pi1(ctx, t, 0.0, y, CorrectionMethod::Numeric);
      const double closed = pi1_closed_constant(1.0, t, 0.0, y);
      const double denom = std::max(std::abs(closed), floor);
      CHECK(std::abs(num - closed) / denom < 1e-3);
    }
  }
}

TEST_CASE("pi1 closed form properties") {
  // Vanishes at mean displacement y - x = t (drift-1 model).
  CHECK(pi1_closed_constant(1.0, 0.1, 0.0, 0.1) == 0.0);
  // Linear in mu3.
  CHECK(pi1_closed_constant(2.0, 0.1, 0.0, 0.3) ==
        doctest::Approx(2.0 * pi1_closed_constant(1.0, 0.1, 0.0, 0.3))
            .epsilon(1e-14));
  // Equals -(mu3/6) t d^3/dy^3 p via the density module.
  for (double y : {-0.2, 0.1, 0.5}) {
    const double want =
        -(1.0 / 6.0) * 0.1 *
        p_derivative(unit_model(), 0.1, 0.0, y, Deriv::Dyyy);
    CHECK(pi1_closed_constant(1.0, 0.1, 0.0, y) ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("pi1 integrates to zero over the arrival state") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const double t = 0.1;
  // Closed form: the Hermite factor integrates against p to zero.
  const auto closed = quad::integrate(
      [&](double y) { return pi1(ctx, t, 0.0, y); }, t - 4.0, t + 4.0);
  CHECK(std::abs(closed.value) < 1e-10);
  // Numeric path within the stated quadrature tolerance.
  quad::Options opt;
  opt.abs_tol = 1e-7;
  opt.rel_tol = 1e-6;
  const auto numeric = quad::integrate(
      [&](double y) {
        return pi1(ctx, t, 0.0, y, CorrectionMethod::Numeric);
      },
      t - 2.5, t + 2.5, opt);
  CHECK(std::abs(numeric.value) < 1e-6);
}

TEST_CASE("pi2 vanishes for gaussian constant-coefficient models") {
  const EdgeworthContext ctx = gaussian_unit_context();
  CHECK(pi2(ctx, 0.1, 0.0, 0.2) == 0.0);
  CHECK(pi2(ctx, 0.1, 0.0, 0.2, CorrectionMethod::Numeric) == 0.0);
}

TEST_CASE("pi2 kurtosis term matches the closed form") {
  const EdgeworthContext ctx = symmetric_mixture_context(0.7);
  const double e = excess_kurtosis_at(ctx, 0.0);
  const double t = 0.1;
  for (double y : {0.05, 0.2}) {
    const Pi2Breakdown got =
        pi2_terms(ctx, t, 0.0, y, CorrectionMethod::Numeric);
    CHECK(got.nested_term == 0.0);
    CHECK(got.frozen_term == 0.0);
    const double w = (y - t) / std::sqrt(t);
    const double want = closed_form_p_unit(t, 0.0, y) * e *
                        hermite_he(4, w) / (24.0 * t);
    CHECK(std::abs(got.kurtosis_term - want) / std::abs(want) < 1e-3);
    const Pi2Breakdown closed = pi2_terms(ctx, t, 0.0, y);
    CHECK(closed.kurtosis_term == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("pi2 nested term matches the iterated closed form") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const double t = 0.1;
  const double y = 0.25;
  const Pi2Breakdown got = pi2_terms(ctx, t, 0.0, y, CorrectionMethod::Numeric);
  const double mu3 = skewness_at(ctx, 0.0);
  const double w = (y - t) / std::sqrt(t);
  const double p = closed_form_p_unit(t, 0.0, y);
  const double want_nested = p * mu3 * mu3 * hermite_he(6, w) / (72.0 * t);
  CHECK(std::abs(got.nested_term - want_nested) / std::abs(want_nested) <
        1e-2);
  // Total against the full closed form.
  const double e = excess_kurtosis_at(ctx, 0.0);
  const double want_total = pi2_closed_constant(mu3, e, t, 0.0, y);
  CHECK(std::abs(got.total() - want_total) / std::abs(want_total) < 1e-2);
  CHECK(got.frozen_term == 0.0);
}

TEST_CASE("pi2 closed form integrates to zero") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const double t = 0.1;
  const auto r = quad::integrate(
      [&](double y) { return pi2(ctx, t, 0.0, y); }, t - 4.0, t + 4.0);
  CHECK(std::abs(r.value) < 1e-10);
}

TEST_CASE("delta1 reference value and properties") {
  CHECK(delta1(gaussian_unit_context(), 0.0, 0.1) == 0.0);
  const EdgeworthContext ctx = skewed_unit_context(1.0, 0.001, 100);
  // y = x: w = -sqrt(kh), delta1 = He3(-sqrt(0.1))/60.
  CHECK(delta1(ctx, 0.0, 0.0) ==
        doctest::Approx(0.015284342024147166).epsilon(1e-12));
  // Vanishes at mean displacement.
  CHECK(delta1(ctx, 0.0, 0.1) == 0.0);
}

TEST_CASE("delta ratios follow the closed forms across k") {
  // kh fixed at 0.1; delta1 ~ 1/sqrt(k) and delta2 ~ 1/k with identical
  // Hermite profiles, so the normalized envelope constant is k-independent.
  const double kh = 0.1;
  std::vector<double> c1;
  std::vector<double> c2;
  for (int k : {25, 100, 400}) {
    const EdgeworthContext ctx = skewed_unit_context(1.0, kh / k, k);
    double worst1 = 0.0;
    double worst2 = 0.0;
    for (double c = -3.0; c <= 3.0 + 1e-9; c += 0.5) {
      const double y = c * std::sqrt(kh);
      const double z = std::abs(y) / std::sqrt(kh);
      const double d1 = std::abs(delta1(ctx, 0.0, y));
      const double d2 = std::abs(delta2(ctx, 0.0, y));
      worst1 = std::max(worst1, d1 * std::sqrt(double(k)) /
                                    std::pow(1.0 + z, 3));
      worst2 = std::max(worst2, d2 * double(k) / (1.0 + std::pow(z, 7)));
    }
    c1.push_back(worst1);
    c2.push_back(worst2);
  }
  for (size_t i = 1; i < c1.size(); ++i) {
    CHECK(c1[i] == doctest::Approx(c1[0]).epsilon(1e-9));
    CHECK(c2[i] == doctest::Approx(c2[0]).epsilon(1e-9));
  }
}

TEST_CASE("delta1 numeric path halves when k quadruples at fixed kh") {
  const double kh = 0.1;
  const EdgeworthContext coarse = skewed_unit_context(1.0, kh / 25, 25);
  const EdgeworthContext fine = skewed_unit_context(1.0, kh / 100, 100);
  const double d_coarse = delta1(coarse, 0.0, 0.05, CorrectionMethod::Numeric);
  const double d_fine = delta1(fine, 0.0, 0.05, CorrectionMethod::Numeric);
  CHECK(std::abs(d_fine / d_coarse - 0.5) < 0.05 * 0.5);
  // And the numeric path agrees with the closed dispatch.
  CHECK(std::abs(d_fine - delta1(fine, 0.0, 0.05)) <
        1e-3 * std::abs(d_fine));
}

TEST_CASE("delta ratios raise on density underflow") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  bool threw = false;
  try {
    (void)delta1(ctx, 0.0, 60.0, CorrectionMethod::Numeric);
  } catch (const DensityUnderflowError& e) {
    threw = true;
    CHECK(e.log_p < -1e4);
  }
  CHECK(threw);
}

TEST_CASE("closed-form dispatch rejection for state-dependent models") {
  const CoefficientModel coeff = smooth_model(0.2, 0.2);
  const EdgeworthContext ctx =
      make_context(coeff, gaussian_innovation(coeff), GridSpec{0.001, 400, 1});
  CHECK_THROWS_AS(pi1(ctx, 0.1, 0.0, 0.1, CorrectionMethod::Closed),
                  std::invalid_argument);
  CHECK_THROWS_AS(delta1(ctx, 0.0, 0.1, CorrectionMethod::Closed),
                  std::invalid_argument);
}

TEST_CASE("concurrent evaluations agree with serial ones") {
  const EdgeworthContext ctx = skewed_unit_context(1.0);
  const std::vector<double> ys = {-0.4, -0.1, 0.2, 0.5, 0.8, 1.1};
  std::vector<double> serial(ys.size());
  for (size_t i = 0; i < ys.size(); ++i) {
    serial[i] = pi1(ctx, 0.1, 0.0, ys[i], CorrectionMethod::Numeric);
  }
  std::vector<double> parallel(ys.size());
  parallel_for_indices(ys.size(), 3, [&](size_t i) {
    parallel[i] = pi1(ctx, 0.1, 0.0, ys[i], CorrectionMethod::Numeric);
  });
  for (size_t i = 0; i < ys.size(); ++i) {
    CHECK(parallel[i] == serial[i]);
  }
}
