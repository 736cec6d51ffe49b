#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "markovdiff/quadrature.hpp"

#include <cmath>
#include <numbers>

using namespace markovdiff;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("polynomial integrates exactly") {
  auto r = quad::integrate([](double x) { return x * x; }, 0.0, 1.0);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("reversed limits flip the sign") {
  auto r = quad::integrate([](double x) { return x; }, 1.0, 0.0);
  CHECK(r.value == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("gaussian mass over a wide window is one") {
  auto density = [](double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
  };
  auto r = quad::integrate(density, -12.0, 12.0);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("sixth-moment combination of the standard normal equals 22") {
  // E[Z^6 + 2 Z^4 + Z^2] = 15 + 2*3 + 1 = 22 for Z standard normal.
  auto integrand = [](double z) {
    const double z2 = z * z;
    const double poly = z2 * z2 * z2 + 2.0 * z2 * z2 + z2;
    return poly * std::exp(-0.5 * z2) / std::sqrt(2.0 * kPi);
  };
  auto r = quad::integrate(integrand, -14.0, 14.0);
  CHECK(r.converged);
  CHECK(std::abs(r.value - 22.0) < 1e-8);
}

TEST_CASE("integrable endpoint singularity 1/sqrt(x)") {
  quad::Options opt;
  opt.abs_tol = 1e-9;
  opt.rel_tol = 1e-9;
  opt.max_panels = 20000;
  auto r = quad::integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0,
                           1.0, opt);
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("breakpoint seeding handles a kink exactly") {
  auto r = quad::integrate([](double x) { return std::abs(x); }, -1.0, 2.0,
                           {}, {0.0});
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("panel budget exhaustion throws with diagnostics") {
  quad::Options opt;
  opt.abs_tol = 1e-14;
  opt.rel_tol = 1e-14;
  opt.max_panels = 3;
  bool threw = false;
  try {
    quad::integrate_or_throw([](double x) { return 1.0 / std::sqrt(x); }, 0.0,
                             1.0, opt);
  } catch (const quad::QuadratureError& e) {
    threw = true;
    CHECK(e.achieved > e.requested);
  }
  CHECK(threw);
}

TEST_CASE("empty interval integrates to zero") {
  auto r = quad::integrate([](double x) { return x * x; }, 2.0, 2.0);
  CHECK(r.converged);
  CHECK(r.value == 0.0);
}

TEST_CASE("gauss-legendre nodes are symmetric and weights sum to 2") {
  const auto& gl = quad::gauss_legendre(16);
  REQUIRE(gl.nodes.size() == 16);
  double wsum = 0.0;
  for (size_t i = 0; i < gl.nodes.size(); ++i) {
    wsum += gl.weights[i];
    CHECK(gl.nodes[i] ==
          doctest::Approx(-gl.nodes[gl.nodes.size() - 1 - i]).epsilon(1e-13));
  }
  CHECK(wsum == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("gauss-legendre n=5 integrates degree-9 polynomials exactly") {
  const auto& gl = quad::gauss_legendre(5);
  // f(x) = x^8: integral over [-1,1] is 2/9.
  double acc = 0.0;
  for (size_t i = 0; i < gl.nodes.size(); ++i) {
    acc += gl.weights[i] * std::pow(gl.nodes[i], 8);
  }
  CHECK(acc == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
}

TEST_CASE("oscillatory integral matches closed form") {
  auto r = quad::integrate([](double x) { return std::sin(x); }, 0.0, kPi);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-11));
}
