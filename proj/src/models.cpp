#include "markovdiff/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "markovdiff/quadrature.hpp"

namespace markovdiff {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310005;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / kSqrt2Pi; }

RealFn constant_fn(double c) {
  return [c](double) { return c; };
}

} // namespace

CoefficientModel unit_model() {
  CoefficientModel mod;
  mod.name = "unit";
  mod.m = constant_fn(1.0);
  mod.m_prime = constant_fn(0.0);
  mod.m_second = constant_fn(0.0);
  mod.sigma = constant_fn(1.0);
  mod.sigma_prime = constant_fn(0.0);
  mod.sigma_second = constant_fn(0.0);
  mod.sigma2_lower = 1.0;
  mod.sigma2_upper = 1.0;
  mod.constant_m = true;
  mod.constant_sigma = true;
  return mod;
}

CoefficientModel zero_drift_model() {
  CoefficientModel mod = unit_model();
  mod.name = "zero_drift";
  mod.m = constant_fn(0.0);
  return mod;
}

CoefficientModel smooth_model(double a, double b) {
  if (std::abs(b) >= 1.0) {
    throw std::invalid_argument(
        "smooth_model: |b| must be < 1 to keep sigma bounded away from 0");
  }
  CoefficientModel mod;
  mod.name = "smooth";
  mod.m = [a](double x) { return a * std::sin(x); };
  mod.m_prime = [a](double x) { return a * std::cos(x); };
  mod.m_second = [a](double x) { return -a * std::sin(x); };
  mod.sigma = [b](double x) { return 1.0 + b * std::tanh(x); };
  mod.sigma_prime = [b](double x) {
    const double t = std::tanh(x);
    return b * (1.0 - t * t);
  };
  mod.sigma_second = [b](double x) {
    const double t = std::tanh(x);
    return -2.0 * b * t * (1.0 - t * t);
  };
  const double lo = 1.0 - std::abs(b);
  const double hi = 1.0 + std::abs(b);
  mod.sigma2_lower = lo * lo;
  mod.sigma2_upper = hi * hi;
  mod.constant_m = (a == 0.0);
  mod.constant_sigma = (b == 0.0);
  return mod;
}

CoefficientModel ou_model() {
  CoefficientModel mod;
  mod.name = "ou";
  mod.m = [](double x) { return -x; };
  mod.m_prime = constant_fn(-1.0);
  mod.m_second = constant_fn(0.0);
  mod.sigma = constant_fn(1.0);
  mod.sigma_prime = constant_fn(0.0);
  mod.sigma_second = constant_fn(0.0);
  mod.sigma2_lower = 1.0;
  mod.sigma2_upper = 1.0;
  mod.constant_m = false;
  mod.constant_sigma = true;
  return mod;
}

double MixtureParams::mu3() const {
  const double b = second_mean();
  // Zero-mean mixture: the 3 s^2 E[mean] cross term vanishes.
  return w * a * a * a + (1.0 - w) * b * b * b;
}

double MixtureParams::mu4() const {
  const double b = second_mean();
  const double mean2 = w * a * a + (1.0 - w) * b * b;
  const double mean4 = w * a * a * a * a + (1.0 - w) * b * b * b * b;
  const double s2 = s * s;
  return 3.0 * s2 * s2 + 6.0 * s2 * mean2 + mean4;
}

MixtureParams solve_mixture(double mu3, double w) {
  if (w <= 0.0 || w >= 1.0) {
    throw std::invalid_argument("solve_mixture: w must lie in (0, 1)");
  }
  MixtureParams params;
  params.w = w;
  if (mu3 == 0.0) {
    params.a = 0.0;
    params.s = 1.0;
    return params;
  }
  if (w == 0.5) {
    throw std::invalid_argument(
        "solve_mixture: w = 1/2 is symmetric and cannot produce mu3 != 0");
  }
  // mu3 = w a^3 (1 - 2w) / (1 - w)^2, solved for a.
  params.a = std::cbrt(mu3 * (1.0 - w) * (1.0 - w) / (w * (1.0 - 2.0 * w)));
  // Unit variance: s^2 = 1 - (mixture mean-square) with the mean-square
  // w a^2 / (1 - w).
  const double mean2 = w * params.a * params.a / (1.0 - w);
  if (mean2 >= 1.0) {
    std::ostringstream msg;
    msg << "solve_mixture: mu3 = " << mu3 << " unreachable at w = " << w
        << " (component spread " << mean2 << " exceeds unit variance)";
    throw std::invalid_argument(msg.str());
  }
  params.s = std::sqrt(1.0 - mean2);
  return params;
}

InnovationModel gaussian_innovation(const CoefficientModel& coeff) {
  InnovationModel innov;
  innov.name = "gaussian";
  innov.sigma = coeff.sigma;
  RealFn sig = coeff.sigma;
  innov.density = [sig](double x, double y) {
    const double s = sig(x);
    return normal_pdf(y / s) / s;
  };
  innov.sample = [sig](double x, Philox& gen) { return sig(x) * gen.normal(); };
  innov.closed_moments = true;
  innov.std_mu3 = 0.0;
  innov.std_mu4 = 3.0;
  innov.state_independent_shape = true;
  return innov;
}

InnovationModel mixture_innovation(const CoefficientModel& coeff,
                                   const MixtureParams& params) {
  if (params.s <= 0.0) {
    throw std::invalid_argument("mixture_innovation: component sd must be > 0");
  }
  InnovationModel innov;
  innov.name = "mixture";
  innov.sigma = coeff.sigma;
  RealFn sig = coeff.sigma;
  const double w = params.w;
  const double a = params.a;
  const double b = params.second_mean();
  const double s = params.s;
  innov.density = [sig, w, a, b, s](double x, double y) {
    const double scale = sig(x);
    const double u = y / scale;
    const double comp1 = w * normal_pdf((u - a) / s) / s;
    const double comp2 = (1.0 - w) * normal_pdf((u - b) / s) / s;
    return (comp1 + comp2) / scale;
  };
  innov.sample = [sig, w, a, b, s](double x, Philox& gen) {
    const double pick = gen.uniform01();
    const double mean = pick < w ? a : b;
    return sig(x) * (mean + s * gen.normal());
  };
  innov.closed_moments = true;
  innov.std_mu3 = params.mu3();
  innov.std_mu4 = params.mu4();
  innov.state_independent_shape = true;
  return innov;
}

double innovation_moment_quadrature(const InnovationModel& innov, double x,
                                    int nu) {
  if (nu < 1 || nu > 4) {
    throw std::invalid_argument("innovation moment order must be in 1..4");
  }
  const double scale = innov.sigma ? innov.sigma(x) : 1.0;
  const double radius = innov.support_radius * scale;
  quad::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  auto integrand = [&innov, x, nu](double y) {
    return std::pow(y, nu) * innov.density(x, y);
  };
  return quad::integrate_or_throw(integrand, -radius, radius, opt,
                                  {-scale, 0.0, scale});
}

double innovation_moment(const InnovationModel& innov, double x, int nu) {
  if (nu < 1 || nu > 4) {
    throw std::invalid_argument("innovation moment order must be in 1..4");
  }
  if (!innov.closed_moments) {
    return innovation_moment_quadrature(innov, x, nu);
  }
  const double s = innov.sigma(x);
  switch (nu) {
    case 1:
      return 0.0;
    case 2:
      return s * s;
    case 3:
      return s * s * s * innov.std_mu3;
    default:
      return s * s * s * s * innov.std_mu4;
  }
}

Regime classify_regime(const GridSpec& grid, const RegimeTargets& targets) {
  const double ratio =
      static_cast<double>(grid.n) / static_cast<double>(grid.k);
  const double c = targets.fixed_ratio_c;
  if (c > 0.0 && std::abs(ratio - c) <= targets.fixed_ratio_rel_tol * c) {
    return Regime::FixedRatio;
  }
  if (ratio <= targets.vanishing_max_ratio) {
    return Regime::VanishingRatio;
  }
  return Regime::Neither;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::VanishingRatio:
      return "vanishing-ratio";
    case Regime::FixedRatio:
      return "fixed-ratio";
    default:
      return "neither";
  }
}

// ---- Transforms -------------------------------------------------------------

double lamperti_S(const CoefficientModel& coeff, double x) {
  if (coeff.constant_sigma) {
    return x / coeff.sigma(0.0);
  }
  quad::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  auto integrand = [&coeff](double u) { return 1.0 / coeff.sigma(u); };
  return quad::integrate_or_throw(integrand, 0.0, x, opt);
}

double lamperti_S_inv(const CoefficientModel& coeff, double v) {
  if (coeff.constant_sigma) {
    return v * coeff.sigma(0.0);
  }
  // Newton on S(x) = v with S'(x) = 1/sigma(x); sigma bounded away from 0
  // makes S strictly increasing, so the iteration is globally stable.
  double x = v * coeff.sigma(0.0);
  for (int iter = 0; iter < 60; ++iter) {
    const double err = lamperti_S(coeff, x) - v;
    const double step = err * coeff.sigma(x);
    x -= step;
    if (std::abs(step) < 1e-13 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

namespace {

double C_of_x(const CoefficientModel& coeff, double x) {
  return coeff.m(x) / coeff.sigma(x) - 0.5 * coeff.sigma_prime(x);
}

double C_prime_of_x(const CoefficientModel& coeff, double x) {
  // d/dv with v = S(x) and dx/dv = sigma(x).
  const double s = coeff.sigma(x);
  const double inner = (coeff.m_prime(x) * s - coeff.m(x) * coeff.sigma_prime(x)) /
                           (s * s) -
                       0.5 * coeff.sigma_second(x);
  return s * inner;
}

double H_integrand(const CoefficientModel& coeff, double u) {
  // H(x) = int_0^{S(x)} C(v) dv rewritten through v = S(u):
  // integrand C(S(u))/sigma(u) = m/sigma^2 - sigma'/(2 sigma).
  const double s = coeff.sigma(u);
  return coeff.m(u) / (s * s) - 0.5 * coeff.sigma_prime(u) / s;
}

} // namespace

double drift_potential_C(const CoefficientModel& coeff, double u) {
  return C_of_x(coeff, lamperti_S_inv(coeff, u));
}

double drift_potential_C_prime(const CoefficientModel& coeff, double u) {
  return C_prime_of_x(coeff, lamperti_S_inv(coeff, u));
}

double potential_g(const CoefficientModel& coeff, double u) {
  const double x = lamperti_S_inv(coeff, u);
  const double c = C_of_x(coeff, x);
  return -0.5 * (c * c + C_prime_of_x(coeff, x));
}

double transform_H(const CoefficientModel& coeff, double x) {
  quad::Options opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  auto integrand = [&coeff](double u) { return H_integrand(coeff, u); };
  return quad::integrate_or_throw(integrand, 0.0, x, opt);
}

Lamperti::Lamperti(const CoefficientModel& coeff, double x_lo, double x_hi,
                   int knots_per_unit)
    : coeff_(coeff) {
  if (!(x_lo < 0.0 && x_hi > 0.0)) {
    throw std::invalid_argument("Lamperti: table range must straddle 0");
  }
  dx_ = 1.0 / static_cast<double>(knots_per_unit);
  const long lo_knots = std::lround(std::ceil(-x_lo / dx_));
  const long hi_knots = std::lround(std::ceil(x_hi / dx_));
  x_lo_ = -static_cast<double>(lo_knots) * dx_;
  const size_t count = static_cast<size_t>(lo_knots + hi_knots + 1);
  Sx_.resize(count);
  Hx_.resize(count);
  Sx_[0] = 0.0;
  Hx_[0] = 0.0;
  for (size_t i = 1; i < count; ++i) {
    const double a = x_lo_ + static_cast<double>(i - 1) * dx_;
    const double b = a + dx_;
    Sx_[i] = Sx_[i - 1] + s_increment(a, b);
    Hx_[i] = Hx_[i - 1] + h_increment(a, b);
  }
  // Anchor both tables so S(0) = H(0) = 0 exactly.
  const double s0 = Sx_[static_cast<size_t>(lo_knots)];
  const double h0 = Hx_[static_cast<size_t>(lo_knots)];
  for (size_t i = 0; i < count; ++i) {
    Sx_[i] -= s0;
    Hx_[i] -= h0;
  }
}

double Lamperti::s_increment(double from, double to) const {
  const auto& gl = quad::gauss_legendre(5);
  const double c = 0.5 * (from + to);
  const double h = 0.5 * (to - from);
  double acc = 0.0;
  for (size_t i = 0; i < gl.nodes.size(); ++i) {
    acc += gl.weights[i] / coeff_.sigma(c + h * gl.nodes[i]);
  }
  return acc * h;
}

double Lamperti::h_increment(double from, double to) const {
  const auto& gl = quad::gauss_legendre(5);
  const double c = 0.5 * (from + to);
  const double h = 0.5 * (to - from);
  double acc = 0.0;
  for (size_t i = 0; i < gl.nodes.size(); ++i) {
    acc += gl.weights[i] * H_integrand(coeff_, c + h * gl.nodes[i]);
  }
  return acc * h;
}

double Lamperti::S(double x) const {
  const double pos = (x - x_lo_) / dx_;
  const long idx = std::clamp(static_cast<long>(std::floor(pos)), 0L,
                              static_cast<long>(Sx_.size()) - 1);
  const double knot = x_lo_ + static_cast<double>(idx) * dx_;
  return Sx_[static_cast<size_t>(idx)] + s_increment(knot, x);
}

double Lamperti::S_inv(double v) const {
  auto it = std::lower_bound(Sx_.begin(), Sx_.end(), v);
  size_t idx = static_cast<size_t>(std::distance(Sx_.begin(), it));
  if (idx >= Sx_.size()) idx = Sx_.size() - 1;
  double x = x_lo_ + static_cast<double>(idx) * dx_;
  for (int iter = 0; iter < 30; ++iter) {
    const double err = S(x) - v;
    const double step = err * coeff_.sigma(x);
    x -= step;
    if (std::abs(step) < 1e-13 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

double Lamperti::C_at_x(double x) const { return C_of_x(coeff_, x); }

double Lamperti::C(double v) const { return C_at_x(S_inv(v)); }

double Lamperti::C_prime(double v) const {
  return C_prime_of_x(coeff_, S_inv(v));
}

double Lamperti::g(double v) const {
  const double x = S_inv(v);
  const double c = C_at_x(x);
  return -0.5 * (c * c + C_prime_of_x(coeff_, x));
}

double Lamperti::H(double x) const {
  const double pos = (x - x_lo_) / dx_;
  const long idx = std::clamp(static_cast<long>(std::floor(pos)), 0L,
                              static_cast<long>(Hx_.size()) - 1);
  const double knot = x_lo_ + static_cast<double>(idx) * dx_;
  return Hx_[static_cast<size_t>(idx)] + h_increment(knot, x);
}

// ---- Assumption validators ---------------------------------------------

bool ValidationReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const AssumptionCheck& c) { return c.pass; });
}

ValidationReport validate_assumptions(const CoefficientModel& coeff,
                                      const InnovationModel& innov,
                                      const GridSpec& grid,
                                      const ProbeConfig& probe) {
  ValidationReport report;

  // Innovation centering and normalization at every probe state.
  {
    AssumptionCheck check;
    check.name = "A1";
    check.pass = true;
    double worst_mean = 0.0, worst_mass = 0.0;
    for (double x : probe.xs) {
      const double scale = innov.sigma ? innov.sigma(x) : 1.0;
      const double radius = innov.support_radius * scale;
      quad::Options opt;
      opt.abs_tol = 1e-12;
      opt.rel_tol = 1e-10;
      const double mean = quad::integrate_or_throw(
          [&](double y) { return y * innov.density(x, y); }, -radius, radius,
          opt, {0.0});
      const double mass = quad::integrate_or_throw(
          [&](double y) { return innov.density(x, y); }, -radius, radius, opt,
          {0.0});
      worst_mean = std::max(worst_mean, std::abs(mean));
      worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    }
    if (worst_mean >= 1e-8 || worst_mass >= 1e-8) check.pass = false;
    std::ostringstream detail;
    detail << "max |mean| = " << worst_mean << ", max |mass - 1| = "
           << worst_mass << " (tolerance 1e-8)";
    check.detail = detail.str();
    report.checks.push_back(std::move(check));
  }

  // Variance bounds: declared band contains sigma(x)^2, and the innovation
  // second moment agrees with sigma(x)^2.
  {
    AssumptionCheck check;
    check.name = "A2";
    check.pass = coeff.sigma2_lower > 0.0;
    double worst_dev = 0.0;
    for (double x : probe.xs) {
      const double s2 = coeff.sigma(x) * coeff.sigma(x);
      if (s2 < coeff.sigma2_lower - 1e-12 || s2 > coeff.sigma2_upper + 1e-12) {
        check.pass = false;
      }
      const double mu2 = innovation_moment(innov, x, 2);
      worst_dev = std::max(worst_dev, std::abs(mu2 - s2));
      if (std::abs(mu2 - s2) > 1e-6) check.pass = false;
    }
    std::ostringstream detail;
    detail << "sigma^2 within [" << coeff.sigma2_lower << ", "
           << coeff.sigma2_upper << "], max |mu2 - sigma^2| = " << worst_dev;
    check.detail = detail.str();
    report.checks.push_back(std::move(check));
  }

  // Innovation density smoothness/moments: positivity on a stencil plus
  // finite third and fourth moments. Only a testable fragment of the full
  // smoothness assumption.
  {
    AssumptionCheck check;
    check.name = "A3";
    check.pass = true;
    check.partial = true;
    double max_moment = 0.0;
    for (double x : probe.xs) {
      for (double u = -3.0; u <= 3.0; u += 0.5) {
        const double q = innov.density(x, u * innov.sigma(x));
        if (!std::isfinite(q) || q < 0.0) check.pass = false;
      }
      const double m3 = innovation_moment(innov, x, 3);
      const double m4 = innovation_moment(innov, x, 4);
      if (!std::isfinite(m3) || !std::isfinite(m4)) check.pass = false;
      max_moment = std::max({max_moment, std::abs(m3), std::abs(m4)});
    }
    std::ostringstream detail;
    detail << "density finite and nonnegative on stencil; max |mu3|,|mu4| = "
           << max_moment << " (partial check)";
    check.detail = detail.str();
    report.checks.push_back(std::move(check));
  }

  // Coefficient derivative boundedness on the probe grid (partial: analytic
  // derivatives are available only to order 2).
  {
    AssumptionCheck check;
    check.name = "A4";
    check.pass = true;
    check.partial = true;
    double worst = 0.0;
    for (double x : probe.xs) {
      for (double v : {coeff.m(x), coeff.m_prime(x), coeff.m_second(x),
                       coeff.sigma(x), coeff.sigma_prime(x),
                       coeff.sigma_second(x)}) {
        if (!std::isfinite(v)) check.pass = false;
        worst = std::max(worst, std::abs(v));
      }
    }
    if (worst > probe.derivative_bound) check.pass = false;
    std::ostringstream detail;
    detail << "max |coefficient derivative| = " << worst << " (bound "
           << probe.derivative_bound << ", partial check)";
    check.detail = detail.str();
    report.checks.push_back(std::move(check));
  }

  // Grid condition: 1/(C k^kappa) < hk < C.
  {
    AssumptionCheck check;
    check.name = "A5";
    const double hk = grid.coarse_dt();
    const double lower = std::pow(static_cast<double>(grid.k), -probe.kappa) /
                         probe.bound_const;
    const double upper = probe.bound_const;
    check.pass = grid.h > 0.0 && grid.k >= 1 && grid.n >= 1 && hk > lower &&
                 hk < upper;
    std::ostringstream detail;
    detail << "requires " << lower << " < hk = " << hk << " < " << upper
           << " (kappa = " << probe.kappa << ", C = " << probe.bound_const
           << ")";
    check.detail = detail.str();
    report.checks.push_back(std::move(check));
  }

  return report;
}

} // namespace markovdiff
