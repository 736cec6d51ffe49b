#include "markovdiff/edgeworth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <vector>

#include "markovdiff/quadrature.hpp"

namespace markovdiff {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kUnderflowFloor = 1e-290;

template <typename F>
double central_stencil(const F& f, int order, double delta) {
  switch (order) {
    case 1:
      return (f(delta) - f(-delta)) / (2.0 * delta);
    case 2:
      return (f(delta) - 2.0 * f(0.0) + f(-delta)) / (delta * delta);
    case 3:
      return (f(2.0 * delta) - 2.0 * f(delta) + 2.0 * f(-delta) -
              f(-2.0 * delta)) /
             (2.0 * delta * delta * delta);
    default:
      return (f(2.0 * delta) - 4.0 * f(delta) + 6.0 * f(0.0) -
              4.0 * f(-delta) + f(-2.0 * delta)) /
             (delta * delta * delta * delta);
  }
}

double scan_drift_bound(const CoefficientModel& coeff) {
  double bound = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double x = -10.0 + 0.1 * i;
    bound = std::max(bound, std::abs(coeff.m(x)));
  }
  return bound;
}

// Appends c +/- {1,3,7} * width to the breakpoint list, clipped to [lo, hi].
void seed_breakpoints(std::vector<double>& bps, double c, double width,
                      double lo, double hi) {
  for (double j : {0.0, 1.0, 3.0, 7.0}) {
    for (double sgn : {-1.0, 1.0}) {
      const double z = c + sgn * j * width;
      if (z > lo && z < hi) bps.push_back(z);
      if (j == 0.0) break;
    }
  }
}

// Uniform table of a kernel slice z -> value(s, x, z) with linear
// interpolation; reads outside the tabulated window return zero (the slice
// is negligible beyond the stored width).
struct KernelSliceTable {
  double z_lo = 0.0;
  double dz = 1.0;
  std::vector<double> values;

  // Catmull-Rom cubic through the lattice values (linear on the first and
  // last cells). A C^1 interpolant keeps the outer spatial quadrature's
  // error estimate from stalling on cell-boundary kinks and tightens the
  // interpolation error itself.
  double eval(double z) const {
    const double u = (z - z_lo) / dz;
    if (!(u > 0.0) || u >= static_cast<double>(values.size() - 1)) return 0.0;
    const auto i = static_cast<size_t>(u);
    const double frac = u - static_cast<double>(i);
    if (i == 0 || i + 2 >= values.size()) {
      return values[i] * (1.0 - frac) + values[i + 1] * frac;
    }
    const double vm = values[i - 1];
    const double v0 = values[i];
    const double v1 = values[i + 1];
    const double vp = values[i + 2];
    const double a0 = -0.5 * vm + 1.5 * v0 - 1.5 * v1 + 0.5 * vp;
    const double a1 = vm - 2.5 * v0 + 2.0 * v1 - 0.5 * vp;
    const double a2 = 0.5 * (v1 - vm);
    return ((a0 * frac + a1) * frac + a2) * frac + v0;
  }
};

double closed_pi1_const(double m0, double s0, double mu3, double t, double x,
                        double y) {
  const double w = (y - x - m0 * t) / (s0 * std::sqrt(t));
  const double p = closed_form_p_const(m0, s0, t, x, y);
  return mu3 / (6.0 * s0 * s0 * s0) * hermite_he(3, w) * p / std::sqrt(t);
}

double closed_pi2_const(double m0, double s0, double mu3, double excess,
                        double t, double x, double y) {
  const double s02 = s0 * s0;
  const double w = (y - x - m0 * t) / (s0 * std::sqrt(t));
  const double p = closed_form_p_const(m0, s0, t, x, y);
  const double kurt = excess * hermite_he(4, w) / (24.0 * s02 * s02 * t);
  const double nested =
      mu3 * mu3 * hermite_he(6, w) / (72.0 * s02 * s02 * s02 * t);
  return p * (kurt + nested);
}

quad::Options space_options(const ConvolveConfig& cfg) {
  quad::Options opt;
  opt.abs_tol = cfg.abs_tol;
  opt.rel_tol = cfg.rel_tol;
  opt.max_panels = cfg.max_panels;
  return opt;
}

// Reduced-budget configuration for the inner convolution of the nested term.
ConvolveConfig inner_config(const ConvolveConfig& cfg) {
  ConvolveConfig inner = cfg;
  inner.theta_nodes = std::max(24, cfg.theta_nodes / 2);
  inner.abs_tol = cfg.abs_tol * 10.0;
  inner.rel_tol = cfg.rel_tol * 10.0;
  return inner;
}

double convolve_impl(const Kernel& f, const Kernel& g, double t, double x,
                     double y, const ConvolveConfig& cfg, double* err_out);

// pi1 tabulated per exact time node on a uniform lattice in the arrival
// state, for use as the leading operand of the outer convolution. The outer
// convolution evaluates its leading kernel only at the Gauss-Legendre time
// nodes, so exact-double keys match.
Kernel tabulated_pi1_kernel(const Kernel& p, const Kernel& f1p,
                            const ConvolveConfig& cfg, int lattice_nodes) {
  auto tables = std::make_shared<std::map<double, KernelSliceTable>>();
  auto p_copy = std::make_shared<const Kernel>(p);
  auto f1p_copy = std::make_shared<const Kernel>(f1p);
  const ConvolveConfig inner = inner_config(cfg);
  Kernel out;
  out.sigma_max = p.sigma_max;
  out.drift_max = p.drift_max;
  // Tables are keyed by the exact time nodes of the outer rule and centered
  // at the starting state of the first call; one kernel instance must not be
  // shared across different outer (t, x).
  out.value = [tables, p_copy, f1p_copy, inner,
               lattice_nodes](double s, double x, double z) {
    auto it = tables->find(s);
    if (it == tables->end()) {
      KernelSliceTable table;
      const double width = 12.0 * p_copy->sigma_max * std::sqrt(s) +
                           p_copy->drift_max * s;
      table.z_lo = x - width;
      table.dz = 2.0 * width / static_cast<double>(lattice_nodes - 1);
      table.values.resize(lattice_nodes);
      // Soft tolerance: table entries enter a linearly interpolated factor,
      // so interpolation error dominates and the refinement ladder above
      // validates the result; entries far in the tail would otherwise trip
      // the absolute tolerance on values that barely contribute.
      for (int i = 0; i < lattice_nodes; ++i) {
        const double zi = table.z_lo + table.dz * i;
        table.values[i] =
            convolve_impl(*p_copy, *f1p_copy, s, x, zi, inner, nullptr);
      }
      it = tables->emplace(s, std::move(table)).first;
    }
    return it->second.eval(z);
  };
  return out;
}

} // namespace

bool EdgeworthContext::closed_form_available() const {
  return coeff.constant_coefficients() && innov.state_independent_shape;
}

EdgeworthContext make_context(CoefficientModel coeff, InnovationModel innov,
                              GridSpec grid, ConvolveConfig quad,
                              BridgeConfig bridge) {
  EdgeworthContext ctx;
  ctx.coeff = std::move(coeff);
  ctx.innov = std::move(innov);
  ctx.grid = grid;
  ctx.quad = quad;
  ctx.bridge = bridge;
  const ProbeConfig probe;
  const double hk = grid.h * static_cast<double>(grid.k);
  const double lower =
      std::pow(static_cast<double>(grid.k), -probe.kappa) / probe.bound_const;
  const bool band_ok = grid.h > 0.0 && grid.k >= 1 && grid.n >= 1 &&
                       hk > lower && hk < probe.bound_const;
  ctx.regime_violating = !band_ok;
  return ctx;
}

double skewness_at(const EdgeworthContext& ctx, double x) {
  return innovation_moment(ctx.innov, x, 3);
}

double excess_kurtosis_at(const EdgeworthContext& ctx, double x) {
  const double m2 = innovation_moment(ctx.innov, x, 2);
  return innovation_moment(ctx.innov, x, 4) - 3.0 * m2 * m2;
}

Kernel zero_kernel() {
  Kernel k;
  k.value = [](double, double, double) { return 0.0; };
  k.x_derivative = [](int, double, double, double) { return 0.0; };
  k.y_derivative = [](int, double, double, double) { return 0.0; };
  return k;
}

Kernel diffusion_kernel(const EdgeworthContext& ctx) {
  Kernel k;
  if (ctx.coeff.constant_coefficients()) {
    const double m0 = ctx.coeff.m(0.0);
    const double s0 = ctx.coeff.sigma(0.0);
    k.sigma_max = s0;
    k.drift_max = std::abs(m0);
    k.value = [m0, s0](double t, double x, double y) {
      return closed_form_p_const(m0, s0, t, x, y);
    };
    k.x_derivative = [m0, s0](int n, double t, double x, double y) {
      const double scale = s0 * std::sqrt(t);
      const double w = (y - x - m0 * t) / scale;
      const double p = closed_form_p_const(m0, s0, t, x, y);
      return hermite_he(n, w) * p / std::pow(scale, n);
    };
    k.y_derivative = [m0, s0](int n, double t, double x, double y) {
      const double scale = s0 * std::sqrt(t);
      const double w = (y - x - m0 * t) / scale;
      const double p = closed_form_p_const(m0, s0, t, x, y);
      const double value = hermite_he(n, w) * p / std::pow(scale, n);
      return (n % 2 == 1) ? -value : value;
    };
    return k;
  }
  auto eval = std::make_shared<const DcfzEvaluator>(ctx.coeff, ctx.bridge);
  k.sigma_max = ctx.coeff.sigma2_upper > 0.0
                    ? std::sqrt(ctx.coeff.sigma2_upper)
                    : 1.0;
  k.drift_max = scan_drift_bound(ctx.coeff);
  k.value = [eval](double t, double x, double y) {
    return (*eval)(t, x, y).value;
  };
  return k;
}

double kernel_x_derivative(const Kernel& f, int n, double t, double x,
                           double y) {
  if (n < 1 || n > 6) {
    throw std::invalid_argument("kernel_x_derivative: order must be in 1..6");
  }
  if (f.x_derivative) return f.x_derivative(n, t, x, y);
  if (n > 4) {
    throw std::invalid_argument(
        "kernel_x_derivative: orders above 4 need an analytic derivative");
  }
  const double base = (n <= 2 ? 0.06 : 0.12) * f.sigma_max * std::sqrt(t);
  const double delta = std::max(base, 1e-7);
  const auto line = [&](double e) { return f.value(t, x + e, y); };
  const double coarse = central_stencil(line, n, delta);
  const double fine = central_stencil(line, n, 0.5 * delta);
  return (4.0 * fine - coarse) / 3.0;
}

namespace {

double convolve_impl(const Kernel& f, const Kernel& g, double t, double x,
                     double y, const ConvolveConfig& cfg, double* err_out) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("convolve_time_space: need t > 0");
  }
  const quad::GaussLegendre& gl = quad::gauss_legendre(cfg.theta_nodes);
  const quad::Options opt = space_options(cfg);
  const double width_f =
      cfg.width_sds * f.sigma_max * std::sqrt(t) + f.drift_max * t;
  const double width_g =
      cfg.width_sds * g.sigma_max * std::sqrt(t) + g.drift_max * t;
  const double lo = std::min(x - width_f, y - width_g);
  const double hi = std::max(x + width_f, y + width_g);
  const double time_floor = cfg.time_floor_frac * t;
  double total = 0.0;
  double err_total = 0.0;
  std::vector<double> bps;
  for (size_t i = 0; i < gl.nodes.size(); ++i) {
    const double theta = 0.25 * kPi * (gl.nodes[i] + 1.0);
    const double sin_t = std::sin(theta);
    const double cos_t = std::cos(theta);
    const double s = std::max(t * sin_t * sin_t, time_floor);
    const double tau = std::max(t * cos_t * cos_t, time_floor);
    const double jac = 0.25 * kPi * t * 2.0 * sin_t * cos_t * gl.weights[i];
    bps.clear();
    seed_breakpoints(bps, x, f.sigma_max * std::sqrt(s) + f.drift_max * s, lo,
                     hi);
    seed_breakpoints(bps, y, g.sigma_max * std::sqrt(tau) + g.drift_max * tau,
                     lo, hi);
    const auto integrand = [&](double z) {
      return f.value(s, x, z) * g.value(tau, z, y);
    };
    // Slices whose integrand peaks dwarf the cancelled integral cannot reach
    // an absolute tolerance, so accept each slice's estimate and enforce the
    // tolerance on the accumulated result instead.
    const quad::Result r = quad::integrate(integrand, lo, hi, opt, bps);
    total += jac * r.value;
    err_total += jac * r.error;
  }
  if (err_out != nullptr) {
    *err_out = err_total;
  }
  return total;
}

} // namespace

double convolve_time_space(const Kernel& f, const Kernel& g, double t,
                           double x, double y, const ConvolveConfig& cfg) {
  double err_total = 0.0;
  const double total = convolve_impl(f, g, t, x, y, cfg, &err_total);
  const double tol = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total));
  if (!(err_total <= tol)) {
    throw quad::QuadratureError(err_total, tol);
  }
  return total;
}

Kernel apply_F1(const EdgeworthContext& ctx, Kernel f) {
  auto base = std::make_shared<const Kernel>(std::move(f));
  const InnovationModel innov = ctx.innov;
  Kernel out;
  out.sigma_max = base->sigma_max;
  out.drift_max = base->drift_max;
  out.value = [base, innov](double t, double x, double y) {
    const double mu3 = innovation_moment(innov, x, 3);
    if (mu3 == 0.0) return 0.0;
    return mu3 / 6.0 * kernel_x_derivative(*base, 3, t, x, y);
  };
  return out;
}

Kernel apply_F2(const EdgeworthContext& ctx, Kernel f) {
  auto base = std::make_shared<const Kernel>(std::move(f));
  const InnovationModel innov = ctx.innov;
  Kernel out;
  out.sigma_max = base->sigma_max;
  out.drift_max = base->drift_max;
  out.value = [base, innov](double t, double x, double y) {
    const double m2 = innovation_moment(innov, x, 2);
    const double excess = innovation_moment(innov, x, 4) - 3.0 * m2 * m2;
    if (excess == 0.0) return 0.0;
    return excess / 24.0 * kernel_x_derivative(*base, 4, t, x, y);
  };
  return out;
}

double frozen_generator_term(const EdgeworthContext& ctx, double t, double x,
                             double y) {
  if (ctx.coeff.constant_coefficients()) return 0.0;
  const Kernel p = diffusion_kernel(ctx);
  auto base = std::make_shared<const Kernel>(p);
  const CoefficientModel coeff = ctx.coeff;
  const double sig_x = coeff.sigma(x);
  const double cap_a = 0.5 * sig_x * sig_x;
  const double cap_b = coeff.m(x);
  Kernel defect;
  defect.sigma_max = p.sigma_max;
  defect.drift_max = p.drift_max;
  defect.value = [base, coeff, cap_a, cap_b](double tau, double z, double yy) {
    const double sig = coeff.sigma(z);
    const double sig_p = coeff.sigma_prime(z);
    const double sig_pp = coeff.sigma_second(z);
    const double a = 0.5 * sig * sig;
    const double a_p = sig * sig_p;
    const double a_pp = sig_p * sig_p + sig * sig_pp;
    const double b = coeff.m(z);
    const double b_p = coeff.m_prime(z);
    const double b_pp = coeff.m_second(z);
    const double d4 = cap_a * cap_a - a * a;
    const double d3 = 2.0 * cap_a * cap_b - 2.0 * a * (a_p + b);
    const double d2 =
        cap_b * cap_b - (a * a_pp + 2.0 * a * b_p + a_p * b + b * b);
    const double d1 = -(a * b_pp + b * b_p);
    double sum = 0.0;
    if (d1 != 0.0) sum += d1 * kernel_x_derivative(*base, 1, tau, z, yy);
    if (d2 != 0.0) sum += d2 * kernel_x_derivative(*base, 2, tau, z, yy);
    if (d3 != 0.0) sum += d3 * kernel_x_derivative(*base, 3, tau, z, yy);
    if (d4 != 0.0) sum += d4 * kernel_x_derivative(*base, 4, tau, z, yy);
    return sum;
  };
  return 0.5 * convolve_time_space(p, defect, t, x, y, ctx.quad);
}

double pi1(const EdgeworthContext& ctx, double t, double x, double y,
           CorrectionMethod method) {
  const bool closed_ok = ctx.closed_form_available();
  if (method == CorrectionMethod::Closed && !closed_ok) {
    throw std::invalid_argument(
        "pi1: closed form requires constant coefficients and a "
        "state-independent innovation shape");
  }
  if (method != CorrectionMethod::Numeric && closed_ok) {
    return closed_pi1_const(ctx.coeff.m(0.0), ctx.coeff.sigma(0.0),
                            skewness_at(ctx, 0.0), t, x, y);
  }
  const Kernel p = diffusion_kernel(ctx);
  const Kernel f1p = apply_F1(ctx, p);
  return convolve_time_space(p, f1p, t, x, y, ctx.quad);
}

double pi1_closed_constant(double mu3, double t, double x, double y) {
  return closed_pi1_const(1.0, 1.0, mu3, t, x, y);
}

Pi2Breakdown pi2_terms(const EdgeworthContext& ctx, double t, double x,
                       double y, CorrectionMethod method) {
  const bool closed_ok = ctx.closed_form_available();
  if (method == CorrectionMethod::Closed && !closed_ok) {
    throw std::invalid_argument(
        "pi2: closed form requires constant coefficients and a "
        "state-independent innovation shape");
  }
  Pi2Breakdown out;
  if (method != CorrectionMethod::Numeric && closed_ok) {
    const double m0 = ctx.coeff.m(0.0);
    const double s0 = ctx.coeff.sigma(0.0);
    const double s02 = s0 * s0;
    const double mu3 = skewness_at(ctx, 0.0);
    const double excess = excess_kurtosis_at(ctx, 0.0);
    const double w = (y - x - m0 * t) / (s0 * std::sqrt(t));
    const double p = closed_form_p_const(m0, s0, t, x, y);
    out.kurtosis_term = p * excess * hermite_he(4, w) / (24.0 * s02 * s02 * t);
    out.nested_term =
        p * mu3 * mu3 * hermite_he(6, w) / (72.0 * s02 * s02 * s02 * t);
    out.frozen_term = 0.0;
    return out;
  }
  const Kernel p = diffusion_kernel(ctx);
  const bool skewless = ctx.innov.closed_moments && ctx.innov.std_mu3 == 0.0 &&
                        ctx.innov.state_independent_shape;
  const bool excessless = ctx.innov.closed_moments &&
                          ctx.innov.std_mu4 == 3.0 &&
                          ctx.innov.state_independent_shape;
  if (!excessless) {
    const Kernel f2p = apply_F2(ctx, p);
    out.kurtosis_term = convolve_time_space(p, f2p, t, x, y, ctx.quad);
  }
  if (!skewless) {
    // pi1 (*) F1[p]: equal to the nested form p (*) F1[pi1] by Fubini. The
    // tabulated pi1 lattice is refined until the outer value settles.
    const Kernel f1p = apply_F1(ctx, p);
    // The tabulated factor is piecewise linear, which caps the attainable
    // spatial quadrature accuracy well above the smooth-kernel tolerances;
    // the term's accuracy is governed by the refinement ladder, so the outer
    // quadrature only needs to resolve moves on that scale.
    ConvolveConfig outer = ctx.quad;
    outer.rel_tol = std::max(outer.rel_tol, 0.02 * ctx.quad.nested_rel_move);
    outer.abs_tol = std::max(outer.abs_tol, 1e-7);
    double prev = 0.0;
    bool have_prev = false;
    bool settled = false;
    for (int nodes = ctx.quad.nested_base_nodes;
         nodes <= ctx.quad.nested_max_nodes; nodes = 2 * nodes - 1) {
      const Kernel tab = tabulated_pi1_kernel(p, f1p, ctx.quad, nodes);
      const double value = convolve_time_space(tab, f1p, t, x, y, outer);
      if (have_prev &&
          std::abs(value - prev) <=
              std::max(ctx.quad.nested_rel_move * std::abs(value), 1e-12)) {
        prev = value;
        settled = true;
        break;
      }
      prev = value;
      have_prev = true;
    }
    out.nested_term = prev;
    out.nested_converged = settled;
  }
  out.frozen_term = frozen_generator_term(ctx, t, x, y);
  return out;
}

double pi2(const EdgeworthContext& ctx, double t, double x, double y,
           CorrectionMethod method) {
  return pi2_terms(ctx, t, x, y, method).total();
}

double pi2_closed_constant(double mu3, double excess, double t, double x,
                           double y) {
  return closed_pi2_const(1.0, 1.0, mu3, excess, t, x, y);
}

DensityUnderflowError::DensityUnderflowError(double log_p_value)
    : std::runtime_error("transition density underflow in ratio statistic"),
      log_p(log_p_value) {}

namespace {

double log_proxy_density(const CoefficientModel& coeff, double t, double x,
                         double y) {
  const double sy = coeff.sigma(y);
  const double dev = y - x - t * coeff.m(y);
  return -0.5 * std::log(2.0 * kPi * t) - std::log(sy) -
         dev * dev / (2.0 * t * sy * sy);
}

double delta_ratio(const EdgeworthContext& ctx, double x, double y,
                   CorrectionMethod method, bool second_order) {
  const double t = ctx.grid.coarse_dt();
  const double k = static_cast<double>(ctx.grid.k);
  const bool closed_ok = ctx.closed_form_available();
  if (method == CorrectionMethod::Closed && !closed_ok) {
    throw std::invalid_argument(
        "delta ratios: closed form requires constant coefficients and a "
        "state-independent innovation shape");
  }
  if (method != CorrectionMethod::Numeric && closed_ok) {
    // The density cancels exactly; only Hermite factors remain.
    const double m0 = ctx.coeff.m(0.0);
    const double s0 = ctx.coeff.sigma(0.0);
    const double s02 = s0 * s0;
    const double w = (y - x - m0 * t) / (s0 * std::sqrt(t));
    if (!second_order) {
      const double mu3 = skewness_at(ctx, 0.0);
      return mu3 / (6.0 * s02 * s0 * std::sqrt(k)) * hermite_he(3, w);
    }
    const double mu3 = skewness_at(ctx, 0.0);
    const double excess = excess_kurtosis_at(ctx, 0.0);
    return (excess * hermite_he(4, w) / (24.0 * s02 * s02) +
            mu3 * mu3 * hermite_he(6, w) / (72.0 * s02 * s02 * s02)) /
           k;
  }
  const Kernel p_kernel = diffusion_kernel(ctx);
  const double p = p_kernel.value(t, x, y);
  if (!(p > kUnderflowFloor)) {
    throw DensityUnderflowError(log_proxy_density(ctx.coeff, t, x, y));
  }
  if (!second_order) {
    return std::sqrt(ctx.grid.h) * pi1(ctx, t, x, y, method) / p;
  }
  return ctx.grid.h * pi2(ctx, t, x, y, method) / p;
}

} // namespace

double delta1(const EdgeworthContext& ctx, double x, double y,
              CorrectionMethod method) {
  return delta_ratio(ctx, x, y, method, false);
}

double delta2(const EdgeworthContext& ctx, double x, double y,
              CorrectionMethod method) {
  return delta_ratio(ctx, x, y, method, true);
}

} // namespace markovdiff
