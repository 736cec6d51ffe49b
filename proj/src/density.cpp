#include "markovdiff/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "markovdiff/paths.hpp"
#include "markovdiff/quadrature.hpp"
#include "markovdiff/rng.hpp"

namespace markovdiff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

} // namespace

double hermite_he(int n, double w) {
  const double w2 = w * w;
  switch (n) {
    case 0:
      return 1.0;
    case 1:
      return w;
    case 2:
      return w2 - 1.0;
    case 3:
      return w * (w2 - 3.0);
    case 4:
      return w2 * w2 - 6.0 * w2 + 3.0;
    case 5:
      return w * (w2 * w2 - 10.0 * w2 + 15.0);
    default:
      return w2 * w2 * w2 - 15.0 * w2 * w2 + 45.0 * w2 - 15.0;
  }
}

const char* density_method_name(DensityMethod method) {
  switch (method) {
    case DensityMethod::ClosedForm:
      return "closed-form";
    case DensityMethod::Quadrature:
      return "quadrature";
    case DensityMethod::BridgeMc:
      return "bridge-mc";
    default:
      return "convolution-oracle";
  }
}

double gaussian_proxy_ptilde(const CoefficientModel& coeff, double t, double x,
                             double y) {
  const double sy = coeff.sigma(y);
  const double dev = y - x - t * coeff.m(y);
  const double log_p = -0.5 * std::log(kTwoPi * t) - std::log(sy) -
                       dev * dev / (2.0 * t * sy * sy);
  return std::exp(log_p);
}

double dcfz_hat_p(const CoefficientModel& coeff, double t, double x,
                  double y) {
  const double dS = lamperti_S(coeff, y) - lamperti_S(coeff, x);
  const double log_p = -0.5 * std::log(kTwoPi * t) - std::log(coeff.sigma(y)) -
                       dS * dS / (2.0 * t) + transform_H(coeff, y) -
                       transform_H(coeff, x);
  return std::exp(log_p);
}

DcfzEvaluator::DcfzEvaluator(const CoefficientModel& coeff, BridgeConfig cfg)
    : coeff_(coeff), cfg_(cfg) {
  if (coeff_.constant_coefficients()) {
    // Constant drift/volatility make the potential constant, so the bridge
    // expectation collapses to a deterministic factor exp(t g).
    constant_g_ = true;
    const double c = coeff_.m(0.0) / coeff_.sigma(0.0);
    g_const_ = -0.5 * c * c;
    return;
  }
  lamperti_ = std::make_unique<Lamperti>(coeff_);
  // Dense potential table in the transformed coordinate; the bridge argument
  // stays well inside this span for every probe the library works at.
  const double v_lo = lamperti_->S(-30.0);
  const double v_hi = lamperti_->S(30.0);
  const int n_nodes = 8192;
  g_v_lo_ = v_lo;
  g_dv_ = (v_hi - v_lo) / static_cast<double>(n_nodes - 1);
  g_table_.resize(static_cast<size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    g_table_[static_cast<size_t>(i)] =
        lamperti_->g(v_lo + g_dv_ * static_cast<double>(i));
  }
  bridges_.reserve(static_cast<size_t>(cfg_.samples));
  for (int s = 0; s < cfg_.samples; ++s) {
    Philox gen(cfg_.seed, static_cast<std::uint64_t>(s));
    bridges_.push_back(simulate_bridge(gen, cfg_.mesh));
  }
}

double DcfzEvaluator::g_interp(double v) const {
  const double pos =
      std::clamp((v - g_v_lo_) / g_dv_, 0.0,
                 static_cast<double>(g_table_.size() - 1));
  const size_t i = std::min(static_cast<size_t>(pos), g_table_.size() - 2);
  const double frac = pos - static_cast<double>(i);
  // Catmull-Rom cubic (linear on the end cells): a C^1 interpolant keeps
  // finite-difference probes of the density from amplifying cell-boundary
  // kinks and tightens the table error itself.
  if (i == 0 || i + 2 >= g_table_.size()) {
    return g_table_[i] * (1.0 - frac) + g_table_[i + 1] * frac;
  }
  const double vm = g_table_[i - 1];
  const double v0 = g_table_[i];
  const double v1 = g_table_[i + 1];
  const double vp = g_table_[i + 2];
  const double a0 = -0.5 * vm + 1.5 * v0 - 1.5 * v1 + 0.5 * vp;
  const double a1 = vm - 2.5 * v0 + 2.0 * v1 - 0.5 * vp;
  const double a2 = 0.5 * (v1 - vm);
  return ((a0 * frac + a1) * frac + a2) * frac + v0;
}

DensityEstimate DcfzEvaluator::operator()(double t, double x, double y) const {
  DensityEstimate out;
  out.method = DensityMethod::BridgeMc;
  if (constant_g_) {
    const double s0 = coeff_.sigma(0.0);
    const double m0 = coeff_.m(0.0);
    const double u = x / s0;
    const double v = y / s0;
    const double log_hat = -0.5 * std::log(kTwoPi * t) - std::log(s0) -
                           (v - u) * (v - u) / (2.0 * t) +
                           (m0 / (s0 * s0)) * (y - x);
    out.value = std::exp(log_hat + t * g_const_);
    return out;
  }
  const double u = lamperti_->S(x);
  const double v = lamperti_->S(y);
  const double log_hat = -0.5 * std::log(kTwoPi * t) -
                         std::log(coeff_.sigma(y)) -
                         (v - u) * (v - u) / (2.0 * t) + lamperti_->H(y) -
                         lamperti_->H(x);
  const double sqrt_t = std::sqrt(t);
  const int mesh = cfg_.mesh;
  double sum = 0.0, sumsq = 0.0;
  for (const auto& bridge : bridges_) {
    // Trapezoid in the bridge parameter over the pinned line from u to v.
    double integral = 0.5 * (g_interp(u) + g_interp(v));
    for (int j = 1; j < mesh; ++j) {
      const double delta = static_cast<double>(j) / mesh;
      const double arg =
          u + delta * (v - u) + sqrt_t * bridge[static_cast<size_t>(j)];
      integral += g_interp(arg);
    }
    integral /= static_cast<double>(mesh);
    const double factor = std::exp(t * integral);
    sum += factor;
    sumsq += factor * factor;
  }
  const double n = static_cast<double>(bridges_.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sumsq / n - mean * mean);
  const double hat = std::exp(log_hat);
  out.value = hat * mean;
  out.std_error = hat * std::sqrt(var / n);
  out.flagged = out.std_error > cfg_.relative_stderr_cap * out.value;
  return out;
}

DensityEstimate dcfz_p(const CoefficientModel& coeff, double t, double x,
                       double y, const BridgeConfig& cfg) {
  return DcfzEvaluator(coeff, cfg)(t, x, y);
}

double closed_form_p_const(double m0, double s0, double t, double x,
                           double y) {
  const double var = s0 * s0 * t;
  const double dev = y - x - m0 * t;
  return std::exp(-dev * dev / (2.0 * var)) / std::sqrt(kTwoPi * var);
}

double closed_form_p_unit(double t, double x, double y) {
  return closed_form_p_const(1.0, 1.0, t, x, y);
}

namespace {

int deriv_order(Deriv which) {
  switch (which) {
    case Deriv::Dx:
    case Deriv::Dy:
      return 1;
    case Deriv::Dxx:
    case Deriv::Dyy:
      return 2;
    case Deriv::Dxxx:
    case Deriv::Dyyy:
      return 3;
    case Deriv::D4y:
      return 4;
    default:
      return 6;
  }
}

bool deriv_in_x(Deriv which) {
  return which == Deriv::Dx || which == Deriv::Dxx || which == Deriv::Dxxx;
}

double analytic_p_derivative(const CoefficientModel& coeff, double t, double x,
                             double y, Deriv which) {
  const double m0 = coeff.m(0.0);
  const double s0 = coeff.sigma(0.0);
  const double scale = s0 * std::sqrt(t);
  const double w = (y - x - m0 * t) / scale;
  const double p = closed_form_p_const(m0, s0, t, x, y);
  const int order = deriv_order(which);
  // d^n/dy^n p = (-1)^n He_n(w) p / scale^n; x-derivatives flip the sign of w
  // per order, which cancels the (-1)^n.
  double value = hermite_he(order, w) * p / std::pow(scale, order);
  if (!deriv_in_x(which) && (order % 2 == 1)) value = -value;
  return value;
}

template <typename F>
double stencil(const F& f, int order, double delta) {
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

} // namespace

double p_derivative(const CoefficientModel& coeff, double t, double x,
                    double y, Deriv which, DerivScheme scheme) {
  const bool analytic_available = coeff.constant_coefficients();
  if (scheme == DerivScheme::Analytic && !analytic_available) {
    throw std::invalid_argument(
        "p_derivative: analytic formulas require constant coefficients");
  }
  const bool use_analytic =
      scheme == DerivScheme::Analytic ||
      (scheme == DerivScheme::Auto && analytic_available);
  if (use_analytic) {
    return analytic_p_derivative(coeff, t, x, y, which);
  }
  const int order = deriv_order(which);
  if (order > 4) {
    throw std::invalid_argument(
        "p_derivative: order-6 derivative is analytic-only");
  }
  const double delta = std::max(1e-4, 1e-2 * std::sqrt(t));
  std::function<double(double)> line;
  if (analytic_available) {
    const double m0 = coeff.m(0.0);
    const double s0 = coeff.sigma(0.0);
    if (deriv_in_x(which)) {
      line = [m0, s0, t, x, y](double e) {
        return closed_form_p_const(m0, s0, t, x + e, y);
      };
    } else {
      line = [m0, s0, t, x, y](double e) {
        return closed_form_p_const(m0, s0, t, x, y + e);
      };
    }
  } else {
    auto eval = std::make_shared<DcfzEvaluator>(coeff);
    if (deriv_in_x(which)) {
      line = [eval, t, x, y](double e) { return (*eval)(t, x + e, y).value; };
    } else {
      line = [eval, t, x, y](double e) { return (*eval)(t, x, y + e).value; };
    }
  }
  const double coarse = stencil(line, order, delta);
  const double fine = stencil(line, order, 0.5 * delta);
  return (4.0 * fine - coarse) / 3.0; // one Richardson level
}

double chain_step_kernel(const CoefficientModel& coeff,
                         const InnovationModel& innov, double h, double x,
                         double y) {
  if (h <= 0.0) throw std::invalid_argument("chain_step_kernel: h must be > 0");
  const double sqrt_h = std::sqrt(h);
  return innov.density(x, (y - x - coeff.m(x) * h) / sqrt_h) / sqrt_h;
}

ChainLatticeError::ChainLatticeError(double leaked_mass)
    : std::runtime_error("chain transition lattice leaked probability mass " +
                         std::to_string(leaked_mass) +
                         " beyond the tolerance"),
      leaked(leaked_mass) {}

ChainTransitionOracle::ChainTransitionOracle(const CoefficientModel& coeff,
                                             const InnovationModel& innov,
                                             const GridSpec& grid, double x,
                                             const LatticeConfig& cfg)
    : coeff_(coeff), innov_(innov), grid_(grid), x_(x), cfg_(cfg) {
  const double kh = grid.coarse_dt();
  const double sigma_max = std::sqrt(coeff.sigma2_upper);
  const double half_width = cfg.width_sds * std::sqrt(kh) * sigma_max +
                            std::abs(coeff.m(x)) * kh + kh;
  const double range = 2.0 * half_width;
  spacing_ = cfg.spacing_override > 0.0
                 ? cfg.spacing_override
                 : std::min(std::sqrt(grid.h) / 8.0, range / 4096.0);
  const size_t count = static_cast<size_t>(std::ceil(range / spacing_)) + 1;
  nodes_.resize(count);
  for (size_t i = 0; i < count; ++i) {
    nodes_[i] = x - half_width + spacing_ * static_cast<double>(i);
  }

  // One-step kernel support in node offsets.
  const double reach = cfg.width_sds * std::sqrt(grid.h) * sigma_max;
  double m_min = coeff.m(nodes_.front());
  double m_max = m_min;
  for (double z : nodes_) {
    const double mv = coeff.m(z);
    m_min = std::min(m_min, mv);
    m_max = std::max(m_max, mv);
  }
  window_lo_ = static_cast<int>(
                   std::floor((m_min * grid.h - reach) / spacing_)) - 1;
  window_hi_ =
      static_cast<int>(std::ceil((m_max * grid.h + reach) / spacing_)) + 1;

  if (grid.k == 1) {
    node_density_.resize(count);
    for (size_t i = 0; i < count; ++i) {
      node_density_[i] = chain_step_kernel(coeff_, innov_, grid_.h, x_,
                                           nodes_[i]);
    }
  } else {
    // Exact first step from the off-lattice start.
    std::vector<double> dens(count);
    for (size_t i = 0; i < count; ++i) {
      dens[i] = chain_step_kernel(coeff_, innov_, grid_.h, x_, nodes_[i]);
    }

    const bool toeplitz =
        coeff_.constant_coefficients() && innov_.state_independent_shape;
    std::vector<double> row;
    if (toeplitz) {
      row.resize(static_cast<size_t>(window_hi_ - window_lo_) + 1);
      for (int d = window_lo_; d <= window_hi_; ++d) {
        row[static_cast<size_t>(d - window_lo_)] = chain_step_kernel(
            coeff_, innov_, grid_.h, nodes_[0],
            nodes_[0] + spacing_ * static_cast<double>(d));
      }
    }

    auto lattice_step = [&](const std::vector<double>& src) {
      std::vector<double> out(count, 0.0);
      const int n = static_cast<int>(count);
      for (int j = 0; j < n; ++j) {
        const double mass_j = node_weight(static_cast<size_t>(j)) *
                              src[static_cast<size_t>(j)];
        if (mass_j == 0.0) continue;
        const int lo = std::max(0, j + window_lo_);
        const int hi = std::min(n - 1, j + window_hi_);
        if (toeplitz) {
          const double* r = row.data() + (lo - j - window_lo_);
          double* o = out.data() + lo;
          for (int i = lo; i <= hi; ++i) {
            *o++ += mass_j * *r++;
          }
        } else {
          const double zj = nodes_[static_cast<size_t>(j)];
          for (int i = lo; i <= hi; ++i) {
            out[static_cast<size_t>(i)] +=
                mass_j * chain_step_kernel(coeff_, innov_, grid_.h, zj,
                                           nodes_[static_cast<size_t>(i)]);
          }
        }
      }
      return out;
    };

    for (int step = 2; step <= grid.k - 1; ++step) {
      dens = lattice_step(dens);
    }
    penultimate_ = std::move(dens);
    node_density_ = lattice_step(penultimate_);
  }

  double mass = 0.0;
  for (size_t i = 0; i < count; ++i) {
    mass += node_weight(i) * node_density_[i];
  }
  if (std::abs(mass - 1.0) > cfg.leak_tolerance) {
    throw ChainLatticeError(std::abs(mass - 1.0));
  }
}

double ChainTransitionOracle::node_weight(size_t j) const {
  const bool edge = (j == 0) || (j + 1 == nodes_.size());
  return edge ? 0.5 * spacing_ : spacing_;
}

double ChainTransitionOracle::operator()(double y) const {
  if (grid_.k == 1) {
    return chain_step_kernel(coeff_, innov_, grid_.h, x_, y);
  }
  // Exact last step: integrate the penultimate lattice density against the
  // one-step kernel into the (possibly off-lattice) target.
  const double lo_z = y - spacing_ * static_cast<double>(window_hi_ + 1);
  const double hi_z = y - spacing_ * static_cast<double>(window_lo_ - 1);
  const double first = nodes_.front();
  int j_lo = static_cast<int>(std::floor((lo_z - first) / spacing_));
  int j_hi = static_cast<int>(std::ceil((hi_z - first) / spacing_));
  j_lo = std::max(j_lo, 0);
  j_hi = std::min(j_hi, static_cast<int>(nodes_.size()) - 1);
  double acc = 0.0;
  for (int j = j_lo; j <= j_hi; ++j) {
    const double d = penultimate_[static_cast<size_t>(j)];
    if (d == 0.0) continue;
    acc += node_weight(static_cast<size_t>(j)) * d *
           chain_step_kernel(coeff_, innov_, grid_.h,
                             nodes_[static_cast<size_t>(j)], y);
  }
  return acc;
}

double chain_transition_ph(const CoefficientModel& coeff,
                           const InnovationModel& innov, const GridSpec& grid,
                           double x, double y, const LatticeConfig& cfg) {
  return ChainTransitionOracle(coeff, innov, grid, x, cfg)(y);
}

} // namespace markovdiff
