#pragma once

#include <functional>
#include <string>
#include <vector>

#include "markovdiff/rng.hpp"

namespace markovdiff {

using RealFn = std::function<double(double)>;

// Drift m and diffusion coefficient sigma with analytic derivatives up to the
// orders the transforms and frozen-generator expansions consume.
struct CoefficientModel {
  std::string name;
  RealFn m;
  RealFn m_prime;
  RealFn m_second;
  RealFn sigma;
  RealFn sigma_prime;
  RealFn sigma_second;
  double sigma2_lower = 0.0; // declared lower bound for sigma(x)^2
  double sigma2_upper = 0.0; // declared upper bound for sigma(x)^2
  bool constant_m = false;
  bool constant_sigma = false;

  bool constant_coefficients() const { return constant_m && constant_sigma; }
};

CoefficientModel unit_model();       // m = 1, sigma = 1
CoefficientModel zero_drift_model(); // m = 0, sigma = 1
// m(x) = a sin x, sigma(x) = 1 + b tanh x, |b| < 1.
CoefficientModel smooth_model(double a, double b);
CoefficientModel ou_model(); // m(x) = -x, sigma = 1 (mean-reverting benchmark)

// Two-component zero-mean Gaussian mixture shape with unit variance:
// N(a, s^2) with probability w, N(-wa/(1-w), s^2) with probability 1-w.
struct MixtureParams {
  double w = 0.25;
  double a = 0.0;
  double s = 1.0;

  double second_mean() const { return -w * a / (1.0 - w); }
  double mu3() const; // third moment of the shape
  double mu4() const; // fourth moment of the shape
};

// Solves for the component offset so the unit-variance shape has third moment
// `mu3` at mixing weight `w`; throws std::invalid_argument when no such shape
// exists (variance constraint violated or w makes mu3 unreachable).
MixtureParams solve_mixture(double mu3, double w = 0.25);

// Conditional innovation law: density q(x, .), sampler, and moments. Built-in
// families scale a fixed unit-variance shape by sigma(x), so the conditional
// variance is sigma(x)^2 while the standardized moments stay state-free.
struct InnovationModel {
  std::string name;
  RealFn sigma; // same sigma as the coefficient model it was built against
  std::function<double(double, double)> density; // q(x, y)
  std::function<double(double, Philox&)> sample; // draw xi given state x
  bool closed_moments = false;
  double std_mu3 = 0.0; // third moment of the unit-variance shape
  double std_mu4 = 3.0; // fourth moment of the unit-variance shape
  bool state_independent_shape = false;
  double support_radius = 12.0; // quadrature truncation, in conditional sd units
};

InnovationModel gaussian_innovation(const CoefficientModel& coeff);
InnovationModel mixture_innovation(const CoefficientModel& coeff,
                                   const MixtureParams& params);

// nu-th conditional moment of the innovation at state x, nu in 1..4.
// Closed form for built-in families, quadrature fallback otherwise.
double innovation_moment(const InnovationModel& innov, double x, int nu);
// Quadrature evaluation regardless of closed-form availability (oracle path).
double innovation_moment_quadrature(const InnovationModel& innov, double x,
                                    int nu);

// Time discretization: fine step h, subsampling factor k, n observed points.
struct GridSpec {
  double h = 0.0;
  int k = 1;
  int n = 1;

  double coarse_dt() const { return h * static_cast<double>(k); }
  double horizon() const { return coarse_dt() * static_cast<double>(n); }
};

enum class Regime { VanishingRatio, FixedRatio, Neither };

// Declared targets for the regime classifier: n/k below `vanishing_max_ratio`
// is the vanishing-ratio (convergence) regime; n/k within `fixed_ratio_rel_tol`
// of `fixed_ratio_c` is the fixed-ratio (sharpness) regime.
struct RegimeTargets {
  double vanishing_max_ratio = 0.25;
  double fixed_ratio_c = 1.0;
  double fixed_ratio_rel_tol = 0.25;
};

Regime classify_regime(const GridSpec& grid, const RegimeTargets& targets = {});
const char* regime_name(Regime r);

// ---- Coordinate transforms -------------------------------------------------
// S(x) = int_0^x du / sigma(u) maps the diffusion to unit diffusion
// coefficient; in the transformed coordinate v = S(x) the drift becomes
// C(v) = m(x)/sigma(x) - sigma'(x)/2 at x = S_inv(v), the potential is
// g(v) = -(C(v)^2 + C'(v))/2, and H(x) = int_0^{S(x)} C(u) du.

double lamperti_S(const CoefficientModel& coeff, double x);
double lamperti_S_inv(const CoefficientModel& coeff, double v);
// C and g take the *transformed* coordinate u.
double drift_potential_C(const CoefficientModel& coeff, double u);
double drift_potential_C_prime(const CoefficientModel& coeff, double u);
double potential_g(const CoefficientModel& coeff, double u);
double transform_H(const CoefficientModel& coeff, double x);

// Table-backed transform evaluator for hot paths (bridge-expectation density):
// cumulative quadrature tables for S and H on a uniform knot grid, monotone
// inversion for S_inv, all O(1) per call after construction.
class Lamperti {
public:
  explicit Lamperti(const CoefficientModel& coeff, double x_lo = -40.0,
                    double x_hi = 40.0, int knots_per_unit = 64);

  double S(double x) const;
  double S_inv(double v) const;
  double C(double v) const;
  double C_prime(double v) const;
  double g(double v) const;
  double H(double x) const;

private:
  CoefficientModel coeff_;
  double x_lo_;
  double dx_;
  std::vector<double> Sx_; // S at knots
  std::vector<double> Hx_; // H at knots

  double s_increment(double from, double to) const;
  double h_increment(double from, double to) const;
  double C_at_x(double x) const;
};

// ---- Assumption validators ---------------------------------------------
struct AssumptionCheck {
  std::string name;
  bool pass = false;
  bool partial = false; // check covers only a testable fragment
  std::string detail;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  bool all_pass() const;
};

struct ProbeConfig {
  std::vector<double> xs = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
  double kappa = 0.19;      // grid-condition exponent, must stay below 1/5
  double bound_const = 1.0; // grid-condition constant C
  double derivative_bound = 1e6;
};

ValidationReport validate_assumptions(const CoefficientModel& coeff,
                                      const InnovationModel& innov,
                                      const GridSpec& grid,
                                      const ProbeConfig& probe = {});

} // namespace markovdiff
