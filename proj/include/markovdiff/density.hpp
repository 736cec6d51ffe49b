#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "markovdiff/models.hpp"

namespace markovdiff {

enum class DensityMethod { ClosedForm, Quadrature, BridgeMc, ConvolutionOracle };
const char* density_method_name(DensityMethod method);

struct DensityEstimate {
  double value = 0.0;
  double std_error = 0.0; // 0 for deterministic methods
  DensityMethod method = DensityMethod::ClosedForm;
  bool flagged = false; // Monte-Carlo error above the configured cap
};

// Gaussian proxy with coefficients frozen at the terminal point:
// (2 pi t)^{-1/2} sigma(y)^{-1} exp(-(y - x - t m(y))^2 / (2 t sigma(y)^2)).
double gaussian_proxy_ptilde(const CoefficientModel& coeff, double t, double x,
                             double y);

// Explicit factor of the bridge representation:
// (2 pi t)^{-1/2} sigma(y)^{-1} exp(-(S(y) - S(x))^2 / (2t) + H(y) - H(x)).
double dcfz_hat_p(const CoefficientModel& coeff, double t, double x, double y);

struct BridgeConfig {
  int samples = 256;
  int mesh = 64; // dyadic
  std::uint64_t seed = 12345;
  double relative_stderr_cap = 0.05;
};

// Transition density via the bridge representation: hat_p times the
// Monte-Carlo bridge expectation of exp(t int_0^1 g(line + sqrt(t) B)).
// Reuses one fixed matrix of bridge draws across all (t, x, y) — common
// random numbers make the estimate a smooth function of its arguments.
class DcfzEvaluator {
public:
  explicit DcfzEvaluator(const CoefficientModel& coeff, BridgeConfig cfg = {});
  DensityEstimate operator()(double t, double x, double y) const;

private:
  CoefficientModel coeff_;
  BridgeConfig cfg_;
  bool constant_g_ = false;
  double g_const_ = 0.0;
  std::unique_ptr<Lamperti> lamperti_;
  std::vector<double> g_table_;
  double g_v_lo_ = 0.0;
  double g_dv_ = 0.0;
  std::vector<std::vector<double>> bridges_;

  double g_interp(double v) const;
};

// Convenience wrapper constructing a fresh evaluator per call.
DensityEstimate dcfz_p(const CoefficientModel& coeff, double t, double x,
                       double y, const BridgeConfig& cfg = {});

double closed_form_p_unit(double t, double x, double y);
// N(y; x + m0 t, s0^2 t): exact transition density for constant coefficients.
double closed_form_p_const(double m0, double s0, double t, double x, double y);

// Probabilists' Hermite polynomial He_n(z), n in 0..6. Gaussian derivatives
// satisfy d^n/dz^n phi(z) = (-1)^n He_n(z) phi(z).
double hermite_he(int n, double z);

enum class Deriv { Dx, Dy, Dxx, Dyy, Dxxx, Dyyy, D4y, D6y };
enum class DerivScheme { Auto, Analytic, FiniteDifference };

// Spatial derivative of the transition density p(t, x, .). Analytic Gaussian
// formulas for constant-coefficient models; central finite differences with
// one Richardson level otherwise (order 6 is analytic-only).
double p_derivative(const CoefficientModel& coeff, double t, double x,
                    double y, Deriv which,
                    DerivScheme scheme = DerivScheme::Auto);

// One chain step: h^{-1/2} q(x, (y - x - m(x) h) / sqrt(h)).
double chain_step_kernel(const CoefficientModel& coeff,
                         const InnovationModel& innov, double h, double x,
                         double y);

struct LatticeConfig {
  double width_sds = 12.0;      // half-width in k-step standard deviations
  double leak_tolerance = 1e-6; // acceptable |total mass - 1|
  double spacing_override = 0.0; // > 0 replaces the default spacing rule
};

// Raised when probability mass escapes the lattice beyond the tolerance.
class ChainLatticeError : public std::runtime_error {
public:
  explicit ChainLatticeError(double leaked_mass);
  double leaked;
};

// Brute-force oracle for the k-step chain transition density: repeated
// numerical composition of the one-step kernel on a uniform spatial lattice.
// First and last steps are evaluated exactly (off-lattice start and target).
class ChainTransitionOracle {
public:
  ChainTransitionOracle(const CoefficientModel& coeff,
                        const InnovationModel& innov, const GridSpec& grid,
                        double x, const LatticeConfig& cfg = {});

  double operator()(double y) const; // p_h(kh, x, y)
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& node_density() const { return node_density_; }
  double node_spacing() const { return spacing_; }

private:
  CoefficientModel coeff_;
  InnovationModel innov_;
  GridSpec grid_;
  double x_;
  LatticeConfig cfg_;
  std::vector<double> nodes_;
  std::vector<double> penultimate_; // density after k-1 steps, on the lattice
  std::vector<double> node_density_; // density after k steps, on the lattice
  double spacing_ = 0.0;
  int window_lo_ = 0; // one-step kernel support in node offsets
  int window_hi_ = 0;

  double node_weight(size_t j) const; // trapezoid weight
};

double chain_transition_ph(const CoefficientModel& coeff,
                           const InnovationModel& innov, const GridSpec& grid,
                           double x, double y, const LatticeConfig& cfg = {});

} // namespace markovdiff
