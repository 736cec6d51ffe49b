#pragma once

#include <functional>
#include <stdexcept>

#include "markovdiff/density.hpp"
#include "markovdiff/models.hpp"

namespace markovdiff {

// Time-indexed transition kernel: value(t, x, y) is a density over the
// arrival state y after elapsed time t, starting from x. Kernels are the
// operands of the time-space convolution below. Derivative members may be
// null; operators fall back to central finite differences on `value`.
struct Kernel {
  std::function<double(double t, double x, double y)> value;
  // n-th partial derivative in the starting state x, n in 1..6.
  std::function<double(int n, double t, double x, double y)> x_derivative;
  // n-th partial derivative in the arrival state y, n in 1..6.
  std::function<double(int n, double t, double x, double y)> y_derivative;
  double sigma_max = 1.0; // envelope scale used for truncation windows
  double drift_max = 0.0; // sup |m| over the working region
};

struct ConvolveConfig {
  // Gauss-Legendre order for the time integral after the substitution
  // u = t sin^2(theta), which absorbs 1/sqrt(u)-type endpoint singularities.
  int theta_nodes = 64;
  double width_sds = 10.0; // spatial truncation, units of sigma_max sqrt(t)
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  int max_panels = 2000;
  // Kernel time arguments are clamped below at time_floor_frac * t.  Near the
  // endpoints of the time integral one factor is evaluated at a vanishing
  // time; when that factor carries high-order derivatives its peak grows like
  // tau^{-(n+1)/2} and the z-integral cancels to a value many orders of
  // magnitude below the peak, where double precision returns noise.  Clamping
  // biases the integral by O(time_floor_frac) relative while removing that
  // noise; the jacobian of the substitution is left exact.
  double time_floor_frac = 1e-4;
  // Nested (double-convolution) evaluation: the inner kernel is tabulated on
  // a per-time-node lattice, interpolated linearly, and the lattice
  // resolution is doubled until the outer value moves by less than
  // `nested_rel_move` (relative).
  int nested_base_nodes = 97;
  int nested_max_nodes = 385;
  double nested_rel_move = 0.005;
};

enum class CorrectionMethod { Auto, Closed, Numeric };

// Bundle of model + grid + numeric configuration shared by the correction
// terms and ratio statistics.
struct EdgeworthContext {
  CoefficientModel coeff;
  InnovationModel innov;
  GridSpec grid;
  ConvolveConfig quad;
  BridgeConfig bridge;
  // Set when the grid violates the step/ratio band required by the
  // convergence regime; evaluation is still allowed (the sharpness
  // experiments need exactly such grids).
  bool regime_violating = false;

  bool closed_form_available() const;
};

EdgeworthContext make_context(CoefficientModel coeff, InnovationModel innov,
                              GridSpec grid, ConvolveConfig quad = {},
                              BridgeConfig bridge = {});

// Third central moment mu3(x) of the scaled innovation at state x.
double skewness_at(const EdgeworthContext& ctx, double x);
// Excess kurtosis numerator mu4(x) - 3 sigma^4(x) at state x.
double excess_kurtosis_at(const EdgeworthContext& ctx, double x);

Kernel zero_kernel();
// The diffusion transition density as a kernel: closed form with analytic
// derivatives for constant coefficients, bridge Monte Carlo otherwise.
Kernel diffusion_kernel(const EdgeworthContext& ctx);

// n-th derivative of kernel.value in the starting state, using the declared
// analytic derivative when available and Richardson-extrapolated central
// differences otherwise (n in 1..4 for the finite-difference path).
double kernel_x_derivative(const Kernel& f, int n, double t, double x,
                           double y);

// (f (*) g)(t,x,y) = int_0^t du int f(u,x,z) g(t-u,z,y) dz.
double convolve_time_space(const Kernel& f, const Kernel& g, double t,
                           double x, double y, const ConvolveConfig& cfg = {});

// F1[f](t,x,y) = (mu3(x)/6) d^3/dx^3 f(t,x,y).
Kernel apply_F1(const EdgeworthContext& ctx, Kernel f);
// F2[f](t,x,y) = ((mu4(x) - 3 sigma^4(x))/24) d^4/dx^4 f(t,x,y).
Kernel apply_F2(const EdgeworthContext& ctx, Kernel f);

// (1/2) (p (*) (Lstar^2 - L^2) p)(t,x,y), where L is the generator
// (1/2) sigma^2(z) d^2/dz^2 + m(z) d/dz acting on the starting state of the
// trailing kernel and Lstar freezes its coefficients at the outer x.
// Identically zero for constant coefficients.
double frozen_generator_term(const EdgeworthContext& ctx, double t, double x,
                             double y);

// First-order correction pi1 = p (*) F1[p].
double pi1(const EdgeworthContext& ctx, double t, double x, double y,
           CorrectionMethod method = CorrectionMethod::Auto);

// Closed form of pi1 on the constant-coefficient model with drift 1 and
// volatility 1: -(mu3/6) t d^3/dy^3 p(t,x,y).
double pi1_closed_constant(double mu3, double t, double x, double y);

// Second-order correction pi2 = p (*) F2[p] + p (*) F1[pi1] + frozen term.
// The middle term is evaluated as pi1 (*) F1[p], which equals the nested
// form exactly by Fubini's theorem on the time simplex.
struct Pi2Breakdown {
  double kurtosis_term = 0.0;
  double nested_term = 0.0;
  double frozen_term = 0.0;
  // False when the nested term's lattice-refinement ladder exhausted its node
  // budget without the outer value settling below nested_rel_move.
  bool nested_converged = true;
  double total() const { return kurtosis_term + nested_term + frozen_term; }
};
Pi2Breakdown pi2_terms(const EdgeworthContext& ctx, double t, double x,
                       double y, CorrectionMethod method = CorrectionMethod::Auto);
double pi2(const EdgeworthContext& ctx, double t, double x, double y,
           CorrectionMethod method = CorrectionMethod::Auto);

// Closed form of pi2 on the constant-coefficient model with drift 1 and
// volatility 1, with excess = mu4 - 3 sigma^4:
// p [ excess He4(w) / (24 t) + mu3^2 He6(w) / (72 t) ].
double pi2_closed_constant(double mu3, double excess, double t, double x,
                           double y);

// Raised when a ratio statistic hits a transition-density underflow; carries
// the natural log of the offending density estimate.
class DensityUnderflowError : public std::runtime_error {
 public:
  explicit DensityUnderflowError(double log_p_value);
  double log_p;
};

// delta1(x,y) = sqrt(h) pi1(kh,x,y) / p(kh,x,y),
// delta2(x,y) = h pi2(kh,x,y) / p(kh,x,y), with (h,k) from ctx.grid.
// Closed forms cancel p exactly; the numeric path divides and raises
// DensityUnderflowError when p is below the underflow floor.
double delta1(const EdgeworthContext& ctx, double x, double y,
              CorrectionMethod method = CorrectionMethod::Auto);
double delta2(const EdgeworthContext& ctx, double x, double y,
              CorrectionMethod method = CorrectionMethod::Auto);

} // namespace markovdiff
