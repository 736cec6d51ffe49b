#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

namespace markovdiff::quad {

struct Options {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_panels = 4000;
};

struct Result {
  double value = 0.0;
  double error = 0.0; // estimated absolute error
  int panels = 0;
  bool converged = false;
};

// Thrown by integrate_or_throw when the panel budget is exhausted before the
// requested tolerance is met; carries the achieved error for diagnostics.
class QuadratureError : public std::runtime_error {
public:
  QuadratureError(double achieved_error, double requested_tol);
  double achieved;
  double requested;
};

// Adaptive Gauss–Kronrod (G7, K15) integration of f over [a, b].
// `breakpoints` seeds panel edges at known kinks or peaks so refinement does
// not have to discover them; points outside (a, b) are ignored.
Result integrate(const std::function<double(double)>& f, double a, double b,
                 const Options& opt = {},
                 const std::vector<double>& breakpoints = {});

double integrate_or_throw(const std::function<double(double)>& f, double a,
                          double b, const Options& opt = {},
                          const std::vector<double>& breakpoints = {});

// Gauss–Legendre nodes and weights on [-1, 1]; cached per n, thread-safe.
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussLegendre& gauss_legendre(int n);

} // namespace markovdiff::quad
