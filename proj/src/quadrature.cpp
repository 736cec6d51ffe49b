#include "markovdiff/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

namespace markovdiff::quad {

namespace {

// Kronrod-15 abscissae (positive half) and weights; the Gauss-7 rule reuses
// the odd-indexed abscissae.
constexpr double kXgk[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0};
constexpr double kWgk[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {0.129484966168870, 0.279705391489277,
                           0.381830050505119, 0.417959183673469};

struct Panel {
  double a;
  double b;
  double value;
  double error;
};

Panel evaluate_panel(const std::function<double(double)>& f, double a,
                     double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);

  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(center - half * kXgk[i]);
    fv[14 - i] = f(center + half * kXgk[i]);
  }
  fv[7] = f(center);

  double resk = kWgk[7] * fv[7];
  double resabs = std::abs(resk);
  double resg = kWg[3] * fv[7];
  for (int i = 0; i < 7; ++i) {
    resk += kWgk[i] * (fv[i] + fv[14 - i]);
    resabs += kWgk[i] * (std::abs(fv[i]) + std::abs(fv[14 - i]));
  }
  for (int i = 0; i < 3; ++i) {
    // Gauss-7 nodes sit at the odd Kronrod abscissae.
    resg += kWg[i] * (fv[2 * i + 1] + fv[13 - 2 * i]);
  }

  const double mean = 0.5 * resk;
  double resasc = kWgk[7] * std::abs(fv[7] - mean);
  for (int i = 0; i < 7; ++i) {
    resasc +=
        kWgk[i] * (std::abs(fv[i] - mean) + std::abs(fv[14 - i] - mean));
  }

  const double delta = std::abs(resk - resg) * half;
  resasc *= half;
  double err = delta;
  if (resasc != 0.0 && delta != 0.0) {
    err = resasc * std::min(1.0, std::pow(200.0 * delta / resasc, 1.5));
  }
  (void)resabs;
  return Panel{a, b, resk * half, err};
}

} // namespace

QuadratureError::QuadratureError(double achieved_error, double requested_tol)
    : std::runtime_error("quadrature did not converge: achieved error " +
                         std::to_string(achieved_error) + " > requested " +
                         std::to_string(requested_tol)),
      achieved(achieved_error), requested(requested_tol) {}

Result integrate(const std::function<double(double)>& f, double a, double b,
                 const Options& opt, const std::vector<double>& breakpoints) {
  Result out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  double sign = 1.0;
  double lo = a, hi = b;
  if (lo > hi) {
    std::swap(lo, hi);
    sign = -1.0;
  }

  std::vector<double> edges{lo};
  for (double p : breakpoints) {
    if (p > lo && p < hi) edges.push_back(p);
  }
  edges.push_back(hi);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<Panel> panels;
  panels.reserve(static_cast<size_t>(opt.max_panels));
  for (size_t i = 0; i + 1 < edges.size(); ++i) {
    panels.push_back(evaluate_panel(f, edges[i], edges[i + 1]));
  }

  auto totals = [&panels]() {
    double v = 0.0, e = 0.0;
    for (const Panel& p : panels) {
      v += p.value;
      e += p.error;
    }
    return std::pair<double, double>{v, e};
  };

  auto [value, error] = totals();
  while (static_cast<int>(panels.size()) < opt.max_panels) {
    const double tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(value));
    if (error <= tol) break;
    size_t worst = 0;
    for (size_t i = 1; i < panels.size(); ++i) {
      if (panels[i].error > panels[worst].error) worst = i;
    }
    const Panel old = panels[worst];
    const double mid = 0.5 * (old.a + old.b);
    if (mid <= old.a || mid >= old.b) break; // spacing underflow
    panels[worst] = evaluate_panel(f, old.a, mid);
    panels.push_back(evaluate_panel(f, mid, old.b));
    std::tie(value, error) = totals();
  }

  out.value = sign * value;
  out.error = error;
  out.panels = static_cast<int>(panels.size());
  out.converged =
      error <= std::max(opt.abs_tol, opt.rel_tol * std::abs(value));
  return out;
}

double integrate_or_throw(const std::function<double(double)>& f, double a,
                          double b, const Options& opt,
                          const std::vector<double>& breakpoints) {
  Result r = integrate(f, a, b, opt, breakpoints);
  if (!r.converged) {
    throw QuadratureError(r.error,
                          std::max(opt.abs_tol, opt.rel_tol * std::abs(r.value)));
  }
  return r.value;
}

const GaussLegendre& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussLegendre> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendre gl;
  gl.nodes.resize(static_cast<size_t>(n));
  gl.weights.resize(static_cast<size_t>(n));
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev-based initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    gl.nodes[static_cast<size_t>(i)] = -x;
    gl.nodes[static_cast<size_t>(n - 1 - i)] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    gl.weights[static_cast<size_t>(i)] = w;
    gl.weights[static_cast<size_t>(n - 1 - i)] = w;
  }
  auto [pos, inserted] = cache.emplace(n, std::move(gl));
  (void)inserted;
  return pos->second;
}

} // namespace markovdiff::quad
