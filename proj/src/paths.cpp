#include "markovdiff/paths.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace markovdiff {

const char* origin_name(PathOrigin origin) {
  switch (origin) {
    case PathOrigin::Chain:
      return "chain";
    case PathOrigin::Euler:
      return "euler";
    default:
      return "exact-diffusion";
  }
}

PathSample simulate_chain(const CoefficientModel& coeff,
                          const InnovationModel& innov, double x0,
                          const GridSpec& grid, RandomStream rng) {
  const long steps = static_cast<long>(grid.n) * grid.k;
  PathSample path;
  path.origin = PathOrigin::Chain;
  path.times.reserve(static_cast<size_t>(steps) + 1);
  path.values.reserve(static_cast<size_t>(steps) + 1);
  Philox gen(rng);
  const double sqrt_h = std::sqrt(grid.h);
  double x = x0;
  path.times.push_back(0.0);
  path.values.push_back(x);
  for (long l = 1; l <= steps; ++l) {
    const double xi = innov.sample(x, gen);
    x = x + coeff.m(x) * grid.h + sqrt_h * xi;
    path.times.push_back(static_cast<double>(l) * grid.h);
    path.values.push_back(x);
  }
  return path;
}

PathSample subsample(const PathSample& path, int k) {
  if (k < 1) throw std::invalid_argument("subsample: k must be >= 1");
  const size_t len = path.values.size();
  if (len == 0 || (len - 1) % static_cast<size_t>(k) != 0) {
    throw std::invalid_argument(
        "subsample: path length minus one must be divisible by k");
  }
  PathSample out;
  out.origin = path.origin;
  for (size_t i = 0; i < len; i += static_cast<size_t>(k)) {
    out.times.push_back(path.times[i]);
    out.values.push_back(path.values[i]);
  }
  return out;
}

PathSample simulate_diffusion_euler(const CoefficientModel& coeff, double x0,
                                    double fine_step, int steps,
                                    RandomStream rng) {
  if (fine_step <= 0.0) {
    throw std::invalid_argument("simulate_diffusion_euler: step must be > 0");
  }
  PathSample path;
  path.origin = PathOrigin::Euler;
  path.times.reserve(static_cast<size_t>(steps) + 1);
  path.values.reserve(static_cast<size_t>(steps) + 1);
  Philox gen(rng);
  const double sqrt_step = std::sqrt(fine_step);
  double y = x0;
  path.times.push_back(0.0);
  path.values.push_back(y);
  for (int j = 1; j <= steps; ++j) {
    y += coeff.m(y) * fine_step + coeff.sigma(y) * sqrt_step * gen.normal();
    path.times.push_back(static_cast<double>(j) * fine_step);
    path.values.push_back(y);
  }
  return path;
}

PathSample simulate_diffusion_exact_unit(double x0, const GridSpec& grid,
                                         RandomStream rng) {
  PathSample path;
  path.origin = PathOrigin::ExactDiffusion;
  Philox gen(rng);
  const double dt = grid.coarse_dt();
  const double sd = std::sqrt(dt);
  double y = x0;
  path.times.push_back(0.0);
  path.values.push_back(y);
  for (int i = 1; i <= grid.n; ++i) {
    y += dt + sd * gen.normal();
    path.times.push_back(static_cast<double>(i) * dt);
    path.values.push_back(y);
  }
  return path;
}

PathSample simulate_diffusion_exact_ou(double x0, double dt, int steps,
                                       RandomStream rng) {
  if (dt <= 0.0) {
    throw std::invalid_argument("simulate_diffusion_exact_ou: dt must be > 0");
  }
  PathSample path;
  path.origin = PathOrigin::ExactDiffusion;
  Philox gen(rng);
  const double decay = std::exp(-dt);
  const double sd = std::sqrt(0.5 * (1.0 - decay * decay));
  double y = x0;
  path.times.push_back(0.0);
  path.values.push_back(y);
  for (int i = 1; i <= steps; ++i) {
    y = y * decay + sd * gen.normal();
    path.times.push_back(static_cast<double>(i) * dt);
    path.values.push_back(y);
  }
  return path;
}

std::vector<double> simulate_bridge(Philox& gen, int mesh) {
  if (mesh < 2 || (mesh & (mesh - 1)) != 0) {
    throw std::invalid_argument(
        "simulate_bridge: mesh must be a power of two >= 2");
  }
  std::vector<double> bridge(static_cast<size_t>(mesh) + 1, 0.0);
  // Levy midpoint refinement, level by level, left to right: the midpoint of
  // a filled pair (l, r) is their average plus N(0, (t_r - t_l)/4).
  for (int span = mesh; span >= 2; span /= 2) {
    const double var = 0.25 * static_cast<double>(span) / mesh;
    const double sd = std::sqrt(var);
    for (int left = 0; left < mesh; left += span) {
      const int mid = left + span / 2;
      bridge[static_cast<size_t>(mid)] =
          0.5 * (bridge[static_cast<size_t>(left)] +
                 bridge[static_cast<size_t>(left + span)]) +
          sd * gen.normal();
    }
  }
  return bridge;
}

void dump_paths_csv(std::ostream& os, const std::vector<PathSample>& paths) {
  os << "path_id,time,value,origin\n";
  char buf[64];
  for (size_t id = 0; id < paths.size(); ++id) {
    const PathSample& path = paths[id];
    for (size_t i = 0; i < path.values.size(); ++i) {
      os << id << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", path.times[i]);
      os << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", path.values[i]);
      os << buf << ',' << origin_name(path.origin) << '\n';
    }
  }
}

void parallel_for_indices(int n, int workers,
                          const std::function<void(int)>& body) {
  if (n <= 0) return;
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const int chunk = 16;
  auto worker = [&]() {
    while (true) {
      const int start = next.fetch_add(chunk);
      if (start >= n) break;
      const int end = std::min(n, start + chunk);
      for (int i = start; i < end; ++i) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

} // namespace markovdiff
