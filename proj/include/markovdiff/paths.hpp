#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "markovdiff/models.hpp"
#include "markovdiff/rng.hpp"

namespace markovdiff {

enum class PathOrigin { Chain, Euler, ExactDiffusion };
const char* origin_name(PathOrigin origin);

struct PathSample {
  std::vector<double> times;
  std::vector<double> values;
  PathOrigin origin = PathOrigin::Chain;
};

// Fine-grid chain: nk steps of X' = X + m(X) h + sqrt(h) xi with xi drawn
// from the innovation law at the current state.
PathSample simulate_chain(const CoefficientModel& coeff,
                          const InnovationModel& innov, double x0,
                          const GridSpec& grid, RandomStream rng);

// Keeps indices 0, k, 2k, ...; requires (length - 1) divisible by k.
PathSample subsample(const PathSample& path, int k);

PathSample simulate_diffusion_euler(const CoefficientModel& coeff, double x0,
                                    double fine_step, int steps,
                                    RandomStream rng);

// Coarse path with exact N(kh, kh) increments (unit drift/volatility law).
PathSample simulate_diffusion_exact_unit(double x0, const GridSpec& grid,
                                         RandomStream rng);

// Exact mean-reverting transition: N(x e^{-dt}, (1 - e^{-2 dt})/2).
PathSample simulate_diffusion_exact_ou(double x0, double dt, int steps,
                                       RandomStream rng);

// Brownian bridge on [0, 1] at mesh+1 equidistant points via Levy midpoint
// refinement; mesh must be a power of two >= 2. B(0) = B(1) = 0.
std::vector<double> simulate_bridge(Philox& gen, int mesh);

// CSV rows (path_id, time, value, origin), full double precision.
void dump_paths_csv(std::ostream& os, const std::vector<PathSample>& paths);

// Runs body(i) for i in [0, n) across `workers` threads. Each index must only
// touch its own output slot; under that contract results are identical for
// any worker count. Exceptions are captured and rethrown on the caller thread.
void parallel_for_indices(int n, int workers,
                          const std::function<void(int)>& body);

} // namespace markovdiff
