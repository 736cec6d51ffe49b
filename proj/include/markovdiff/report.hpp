#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "markovdiff/density.hpp"
#include "markovdiff/edgeworth.hpp"
#include "markovdiff/limits.hpp"
#include "markovdiff/models.hpp"

namespace markovdiff {

inline constexpr const char* kVersion = "1.0.0";

// Raised on malformed configuration: unknown keys, wrong types, or values
// outside the validated domain. Maps to process exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string name = "unit"; // unit | zero-drift | smooth | ou
  double a = 0.3;            // smooth-model drift amplitude
  double b = 0.3;            // smooth-model volatility amplitude
};

struct InnovationConfig {
  std::string family = "gaussian"; // gaussian | mixture
  double mu3 = 0.0;                // mixture target skewness
  double weight = 0.25;            // mixture component weight
};

struct McBlock {
  int n_paths = 1000;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  int workers = 1;
  double x0 = 0.0;
};

struct OutputBlock {
  // json | csv; empty selects the subcommand's native format (reports are
  // json, per-point tables and path dumps are csv).
  std::string format;
  std::string path; // empty writes to stdout
};

struct EvalBlock {
  std::vector<double> times = {0.1};
  double x = 0.0;
  double y_lo = -1.0;
  double y_hi = 1.0;
  int y_count = 21;
};

struct EulerBlock {
  double delta = 0.25;
  int n = 8;
  std::vector<int> k_ladder = {4, 16, 64};
  double x0 = 1.0;
};

struct RunConfig {
  std::string subcommand;
  ModelConfig model;
  InnovationConfig innovation;
  GridSpec grid{0.001, 100, 16};
  McBlock mc;
  ConvolveConfig quad;
  BridgeConfig bridge;
  OutputBlock output;
  EvalBlock eval;
  EulerBlock euler;
  std::vector<int> remainder_ladder = {4, 8, 16};
  std::string simulate_law = "chain"; // chain | diffusion
};

// Strict parse: every key must be known, every value well-typed and in
// domain. `subcommand`, when present, must match the dispatched one.
RunConfig parse_run_config(const std::string& json_text,
                           const std::string& subcommand);

CoefficientModel build_model(const ModelConfig& cfg);
InnovationModel build_innovation(const CoefficientModel& coeff,
                                 const InnovationConfig& cfg);
EdgeworthContext build_context(const RunConfig& cfg);

// Resolved configuration as deterministic JSON with all defaults echoed.
// Excludes the worker count and output routing: those cannot affect computed
// values, and leaving them out keeps reports byte-identical across reruns
// that differ only in execution plumbing.
std::string config_json(const RunConfig& cfg);

// Experiment report as deterministic JSON: code version, resolved config,
// design point, estimates. Wall-clock time is deliberately omitted so that
// identical (config, seed) runs serialize byte-identically.
std::string report_json(const ExperimentReport& report, const RunConfig& cfg);

// Several experiment reports sharing one resolved config (the regime suite
// bundles the distance, sup-scaling, and martingale diagnostics).
std::string reports_json(const std::vector<ExperimentReport>& reports,
                         const RunConfig& cfg);

// Assumption-validation report as deterministic JSON.
std::string validation_json(const ValidationReport& report,
                            const RunConfig& cfg);

} // namespace markovdiff
