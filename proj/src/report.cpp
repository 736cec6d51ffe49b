#include "markovdiff/report.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace markovdiff {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError("config error at \"" + where + "\": " + what);
}

void unknown_key(const std::string& where, const std::string& key) {
  fail(where, "unknown key \"" + key + "\"");
}

void expect_object(const json& v, const std::string& where) {
  if (!v.is_object()) fail(where, "expected an object");
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  const auto wide = v.get<std::int64_t>();
  if (wide < INT32_MIN || wide > INT32_MAX) fail(where, "integer out of range");
  return static_cast<int>(wide);
}

std::uint64_t as_u64(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) fail(where, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) fail(where, "expected a string");
  return v.get<std::string>();
}

std::vector<double> as_number_list(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) fail(where, "expected a nonempty array");
  std::vector<double> out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<int> as_int_list(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) fail(where, "expected a nonempty array");
  std::vector<int> out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_int(v[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

void parse_model(const json& v, ModelConfig& out) {
  expect_object(v, "model");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "kind") {
      out.name = as_string(it.value(), "model.kind");
    } else if (it.key() == "params") {
      expect_object(it.value(), "model.params");
      for (auto p = it.value().begin(); p != it.value().end(); ++p) {
        if (p.key() == "a") {
          out.a = as_number(p.value(), "model.params.a");
        } else if (p.key() == "b") {
          out.b = as_number(p.value(), "model.params.b");
        } else {
          unknown_key("model.params", p.key());
        }
      }
    } else {
      unknown_key("model", it.key());
    }
  }
  if (out.name != "unit" && out.name != "zero-drift" && out.name != "smooth" &&
      out.name != "ou") {
    fail("model.kind", "unknown model \"" + out.name +
                           "\" (expected unit | zero-drift | smooth | ou)");
  }
  if (out.name == "smooth" && !(std::abs(out.b) < 1.0)) {
    fail("model.params.b", "smooth model requires |b| < 1");
  }
}

void parse_innovation(const json& v, InnovationConfig& out) {
  expect_object(v, "innovation");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "kind") {
      out.family = as_string(it.value(), "innovation.kind");
    } else if (it.key() == "params") {
      expect_object(it.value(), "innovation.params");
      for (auto p = it.value().begin(); p != it.value().end(); ++p) {
        if (p.key() == "mu3") {
          out.mu3 = as_number(p.value(), "innovation.params.mu3");
        } else if (p.key() == "weight") {
          out.weight = as_number(p.value(), "innovation.params.weight");
        } else {
          unknown_key("innovation.params", p.key());
        }
      }
    } else {
      unknown_key("innovation", it.key());
    }
  }
  if (out.family != "gaussian" && out.family != "mixture") {
    fail("innovation.kind", "unknown family \"" + out.family +
                                "\" (expected gaussian | mixture)");
  }
  if (out.family == "mixture" && !(out.weight > 0.0 && out.weight < 1.0)) {
    fail("innovation.params.weight", "mixture weight must lie in (0, 1)");
  }
}

void parse_grid(const json& v, GridSpec& out) {
  expect_object(v, "grid");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "h") {
      out.h = as_number(it.value(), "grid.h");
    } else if (it.key() == "k") {
      out.k = as_int(it.value(), "grid.k");
    } else if (it.key() == "n") {
      out.n = as_int(it.value(), "grid.n");
    } else {
      unknown_key("grid", it.key());
    }
  }
  if (!(out.h > 0.0)) fail("grid.h", "fine step must be positive");
  if (out.k < 1) fail("grid.k", "subsampling factor must be >= 1");
  if (out.n < 1) fail("grid.n", "observed increment count must be >= 1");
}

void parse_mc(const json& v, McBlock& out) {
  expect_object(v, "mc");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "n_paths") {
      out.n_paths = as_int(it.value(), "mc.n_paths");
    } else if (it.key() == "seed") {
      out.seed = as_u64(it.value(), "mc.seed");
    } else if (it.key() == "stream") {
      out.stream = as_u64(it.value(), "mc.stream");
    } else if (it.key() == "workers") {
      out.workers = as_int(it.value(), "mc.workers");
    } else if (it.key() == "x0") {
      out.x0 = as_number(it.value(), "mc.x0");
    } else {
      unknown_key("mc", it.key());
    }
  }
  if (out.n_paths < 1) fail("mc.n_paths", "path count must be >= 1");
  if (out.workers < 1) fail("mc.workers", "worker count must be >= 1");
}

void parse_quad(const json& v, ConvolveConfig& out) {
  expect_object(v, "quad");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "theta_nodes") {
      out.theta_nodes = as_int(it.value(), "quad.theta_nodes");
    } else if (it.key() == "width_sds") {
      out.width_sds = as_number(it.value(), "quad.width_sds");
    } else if (it.key() == "abs_tol") {
      out.abs_tol = as_number(it.value(), "quad.abs_tol");
    } else if (it.key() == "rel_tol") {
      out.rel_tol = as_number(it.value(), "quad.rel_tol");
    } else if (it.key() == "max_panels") {
      out.max_panels = as_int(it.value(), "quad.max_panels");
    } else if (it.key() == "time_floor_frac") {
      out.time_floor_frac = as_number(it.value(), "quad.time_floor_frac");
    } else if (it.key() == "nested_base_nodes") {
      out.nested_base_nodes = as_int(it.value(), "quad.nested_base_nodes");
    } else if (it.key() == "nested_max_nodes") {
      out.nested_max_nodes = as_int(it.value(), "quad.nested_max_nodes");
    } else if (it.key() == "nested_rel_move") {
      out.nested_rel_move = as_number(it.value(), "quad.nested_rel_move");
    } else {
      unknown_key("quad", it.key());
    }
  }
  if (out.theta_nodes < 2) fail("quad.theta_nodes", "need at least 2 nodes");
  if (!(out.width_sds > 0.0)) fail("quad.width_sds", "must be positive");
  if (!(out.abs_tol > 0.0)) fail("quad.abs_tol", "must be positive");
  if (!(out.rel_tol > 0.0)) fail("quad.rel_tol", "must be positive");
  if (out.max_panels < 1) fail("quad.max_panels", "must be >= 1");
  if (!(out.time_floor_frac >= 0.0 && out.time_floor_frac < 1.0)) {
    fail("quad.time_floor_frac", "must lie in [0, 1)");
  }
  if (out.nested_base_nodes < 5) fail("quad.nested_base_nodes", "must be >= 5");
  if (out.nested_max_nodes < out.nested_base_nodes) {
    fail("quad.nested_max_nodes", "must be >= nested_base_nodes");
  }
  if (!(out.nested_rel_move > 0.0)) fail("quad.nested_rel_move", "must be positive");
}

bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

void parse_bridge(const json& v, BridgeConfig& out) {
  expect_object(v, "bridge");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "samples") {
      out.samples = as_int(it.value(), "bridge.samples");
    } else if (it.key() == "mesh") {
      out.mesh = as_int(it.value(), "bridge.mesh");
    } else if (it.key() == "seed") {
      out.seed = as_u64(it.value(), "bridge.seed");
    } else if (it.key() == "relative_stderr_cap") {
      out.relative_stderr_cap = as_number(it.value(), "bridge.relative_stderr_cap");
    } else {
      unknown_key("bridge", it.key());
    }
  }
  if (out.samples < 2) fail("bridge.samples", "must be >= 2");
  if (out.mesh < 2 || !is_power_of_two(out.mesh)) {
    fail("bridge.mesh", "must be a power of two >= 2");
  }
  if (!(out.relative_stderr_cap > 0.0)) {
    fail("bridge.relative_stderr_cap", "must be positive");
  }
}

void parse_output(const json& v, OutputBlock& out) {
  expect_object(v, "output");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "format") {
      out.format = as_string(it.value(), "output.format");
      if (out.format != "json" && out.format != "csv") {
        fail("output.format", "expected json | csv");
      }
    } else if (it.key() == "path") {
      out.path = as_string(it.value(), "output.path");
    } else {
      unknown_key("output", it.key());
    }
  }
}

void parse_eval(const json& v, EvalBlock& out) {
  expect_object(v, "eval");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "times") {
      out.times = as_number_list(it.value(), "eval.times");
    } else if (it.key() == "x") {
      out.x = as_number(it.value(), "eval.x");
    } else if (it.key() == "y_lo") {
      out.y_lo = as_number(it.value(), "eval.y_lo");
    } else if (it.key() == "y_hi") {
      out.y_hi = as_number(it.value(), "eval.y_hi");
    } else if (it.key() == "y_count") {
      out.y_count = as_int(it.value(), "eval.y_count");
    } else {
      unknown_key("eval", it.key());
    }
  }
  for (double t : out.times) {
    if (!(t > 0.0)) fail("eval.times", "every time must be positive");
  }
  if (!(out.y_hi >= out.y_lo)) fail("eval.y_hi", "must be >= eval.y_lo");
  if (out.y_count < 1) fail("eval.y_count", "must be >= 1");
}

void parse_euler(const json& v, EulerBlock& out) {
  expect_object(v, "euler");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "delta") {
      out.delta = as_number(it.value(), "euler.delta");
    } else if (it.key() == "n") {
      out.n = as_int(it.value(), "euler.n");
    } else if (it.key() == "k_ladder") {
      out.k_ladder = as_int_list(it.value(), "euler.k_ladder");
    } else if (it.key() == "x0") {
      out.x0 = as_number(it.value(), "euler.x0");
    } else {
      unknown_key("euler", it.key());
    }
  }
  if (!(out.delta > 0.0)) fail("euler.delta", "must be positive");
  if (out.n < 1) fail("euler.n", "must be >= 1");
  for (int k : out.k_ladder) {
    if (k < 1) fail("euler.k_ladder", "every rung must be >= 1");
  }
}

void parse_remainder(const json& v, std::vector<int>& out) {
  expect_object(v, "remainder");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "k_ladder") {
      out = as_int_list(it.value(), "remainder.k_ladder");
    } else {
      unknown_key("remainder", it.key());
    }
  }
  for (int k : out) {
    if (k < 1) fail("remainder.k_ladder", "every rung must be >= 1");
  }
}

void parse_simulate(const json& v, std::string& law) {
  expect_object(v, "simulate");
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (it.key() == "law") {
      law = as_string(it.value(), "simulate.law");
    } else {
      unknown_key("simulate", it.key());
    }
  }
  if (law != "chain" && law != "diffusion") {
    fail("simulate.law", "expected chain | diffusion");
  }
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["subcommand"] = cfg.subcommand;

  ordered_json model;
  model["kind"] = cfg.model.name;
  ordered_json model_params;
  model_params["a"] = cfg.model.a;
  model_params["b"] = cfg.model.b;
  model["params"] = model_params;
  j["model"] = model;

  ordered_json innov;
  innov["kind"] = cfg.innovation.family;
  ordered_json innov_params;
  innov_params["mu3"] = cfg.innovation.mu3;
  innov_params["weight"] = cfg.innovation.weight;
  innov["params"] = innov_params;
  j["innovation"] = innov;

  ordered_json grid;
  grid["h"] = cfg.grid.h;
  grid["k"] = cfg.grid.k;
  grid["n"] = cfg.grid.n;
  j["grid"] = grid;

  // The worker count and output routing are execution details that cannot
  // influence any computed number (deterministic slot-indexed reduction), so
  // they are omitted from the echo: a report is a pure function of the
  // serialized config, and reruns with a different worker count or output
  // path stay byte-identical.
  ordered_json mc;
  mc["n_paths"] = cfg.mc.n_paths;
  mc["seed"] = cfg.mc.seed;
  mc["stream"] = cfg.mc.stream;
  mc["x0"] = cfg.mc.x0;
  j["mc"] = mc;

  ordered_json quad;
  quad["theta_nodes"] = cfg.quad.theta_nodes;
  quad["width_sds"] = cfg.quad.width_sds;
  quad["abs_tol"] = cfg.quad.abs_tol;
  quad["rel_tol"] = cfg.quad.rel_tol;
  quad["max_panels"] = cfg.quad.max_panels;
  quad["time_floor_frac"] = cfg.quad.time_floor_frac;
  quad["nested_base_nodes"] = cfg.quad.nested_base_nodes;
  quad["nested_max_nodes"] = cfg.quad.nested_max_nodes;
  quad["nested_rel_move"] = cfg.quad.nested_rel_move;
  j["quad"] = quad;

  ordered_json bridge;
  bridge["samples"] = cfg.bridge.samples;
  bridge["mesh"] = cfg.bridge.mesh;
  bridge["seed"] = cfg.bridge.seed;
  bridge["relative_stderr_cap"] = cfg.bridge.relative_stderr_cap;
  j["bridge"] = bridge;

  ordered_json eval;
  eval["times"] = cfg.eval.times;
  eval["x"] = cfg.eval.x;
  eval["y_lo"] = cfg.eval.y_lo;
  eval["y_hi"] = cfg.eval.y_hi;
  eval["y_count"] = cfg.eval.y_count;
  j["eval"] = eval;

  ordered_json remainder;
  remainder["k_ladder"] = cfg.remainder_ladder;
  j["remainder"] = remainder;

  ordered_json euler;
  euler["delta"] = cfg.euler.delta;
  euler["n"] = cfg.euler.n;
  euler["k_ladder"] = cfg.euler.k_ladder;
  euler["x0"] = cfg.euler.x0;
  j["euler"] = euler;

  ordered_json simulate;
  simulate["law"] = cfg.simulate_law;
  j["simulate"] = simulate;

  return j;
}

ordered_json report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["experiment"] = report.experiment;

  ordered_json design;
  design["model"] = report.model;
  design["innovation"] = report.innovation;
  design["mu3"] = report.mu3;
  ordered_json grid;
  grid["h"] = report.grid.h;
  grid["k"] = report.grid.k;
  grid["n"] = report.grid.n;
  design["grid"] = grid;
  design["seed"] = report.seed;
  design["regime"] = report.regime;
  j["design_point"] = design;

  ordered_json paths;
  paths["flagged"] = report.flagged_paths;
  paths["excluded"] = report.excluded_paths;
  j["paths"] = paths;

  ordered_json estimates;
  for (const auto& [name, est] : report.estimates) {
    ordered_json e;
    e["value"] = est.value;
    e["std_error"] = est.std_error;
    e["sample_size"] = est.sample_size;
    estimates[name] = e;
  }
  j["estimates"] = estimates;
  return j;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text,
                           const std::string& subcommand) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  expect_object(root, "config");

  RunConfig cfg;
  cfg.subcommand = subcommand;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& key = it.key();
    if (key == "subcommand") {
      const std::string declared = as_string(it.value(), "subcommand");
      if (!subcommand.empty() && declared != subcommand) {
        fail("subcommand", "config declares \"" + declared +
                               "\" but the command line ran \"" + subcommand +
                               "\"");
      }
      if (subcommand.empty()) cfg.subcommand = declared;
    } else if (key == "model") {
      parse_model(it.value(), cfg.model);
    } else if (key == "innovation") {
      parse_innovation(it.value(), cfg.innovation);
    } else if (key == "grid") {
      parse_grid(it.value(), cfg.grid);
    } else if (key == "mc") {
      parse_mc(it.value(), cfg.mc);
    } else if (key == "quad") {
      parse_quad(it.value(), cfg.quad);
    } else if (key == "bridge") {
      parse_bridge(it.value(), cfg.bridge);
    } else if (key == "output") {
      parse_output(it.value(), cfg.output);
    } else if (key == "eval") {
      parse_eval(it.value(), cfg.eval);
    } else if (key == "remainder") {
      parse_remainder(it.value(), cfg.remainder_ladder);
    } else if (key == "euler") {
      parse_euler(it.value(), cfg.euler);
    } else if (key == "simulate") {
      parse_simulate(it.value(), cfg.simulate_law);
    } else {
      unknown_key("config", key);
    }
  }
  return cfg;
}

CoefficientModel build_model(const ModelConfig& cfg) {
  if (cfg.name == "unit") return unit_model();
  if (cfg.name == "zero-drift") return zero_drift_model();
  if (cfg.name == "smooth") return smooth_model(cfg.a, cfg.b);
  if (cfg.name == "ou") return ou_model();
  throw ConfigError("config error at \"model.kind\": unknown model \"" +
                    cfg.name + "\"");
}

InnovationModel build_innovation(const CoefficientModel& coeff,
                                 const InnovationConfig& cfg) {
  if (cfg.family == "gaussian") return gaussian_innovation(coeff);
  if (cfg.family == "mixture") {
    MixtureParams params;
    try {
      params = solve_mixture(cfg.mu3, cfg.weight);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config error at \"innovation.params\": ") +
                        e.what());
    }
    return mixture_innovation(coeff, params);
  }
  throw ConfigError("config error at \"innovation.kind\": unknown family \"" +
                    cfg.family + "\"");
}

EdgeworthContext build_context(const RunConfig& cfg) {
  CoefficientModel coeff = build_model(cfg.model);
  InnovationModel innov = build_innovation(coeff, cfg.innovation);
  return make_context(std::move(coeff), std::move(innov), cfg.grid, cfg.quad,
                      cfg.bridge);
}

std::string config_json(const RunConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

std::string report_json(const ExperimentReport& report, const RunConfig& cfg) {
  ordered_json j;
  j["version"] = kVersion;
  ordered_json body = report_to_json(report);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  j["config"] = config_to_json(cfg);
  return j.dump(2) + "\n";
}

std::string reports_json(const std::vector<ExperimentReport>& reports,
                         const RunConfig& cfg) {
  ordered_json j;
  j["version"] = kVersion;
  ordered_json list = ordered_json::array();
  for (const ExperimentReport& report : reports) {
    list.push_back(report_to_json(report));
  }
  j["reports"] = list;
  j["config"] = config_to_json(cfg);
  return j.dump(2) + "\n";
}

std::string validation_json(const ValidationReport& report,
                            const RunConfig& cfg) {
  ordered_json j;
  j["version"] = kVersion;
  j["all_pass"] = report.all_pass();
  ordered_json checks = ordered_json::array();
  for (const AssumptionCheck& check : report.checks) {
    ordered_json c;
    c["name"] = check.name;
    c["pass"] = check.pass;
    c["partial"] = check.partial;
    c["detail"] = check.detail;
    checks.push_back(c);
  }
  j["checks"] = checks;
  j["config"] = config_to_json(cfg);
  return j.dump(2) + "\n";
}

} // namespace markovdiff
