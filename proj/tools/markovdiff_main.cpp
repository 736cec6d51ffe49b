#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "markovdiff/density.hpp"
#include "markovdiff/edgeworth.hpp"
#include "markovdiff/limits.hpp"
#include "markovdiff/models.hpp"
#include "markovdiff/paths.hpp"
#include "markovdiff/quadrature.hpp"
#include "markovdiff/report.hpp"

namespace md = markovdiff;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_output(const md::RunConfig& cfg, const std::string& payload) {
  if (cfg.output.path.empty()) {
    std::cout << payload;
    return;
  }
  std::ofstream out(cfg.output.path, std::ios::binary);
  if (!out) {
    throw md::ConfigError("cannot open output file \"" + cfg.output.path +
                          "\"");
  }
  out << payload;
  if (!out) {
    throw std::runtime_error("failed writing \"" + cfg.output.path + "\"");
  }
}

md::McConfig mc_config(const md::RunConfig& cfg) {
  md::McConfig mc;
  mc.n_paths = cfg.mc.n_paths;
  mc.rng = md::RandomStream{cfg.mc.seed, cfg.mc.stream};
  mc.workers = cfg.mc.workers;
  mc.x0 = cfg.mc.x0;
  return mc;
}

double eval_y(const md::EvalBlock& eval, int j) {
  if (eval.y_count == 1) return eval.y_lo;
  return eval.y_lo +
         (eval.y_hi - eval.y_lo) * static_cast<double>(j) /
             static_cast<double>(eval.y_count - 1);
}

int run_validate(const md::RunConfig& cfg) {
  const md::CoefficientModel coeff = md::build_model(cfg.model);
  const md::InnovationModel innov = md::build_innovation(coeff, cfg.innovation);
  const md::ValidationReport report =
      md::validate_assumptions(coeff, innov, cfg.grid);
  write_output(cfg, md::validation_json(report, cfg));
  return report.all_pass() ? 0 : 2;
}

int run_simulate(const md::RunConfig& cfg) {
  std::vector<md::PathSample> paths;
  paths.reserve(static_cast<size_t>(cfg.mc.n_paths));
  if (cfg.simulate_law == "chain") {
    const md::CoefficientModel coeff = md::build_model(cfg.model);
    const md::InnovationModel innov =
        md::build_innovation(coeff, cfg.innovation);
    for (int i = 0; i < cfg.mc.n_paths; ++i) {
      paths.push_back(md::simulate_chain(
          coeff, innov, cfg.mc.x0, cfg.grid,
          md::RandomStream{cfg.mc.seed,
                           cfg.mc.stream + static_cast<std::uint64_t>(i)}));
    }
  } else {
    const md::EdgeworthContext ctx = md::build_context(cfg);
    for (int i = 0; i < cfg.mc.n_paths; ++i) {
      paths.push_back(md::sample_coarse_diffusion(
          ctx, cfg.mc.x0,
          md::RandomStream{cfg.mc.seed,
                           cfg.mc.stream + static_cast<std::uint64_t>(i)}));
    }
  }
  std::ostringstream os;
  md::dump_paths_csv(os, paths);
  write_output(cfg, os.str());
  return 0;
}

int run_density(const md::RunConfig& cfg) {
  const md::CoefficientModel coeff = md::build_model(cfg.model);
  const md::DcfzEvaluator evaluator(coeff, cfg.bridge);
  std::ostringstream os;
  os << "t,x,y,value,std_error,method,flagged\n";
  for (double t : cfg.eval.times) {
    for (int j = 0; j < cfg.eval.y_count; ++j) {
      const double y = eval_y(cfg.eval, j);
      const md::DensityEstimate est = evaluator(t, cfg.eval.x, y);
      os << fmt(t) << ',' << fmt(cfg.eval.x) << ',' << fmt(y) << ','
         << fmt(est.value) << ',' << fmt(est.std_error) << ','
         << md::density_method_name(est.method) << ','
         << (est.flagged ? 1 : 0) << '\n';
    }
  }
  write_output(cfg, os.str());
  return 0;
}

int run_edgeworth(const md::RunConfig& cfg) {
  const md::EdgeworthContext ctx = md::build_context(cfg);
  const bool closed = ctx.closed_form_available();
  std::unique_ptr<md::DcfzEvaluator> dcfz;
  if (!closed) {
    dcfz = std::make_unique<md::DcfzEvaluator>(ctx.coeff, cfg.bridge);
  }
  const double m0 = ctx.coeff.m(0.0);
  const double s0 = ctx.coeff.sigma(0.0);
  const double h = ctx.grid.h;
  std::ostringstream os;
  os << "t,x,y,pi1,pi2,delta1,delta2,method\n";
  for (double t : cfg.eval.times) {
    for (int j = 0; j < cfg.eval.y_count; ++j) {
      const double y = eval_y(cfg.eval, j);
      const double v1 = md::pi1(ctx, t, cfg.eval.x, y);
      const double v2 = md::pi2(ctx, t, cfg.eval.x, y);
      const double p = closed
                           ? md::closed_form_p_const(m0, s0, t, cfg.eval.x, y)
                           : (*dcfz)(t, cfg.eval.x, y).value;
      if (!(p > 1e-300)) {
        throw md::DensityUnderflowError(std::log(std::max(p, 0.0)));
      }
      const double d1 = std::sqrt(h) * v1 / p;
      const double d2 = h * v2 / p;
      os << fmt(t) << ',' << fmt(cfg.eval.x) << ',' << fmt(y) << ',' << fmt(v1)
         << ',' << fmt(v2) << ',' << fmt(d1) << ',' << fmt(d2) << ','
         << (closed ? "closed" : "numeric") << '\n';
    }
  }
  write_output(cfg, os.str());
  return 0;
}

int run_regime(const md::RunConfig& cfg) {
  const md::EdgeworthContext ctx = md::build_context(cfg);
  const md::McConfig mc = mc_config(cfg);
  std::vector<md::ExperimentReport> reports;
  reports.push_back(md::product_distance_experiment(ctx, mc));
  reports.push_back(md::sup_scaling_experiment(ctx, mc));
  reports.push_back(md::martingale_diagnostics_experiment(ctx, mc));
  write_output(cfg, md::reports_json(reports, cfg));
  return 0;
}

int run_clt(const md::RunConfig& cfg) {
  const md::EdgeworthContext ctx = md::build_context(cfg);
  const md::ExperimentReport report = md::clt_experiment(ctx, mc_config(cfg));
  write_output(cfg, md::report_json(report, cfg));
  return 0;
}

int run_remainder(const md::RunConfig& cfg) {
  const md::EdgeworthContext ctx = md::build_context(cfg);
  const md::ExperimentReport report = md::remainder_scaling_experiment(
      ctx, cfg.eval.x, cfg.remainder_ladder);
  write_output(cfg, md::report_json(report, cfg));
  return 0;
}

int run_euler_bench(const md::RunConfig& cfg) {
  md::EulerBenchConfig bench;
  bench.coeff = md::build_model(cfg.model);
  bench.delta = cfg.euler.delta;
  bench.n = cfg.euler.n;
  bench.k_ladder = cfg.euler.k_ladder;
  bench.x0 = cfg.euler.x0;
  const md::ExperimentReport report =
      md::euler_consistency_experiment(bench, mc_config(cfg));
  write_output(cfg, md::report_json(report, cfg));
  return 0;
}

// Reports serialize as JSON; path dumps and per-point tables as CSV. An
// explicitly configured format must agree with the subcommand's payload.
void resolve_output_format(const std::string& name, md::RunConfig& cfg) {
  const bool tabular =
      name == "simulate" || name == "density" || name == "edgeworth";
  const std::string native = tabular ? "csv" : "json";
  if (cfg.output.format.empty()) {
    cfg.output.format = native;
  } else if (cfg.output.format != native) {
    throw md::ConfigError("config error at \"output.format\": subcommand \"" +
                          name + "\" emits " + native);
  }
}

int run_subcommand(const std::string& name, const md::RunConfig& cfg) {
  if (name == "validate") return run_validate(cfg);
  if (name == "simulate") return run_simulate(cfg);
  if (name == "density") return run_density(cfg);
  if (name == "edgeworth") return run_edgeworth(cfg);
  if (name == "regime") return run_regime(cfg);
  if (name == "clt") return run_clt(cfg);
  if (name == "remainder") return run_remainder(cfg);
  if (name == "euler-bench") return run_euler_bench(cfg);
  throw std::runtime_error("unhandled subcommand \"" + name + "\"");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov-chain-to-diffusion numerics workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_path;
  int workers = 1;
  double ratio_c = 1.0;
  double mu3 = 0.0;
  int k_factor = 0;

  const std::vector<std::pair<std::string, std::string>> subcommands = {
      {"validate", "Check model/innovation/grid assumptions; exit 2 on failure"},
      {"simulate", "Dump chain or coarse diffusion paths as CSV"},
      {"density", "Evaluate the transition density on an (t, y) grid as CSV"},
      {"edgeworth", "Evaluate pi1/pi2/delta1/delta2 on an (t, y) grid as CSV"},
      {"regime", "Distance, sup-scaling, and martingale diagnostics (JSON)"},
      {"clt", "Fixed-ratio CLT experiment for the summed corrections (JSON)"},
      {"remainder", "Second-order remainder ladder on the chain oracle (JSON)"},
      {"euler-bench", "Euler scheme vs exact diffusion discrepancy (JSON)"},
  };
  for (const auto& [name, description] : subcommands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Monte-Carlo seed override");
    sub->add_option("--out", out_path, "Output file (default: stdout)");
    sub->add_option("--workers", workers, "Worker thread count override");
    if (name == "clt") {
      sub->add_option("--c", ratio_c, "Target ratio n/k; sets n = round(c*k)");
      sub->add_option("--mu3", mu3, "Innovation skewness (0 selects gaussian)");
      sub->add_option("--k", k_factor, "Subsampling factor override");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();

  try {
    std::string config_text = "{}";
    if (sub->count("--config") > 0) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) {
        throw md::ConfigError("cannot read config file \"" + config_path +
                              "\"");
      }
      std::ostringstream ss;
      ss << in.rdbuf();
      config_text = ss.str();
    }
    md::RunConfig cfg = md::parse_run_config(config_text, name);
    if (sub->count("--seed") > 0) cfg.mc.seed = seed;
    if (sub->count("--workers") > 0) {
      if (workers < 1) throw md::ConfigError("--workers must be >= 1");
      cfg.mc.workers = workers;
    }
    if (sub->count("--out") > 0) cfg.output.path = out_path;
    if (name == "clt") {
      if (sub->count("--k") > 0) {
        if (k_factor < 1) throw md::ConfigError("--k must be >= 1");
        cfg.grid.k = k_factor;
      }
      if (sub->count("--c") > 0) {
        if (!(ratio_c > 0.0)) throw md::ConfigError("--c must be positive");
        cfg.grid.n = std::max(
            1, static_cast<int>(std::llround(ratio_c * cfg.grid.k)));
      }
      if (sub->count("--mu3") > 0) {
        if (mu3 == 0.0) {
          cfg.innovation.family = "gaussian";
          cfg.innovation.mu3 = 0.0;
        } else {
          cfg.innovation.family = "mixture";
          cfg.innovation.mu3 = mu3;
        }
      }
    }
    resolve_output_format(name, cfg);
    return run_subcommand(name, cfg);
  } catch (const md::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const md::quad::QuadratureError& e) {
    std::cerr << "numerical tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const md::ChainLatticeError& e) {
    std::cerr << "numerical tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const md::DensityUnderflowError& e) {
    std::cerr << "numerical tolerance failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
