#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpharm/experiments.hpp"
#include "vpharm/pmean.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kNotConverged = 3;

const char* const kSchemaHelp = R"(Study config (JSON):
  {
    "dim": 2,                                   optional, 2 or 3
    "domain": {"kind": "rectangle", "lo": [0,0], "hi": [1,1]}
            | {"kind": "disk", "center": [0,0], "radius": 1}
            | {"kind": "annulus", "center": [0,0], "r_inner": 1, "r_outer": 2}
            | {"kind": "polygon", "vertices": [[x,y], ...]},
    "p": [1.5, 2, "inf"],                       number, "inf", or a list
    "eps": [0.2, 0.1, 0.05],                    strictly decreasing
    "h": [0.0078125],                           grid spacing(s); solve/converge
    "data": "constant|affine|quadratic|harmonic|radial_power|cubic|aronsson",
    "alpha": 1.0,                               optional, radial_power only
    "out": "results",                           output directory
    "threads": 0,                               0 = all cores (capped by VPHARM_THREADS)
    "tol_fix": 0, "max_iters": 0,               0 = defaults
    "init": "constant_min_g|constant_max_g|boundary_interpolant",
    "sweep": "jacobi|gauss_seidel",
    "error_control": true,
    "quadrature": {"radial": 8, "angular": 32},
    "amvp": {"points": 20, "seed": 1}
  }
)";

std::vector<double> parse_csv_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw vpharm::ConfigError("not a number: '" + item + "'");
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used != item.size()) throw vpharm::ConfigError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int run_pmean(const std::string& p_text, const std::string& values_text, const std::string& weights_text) {
  const vpharm::Exponent p = vpharm::Exponent::parse(p_text);
  const std::vector<double> values = parse_csv_numbers(values_text);
  std::vector<double> weights = weights_text.empty() ? std::vector<double>(values.size(), 1.0)
                                                     : parse_csv_numbers(weights_text);
  const vpharm::WeightedSample sample(values, std::move(weights));
  const double nu = vpharm::compute_pmean(sample, p).nu;
  double residual = 0.0;
  if (p.is_infinite()) {
    residual = (sample.max_value() - nu) - (nu - sample.min_value());
  } else {
    residual = vpharm::pmean_equation(sample, p, nu);
  }
  std::printf("%.17g\nresidual %.3g\n", nu, residual);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational p-harmonious functions: p-means, Perron solves and studies"};
  app.require_subcommand(1);

  std::string p_text, values_text, weights_text;
  auto* pmean = app.add_subcommand("pmean", "p-mean of a weighted sample");
  pmean->add_option("--p", p_text, "exponent in [1, inf]")->required();
  pmean->add_option("--values", values_text, "comma-separated values")->required();
  pmean->add_option("--weights", weights_text, "comma-separated positive weights (default: equal)");

  std::string config_path, out_dir;
  long threads = -1;
  std::vector<CLI::App*> studies;
  for (const char* name : {"solve", "amvp", "converge"}) {
    const std::string desc = std::string(name) == "solve"      ? "Perron solve; writes solution.csv and report.json"
                             : std::string(name) == "amvp"     ? "AMVP study; writes amvp.csv"
                                                               : "convergence study; writes convergence.csv";
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "study config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--threads", threads, "worker threads (overrides the config)");
    sub->footer(kSchemaHelp);
    studies.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << kSchemaHelp;
    return kConfigError;
  }

  try {
    if (pmean->parsed()) return run_pmean(p_text, values_text, weights_text);
    for (auto* sub : studies) {
      if (!sub->parsed()) continue;
      vpharm::StudyConfig cfg = vpharm::load_study_config(config_path);
      if (!out_dir.empty()) cfg.out = out_dir;
      if (threads >= 0) cfg.threads = static_cast<unsigned>(threads);
      const bool converged = vpharm::run_command(sub->get_name(), cfg, std::cerr);
      return converged ? kOk : kNotConverged;
    }
  } catch (const vpharm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n\n" << kSchemaHelp;
    return kConfigError;
  } catch (const vpharm::InvalidExponent& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const vpharm::InvalidSample& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const vpharm::UnsupportedDimension& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
