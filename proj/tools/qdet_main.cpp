// Command-line driver: simulate / filter / solve / evaluate / verify / plot.
// One JSON config feeds every subcommand; outputs land in --out together
// with a run manifest for replay.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qdet/config.hpp"
#include "qdet/numerics.hpp"
#include "qdet/path_io.hpp"
#include "qdet/riskeval.hpp"
#include "qdet/solver_exp.hpp"
#include "qdet/solver_linear.hpp"
#include "qdet/solver_pde.hpp"
#include "qdet/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qdet;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Manifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void write(const fs::path& dir) {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["outputs"] = outputs;
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::ofstream os(dir / "manifest.json");
    os << j.dump(2) << "\n";
  }
};

std::vector<double> parse_grid_spec(const std::string& spec) {
  double lo, hi;
  int n;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 2)
    throw ConfigError("/grid_spec", "expected lo:hi:n with n >= 2");
  return linspace(lo, hi, static_cast<std::size_t>(n));
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw ConfigError("/out", "cannot write " + p.string());
  os << text;
}

int cmd_simulate(const std::string& config_path, int n_paths,
                 std::uint64_t seed, const std::string& out_dir, double theta,
                 bool use_theta, bool joint, double horizon, double dt,
                 double x0_flag) {
  Setup s = load_setup(config_path);
  fs::create_directories(out_dir);
  Manifest man;
  man.command = "simulate";
  man.config_hash = fnv1a64(canonical_config(s));
  man.seed = seed;

  const double x0 = x0_flag > 0.0 ? x0_flag : s.model.z();
  SimGrid grid{horizon, dt};

  for (int i = 0; i < n_paths; ++i) {
    char name[64];
    std::ostringstream body;
    if (joint) {
      std::snprintf(name, sizeof name, "joint_%04d.csv", i);
      JointPath p = simulate_joint(s.model, s.prior, s.penalty, x0, grid,
                                   seed + static_cast<std::uint64_t>(i));
      write_path_csv(body, p);
    } else {
      std::snprintf(name, sizeof name, "path_%04d.csv", i);
      RngStream rng(seed, static_cast<std::uint64_t>(i));
      const double th = use_theta ? theta : draw_disorder_time(s.prior, rng);
      SamplePath p = simulate_observation(s.model, th, x0, grid, rng);
      p.seed = seed;
      write_path_csv(body, p);
    }
    write_file(fs::path(out_dir) / name, body.str());
    man.outputs.push_back(name);
  }
  man.write(out_dir);
  std::cout << "wrote " << n_paths << " path file(s) to " << out_dir << "\n";
  return 0;
}

int cmd_filter(const std::string& config_path, const std::string& path_csv,
               const std::string& out_dir) {
  Setup s = load_setup(config_path);
  std::ifstream in(path_csv);
  if (!in) throw ConfigError("/path", "cannot open " + path_csv);
  SamplePath p = read_path_csv(in);
  auto states = run_filter(p, s.model, s.prior, s.penalty);
  std::ostringstream body;
  write_filter_csv(body, states);
  if (out_dir.empty()) {
    std::cout << body.str();
  } else {
    fs::create_directories(out_dir);
    Manifest man;
    man.command = "filter";
    man.config_hash = fnv1a64(canonical_config(s));
    man.seed = p.seed;
    write_file(fs::path(out_dir) / "filtered.csv", body.str());
    man.outputs.push_back("filtered.csv");
    man.write(out_dir);
  }
  return 0;
}

int cmd_solve(const std::string& config_path, const std::string& method,
              const std::string& ygrid_spec, const std::string& xgrid_spec,
              const std::string& out_dir, std::uint64_t seed) {
  Setup s = load_setup(config_path);
  if (!s.model.is_subclass())
    throw CapabilityError("solver requires subclass model");
  fs::create_directories(out_dir);
  Manifest man;
  man.command = "solve/" + method;
  man.config_hash = fnv1a64(canonical_config(s));
  man.seed = seed;

  ChangeOfVariables cov(s.model, s.model.z());
  const Prior prior = s.prior;
  json report;
  report["method"] = method;

  // default grids derived from the constant-rho scale
  std::vector<double> y_grid, x_grid;
  {
    double h_scale;
    if (s.penalty.kind == PenaltySpec::Kind::Exponential) {
      ExpBoundarySolver probe(cov, prior, s.penalty.c, s.penalty.alpha);
      h_scale = probe.solve_at(0.0).h;
    } else {
      LinearBoundarySolver probe(cov, prior, s.penalty.c);
      h_scale = probe.solve_at(0.0).h;
    }
    const YRange yr = far_field_y_range(
        cov, s.penalty.stop_floor(prior.lambda), 4.0 * h_scale);
    y_grid = ygrid_spec.empty() ? linspace(yr.y_min, yr.y_max, 33)
                                : parse_grid_spec(ygrid_spec);
    x_grid = xgrid_spec.empty()
                 ? logspace(0.05 * s.model.z(), 20.0 * s.model.z(), 200)
                 : parse_grid_spec(xgrid_spec);
  }

  BoundaryTable in_y, in_x;
  ValueSlice slice;

  if (method == "linear") {
    if (s.penalty.kind != PenaltySpec::Kind::Linear)
      throw ConfigError("/penalty/kind", "config penalty is not linear");
    LinearBoundarySolver solver(cov, prior, s.penalty.c);
    in_y = solver.solve_boundary(y_grid);
    in_x = solver.map_to_x(in_y, x_grid);
    const double y_mid = y_grid[y_grid.size() / 2];
    const double h_mid = in_y.value_at(y_mid);
    slice = solver.value_slice(y_mid, h_mid, linspace(0.0, h_mid, 101));
    report["max_root_residual"] = in_y.max_residual;
    report["slope_certified"] = in_y.slope_certified;
    report["unique_certified"] = in_y.unique_certified;
  } else if (method == "exp") {
    if (s.penalty.kind != PenaltySpec::Kind::Exponential)
      throw ConfigError("/penalty/kind", "config penalty is not exponential");
    ExpBoundarySolver solver(cov, prior, s.penalty.c, s.penalty.alpha);
    in_y = solver.solve_boundary(y_grid);
    in_x = solver.map_to_x(in_y, x_grid);
    const double y_mid = y_grid[y_grid.size() / 2];
    const double h_mid = in_y.value_at(y_mid);
    slice = solver.value_slice(y_mid, h_mid, linspace(0.0, h_mid, 101));
    report["smooth_fit_residual"] = in_y.max_residual;
    std::cout << "smooth-fit residual: " << in_y.max_residual
              << " (tol 1e-07)\n";
  } else if (method == "pde") {
    PdeSolver solver(cov, prior, s.penalty);
    LCPGrid grid = solver.solve();
    in_y = PdeSolver::extract_boundary(grid, solver.stop_floor());
    in_y.z = cov.z();
    if (s.penalty.kind == PenaltySpec::Kind::Exponential) {
      ExpBoundarySolver mapper(cov, prior, s.penalty.c, s.penalty.alpha);
      in_x = mapper.map_to_x(in_y, x_grid);
    } else {
      LinearBoundarySolver mapper(cov, prior, s.penalty.c);
      in_x = mapper.map_to_x(in_y, x_grid);
    }
    report["complementarity_residual"] = grid.comp_residual;
    report["sweeps"] = grid.sweeps;
    report["central_fallback_nodes"] = grid.central_fallback_count;
    report["monotone_scheme"] = grid.monotone;
    if (!grid.monotone)
      std::cout << "warning: non-monotone stencil rows detected; refine the grid\n";

    std::ostringstream surf;
    surf << "phi,y,H,active\n";
    char buf[160];
    for (std::size_t j = 0; j < grid.y.size(); ++j)
      for (std::size_t i = 0; i < grid.phi.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%d\n", grid.phi[i],
                      grid.y[j], grid.H[grid.idx(i, j)],
                      grid.active[grid.idx(i, j)] ? 1 : 0);
        surf << buf;
      }
    write_file(fs::path(out_dir) / "surface.csv", surf.str());
    man.outputs.push_back("surface.csv");

    const double y_mid = grid.y[grid.y.size() / 2];
    slice.y = y_mid;
    slice.h = in_y.value_at(y_mid);
    slice.penalty = s.penalty.name();
    for (std::size_t i = 0; i < grid.phi.size(); ++i) {
      slice.phi.push_back(grid.phi[i]);
      slice.value.push_back(grid.H[grid.idx(i, grid.y.size() / 2)]);
    }
  } else {
    throw ConfigError("/penalty", "method must be linear, exp or pde");
  }

  {
    std::ostringstream os;
    write_boundary_csv(os, in_y);
    write_file(fs::path(out_dir) / "boundary_y.csv", os.str());
    man.outputs.push_back("boundary_y.csv");
  }
  {
    std::ostringstream os;
    write_boundary_csv(os, in_x);
    write_file(fs::path(out_dir) / "boundary_x.csv", os.str());
    man.outputs.push_back("boundary_x.csv");
  }
  {
    std::ostringstream os;
    write_value_slice_csv(os, slice);
    write_file(fs::path(out_dir) / "value_slice.csv", os.str());
    man.outputs.push_back("value_slice.csv");
  }
  report["boundary_min"] = in_y.min_h();
  report["boundary_max"] = in_y.max_h();
  report["stop_floor"] = s.penalty.stop_floor(prior.lambda);
  write_file(fs::path(out_dir) / "residual_report.json", report.dump(2) + "\n");
  man.outputs.push_back("residual_report.json");
  man.write(out_dir);
  std::cout << "boundary range [" << in_y.min_h() << ", " << in_y.max_h()
            << "], floor " << s.penalty.stop_floor(prior.lambda) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& policy_spec,
                 const std::string& boundary_csv, int n_paths,
                 std::uint64_t seed, const std::string& out_dir, double dt,
                 const std::string& scan) {
  Setup s = load_setup(config_path);
  const Policy::Statistic stat =
      s.penalty.kind == PenaltySpec::Kind::Exponential
          ? Policy::Statistic::PhiExponential
          : Policy::Statistic::PhiLinear;

  Policy policy;
  if (policy_spec == "never") {
    policy = Policy::never();
  } else if (policy_spec == "immediate") {
    policy = Policy::immediate();
  } else if (policy_spec.rfind("threshold:", 0) == 0) {
    policy = Policy::constant_threshold(std::stod(policy_spec.substr(10)), stat);
  } else if (policy_spec == "boundary") {
    if (boundary_csv.empty())
      throw ConfigError("/policy", "boundary policy needs --boundary FILE");
    std::ifstream in(boundary_csv);
    if (!in) throw ConfigError("/boundary", "cannot open " + boundary_csv);
    BoundaryTable t = read_boundary_csv(in);
    policy = t.coord == BoundaryTable::Coord::X
                 ? Policy::boundary_in_x(std::move(t), stat)
                 : Policy::boundary_in_y(t, t.z, stat);
  } else {
    throw ConfigError("/policy",
                      "expected never|immediate|threshold:H|boundary");
  }

  SimGrid grid{default_horizon(s.prior), dt};
  McOptions mco;

  json out;
  if (!scan.empty()) {
    std::vector<double> mults;
    std::istringstream ss(scan);
    std::string tok;
    while (std::getline(ss, tok, ',')) mults.push_back(std::stod(tok));
    ScanReport rep = optimality_scan(s.model, s.prior, s.penalty, policy, mults,
                                     grid, static_cast<std::size_t>(n_paths),
                                     seed, mco);
    out["scan"] = json::array();
    for (const ScanRow& r : rep.rows) {
      out["scan"].push_back({{"multiplier", r.multiplier},
                             {"risk", r.estimate.risk},
                             {"se", r.estimate.se},
                             {"diff_vs_base", r.diff_vs_base},
                             {"se_diff", r.se_diff},
                             {"truncated", r.estimate.truncated}});
    }
    out["base_local_min_2se"] = rep.base_local_min_2se;
  } else {
    RiskEstimate e = evaluate_risk(s.model, s.prior, s.penalty, policy, grid,
                                   static_cast<std::size_t>(n_paths), seed, mco);
    out = {{"risk", e.risk},          {"se", e.se},
           {"false_alarm", e.false_alarm}, {"delay", e.delay},
           {"n", e.n_paths},          {"truncated", e.truncated}};
    if (e.truncation_flagged) out["truncation_flagged"] = true;
  }

  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    Manifest man;
    man.command = "evaluate";
    man.config_hash = fnv1a64(canonical_config(s));
    man.seed = seed;
    write_file(fs::path(out_dir) / "risk.json", text);
    man.outputs.push_back("risk.json");
    man.write(out_dir);
  }
  return 0;
}

json check_to_json(const CheckResult& c) {
  return {{"name", c.name},
          {"pass", c.pass},
          {"value", c.value},
          {"threshold", c.threshold},
          {"detail", c.detail}};
}

int cmd_verify(const std::string& config_path, const std::string& suite,
               const std::string& boundary_csv, bool quick, std::uint64_t seed,
               const std::string& out_dir) {
  Setup s = load_setup(config_path);
  VerifyOptions vo;
  vo.quick = quick;
  vo.seed = seed;

  BoundaryTable external;
  bool have_external = false;
  if (!boundary_csv.empty()) {
    std::ifstream in(boundary_csv);
    if (!in) throw ConfigError("/boundary", "cannot open " + boundary_csv);
    external = read_boundary_csv(in);
    have_external = true;
  }

  if (suite != "filters" && suite != "boundaries" && suite != "risk" &&
      suite != "all")
    throw ConfigError("/suite", "expected filters|boundaries|risk|all");

  // each sub-suite runs independently; the overall exit code is the max of
  // the sub-suite codes (1 failed check, 3 capability, 4 numerical)
  json rep = json::array();
  int exit_code = 0;
  auto run_suite = [&](const std::string& name, auto&& fn) {
    json js;
    js["suite"] = name;
    try {
      SuiteResult sr = fn();
      js["pass"] = sr.pass();
      js["checks"] = json::array();
      for (const CheckResult& c : sr.checks) {
        js["checks"].push_back(check_to_json(c));
        std::printf("[%s] %-36s %s  (value %.4g, limit %.4g)%s%s\n",
                    sr.suite.c_str(), c.name.c_str(), c.pass ? "PASS" : "FAIL",
                    c.value, c.threshold, c.detail.empty() ? "" : "  ",
                    c.detail.c_str());
      }
      if (!sr.pass()) exit_code = std::max(exit_code, 1);
    } catch (const CapabilityError& e) {
      js["pass"] = false;
      js["error"] = e.what();
      std::printf("[%s] suite skipped: %s\n", name.c_str(), e.what());
      exit_code = std::max(exit_code, 3);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      js["pass"] = false;
      js["error"] = e.what();
      std::printf("[%s] suite failed: %s\n", name.c_str(), e.what());
      exit_code = std::max(exit_code, 4);
    }
    rep.push_back(js);
  };

  if (suite == "filters" || suite == "all")
    run_suite("filters", [&] { return verify_filters(s, vo); });
  if (suite == "boundaries" || suite == "all")
    run_suite("boundaries", [&] { return verify_boundaries(s, vo); });
  if (suite == "risk" || suite == "all")
    run_suite("risk", [&] {
      return verify_risk(s, vo, have_external ? &external : nullptr);
    });

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "verify_report.json", rep.dump(2) + "\n");
  }
  return exit_code;
}

int cmd_plot(const std::string& in_csv, const std::string& out_svg) {
  std::ifstream in(in_csv);
  if (!in) throw ConfigError("/in", "cannot open " + in_csv);

  // accepts boundary CSVs (coord,grid,h) and value slices (phi,G)
  std::vector<double> xs, ys;
  std::string line;
  bool is_boundary = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("coord,", 0) == 0) {
      is_boundary = true;
      continue;
    }
    if (line.rfind("phi,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    std::getline(ls, a, ',');
    std::getline(ls, b, ',');
    std::getline(ls, c, ',');
    if (is_boundary) {
      xs.push_back(std::stod(b));
      ys.push_back(std::stod(c));
    } else {
      xs.push_back(std::stod(a));
      ys.push_back(std::stod(b));
    }
  }
  if (xs.size() < 2) throw ConfigError("/in", "nothing to plot");

  const double w = 640, h = 400, mrg = 50;
  double x_lo = xs[0], x_hi = xs[0], y_lo = ys[0], y_hi = ys[0];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x_lo = std::min(x_lo, xs[i]);
    x_hi = std::max(x_hi, xs[i]);
    y_lo = std::min(y_lo, ys[i]);
    y_hi = std::max(y_hi, ys[i]);
  }
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w
      << "' height='" << h << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<polyline fill='none' stroke='steelblue' stroke-width='1.5' points='";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = mrg + (xs[i] - x_lo) / (x_hi - x_lo) * (w - 2 * mrg);
    const double py = h - mrg - (ys[i] - y_lo) / (y_hi - y_lo) * (h - 2 * mrg);
    svg << px << "," << py << " ";
  }
  svg << "'/>\n<text x='" << mrg << "' y='" << h - 12 << "' font-size='12'>"
      << in_csv << "  [" << x_lo << ", " << x_hi << "] x [" << y_lo << ", "
      << y_hi << "]</text>\n</svg>\n";
  write_file(out_svg, svg.str());
  std::cout << "wrote " << out_svg << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian quickest drift-change detection for one-dimensional diffusions"};
  app.require_subcommand(1);

  std::string config, out_dir, path_csv, boundary_csv, ygrid, xgrid;
  std::string policy = "never", suite = "all", scan, plot_in, plot_out;
  std::string method = "linear";
  int n_paths = 1;
  std::uint64_t seed = 1;
  double theta = 0.0, horizon = 1.0, dt = 1e-3, x0 = 0.0;
  bool joint = false, quick = false;

  auto* sim = app.add_subcommand("simulate", "simulate observation or joint paths");
  sim->add_option("--config", config)->required();
  sim->add_option("--paths", n_paths);
  sim->add_option("--seed", seed);
  sim->add_option("--out", out_dir)->required();
  auto* theta_opt = sim->add_option("--theta", theta, "fixed disorder time (inf allowed)");
  sim->add_flag("--joint", joint, "emit innovation-driven joint paths");
  sim->add_option("--horizon", horizon);
  sim->add_option("--dt", dt);
  sim->add_option("--x0", x0);

  auto* flt = app.add_subcommand("filter", "run the likelihood-ratio filter on a path CSV");
  flt->add_option("--config", config)->required();
  flt->add_option("--path", path_csv)->required();
  flt->add_option("--out", out_dir);

  auto* slv = app.add_subcommand("solve", "compute stopping boundaries and values");
  slv->add_option("--config", config)->required();
  slv->add_option("--penalty", method, "linear|exp|pde");
  slv->add_option("--ygrid", ygrid, "lo:hi:n");
  slv->add_option("--xgrid", xgrid, "lo:hi:n");
  slv->add_option("--seed", seed);
  slv->add_option("--out", out_dir)->required();

  auto* evl = app.add_subcommand("evaluate", "Monte Carlo risk of a policy");
  evl->add_option("--config", config)->required();
  evl->add_option("--policy", policy, "never|immediate|threshold:H|boundary");
  evl->add_option("--boundary", boundary_csv);
  evl->add_option("--paths", n_paths);
  evl->add_option("--seed", seed);
  evl->add_option("--dt", dt);
  evl->add_option("--scan", scan, "comma-separated threshold multipliers");
  evl->add_option("--out", out_dir);

  auto* ver = app.add_subcommand("verify", "run verification suites");
  ver->add_option("--config", config)->required();
  ver->add_option("--suite", suite, "filters|boundaries|risk|all");
  ver->add_option("--boundary", boundary_csv);
  ver->add_flag("--quick", quick);
  ver->add_option("--seed", seed);
  ver->add_option("--out", out_dir);

  auto* plt = app.add_subcommand("plot", "SVG line plot of a boundary or value CSV");
  plt->add_option("--in", plot_in)->required();
  plt->add_option("--out", plot_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(config, n_paths, seed, out_dir, theta,
                          theta_opt->count() > 0, joint, horizon, dt, x0);
    if (flt->parsed()) return cmd_filter(config, path_csv, out_dir);
    if (slv->parsed())
      return cmd_solve(config, method, ygrid, xgrid, out_dir, seed);
    if (evl->parsed())
      return cmd_evaluate(config, policy, boundary_csv, n_paths, seed, out_dir,
                          dt, scan);
    if (ver->parsed())
      return cmd_verify(config, suite, boundary_csv, quick, seed, out_dir);
    if (plt->parsed()) return cmd_plot(plot_in, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapabilityError& e) {
    std::cerr << "capability error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
