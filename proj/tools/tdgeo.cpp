// tdgeo command-line front end.
//
// Exit codes: 0 success, 1 claim failure, 2 usage error, 3 input validation error.

#include "tdgeo/experiments.hpp"
#include "tdgeo/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tdgeo;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kClaimFailure = 1;
constexpr int kUsage = 2;
constexpr int kInvalidInput = 3;

/// --out, then TDGEO_OUT, then `fallback`.
std::string output_dir(const std::string& flag, const std::string& fallback = ".") {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("TDGEO_OUT"); env && *env) return env;
  return fallback;
}

std::string in_dir(const std::string& dir, const std::string& file) {
  fs::create_directories(dir);
  return (fs::path(dir) / file).string();
}

bool is_validation_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotStochastic:
    case ErrorCode::Reducible:
    case ErrorCode::Periodic:
    case ErrorCode::InvalidProbability:
    case ErrorCode::ShapeMismatch:
      return true;
    default:
      return false;
  }
}

int report_error(const Error& e) {
  const std::string prefix = is_validation_error(e.code()) ? "InvalidMRP: " : "";
  std::cerr << "error: " << prefix << e.what() << "\n";
  return kInvalidInput;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().stem().string(); }

// ---------------------------------------------------------------------------

int cmd_analyze(const std::string& file, int k_max, const std::string& out_flag) {
  const auto mrp = io::load_mrp(file);
  const auto g = td_matrix(mrp);
  json rho_k = json::object();
  for (int k = 1; k <= k_max; ++k)
    rho_k[std::to_string(k)] = io::number_or_inf(effective_reversibility(k_step_matrix(g, k)));
  json pairs = json::array();
  for (const auto& p : linalg::complex_eigenpairs(g.A))
    pairs.push_back({{"re", p.value.real()}, {"im", p.value.imag()}});
  const json report = {{"n", g.n},
                       {"gamma", g.gamma},
                       {"mu", io::to_json(g.mu)},
                       {"V_star", io::to_json(g.V_star)},
                       {"lambda_min_S_A", g.lambda_min_S_A},
                       {"B", g.B},
                       {"rho", io::number_or_inf(reversibility_coefficient(g))},
                       {"lambda2", lambda2(g.P)},
                       {"complex_pair", !pairs.empty()},
                       {"complex_eigenvalues_of_A", pairs},
                       {"rho_k", rho_k},
                       {"certificate",
                        {{"scc_count", mrp.certificate().scc_count},
                         {"period", mrp.certificate().period}}}};
  std::cout << report.dump(2) << "\n";
  const std::string dir = output_dir(out_flag, "");
  if (!dir.empty()) io::write_file(in_dir(dir, stem_of(file) + "_analysis.json"), report.dump(2) + "\n");
  return kOk;
}

int cmd_simulate(const std::string& file, const std::string& out_flag) {
  const auto spec_json = io::parse_json(io::read_file(file));
  const auto spec = experiment_spec_from_json(spec_json);
  const std::string base_dir = fs::path(file).parent_path().string();
  const std::string dir = output_dir(out_flag, spec.output_dir);
  const auto runs = run_experiment(spec, base_dir.empty() ? "." : base_dir);
  bool any_error = false;
  for (const auto& r : runs) {
    if (r.trajectory) {
      io::write_file(in_dir(dir, r.file), trajectory_csv(*r.trajectory));
      std::cout << r.file << "  " << to_string(r.trajectory->status) << "\n";
    } else {
      any_error = true;
      std::cout << r.file << "  error: " << *r.error << "\n";
    }
  }
  io::write_file(in_dir(dir, spec.name + "_summary.json"),
                 experiment_summary(spec, runs).dump(2) + "\n");
  return any_error ? kInvalidInput : kOk;
}

int cmd_spiral(const SpiralConfig& cfg, const std::string& out_flag) {
  const auto res = run_spiral(cfg);
  const std::string dir = output_dir(out_flag);
  std::vector<SvgPath> delta_paths, k_paths;
  const std::vector<std::string> colors{"#c0392b", "#d35400", "#8e44ad", "#2980b9", "#16a085",
                                        "#2c3e50"};
  for (const auto& r : res.runs) {
    const std::string name = spiral_run_name(r);
    if (r.trajectory.size() > 0) {
      io::write_file(in_dir(dir, name + ".csv"), trajectory_csv(r.trajectory));
      io::write_file(in_dir(dir, name + "_plane.csv"), plane_csv(r.trajectory, r.plane));
      auto& paths = r.sweep == "delta" ? delta_paths : k_paths;
      paths.push_back(plane_path(r.plane, colors[paths.size() % colors.size()]));
    }
    std::cout << name << "  "
              << (r.trajectory.size() > 0 ? to_string(r.status) : std::string("Error"));
    if (r.error) std::cout << "  (" << *r.error << ")";
    std::cout << "\n";
  }
  io::write_file(in_dir(dir, "spiral_summary.json"), spiral_summary(res).dump(2) + "\n");
  // Diverging paths reach 1e6; the figures clip to a window around the start.
  const auto clip = [](std::vector<SvgPath> paths) {
    for (auto& p : paths)
      std::erase_if(p.points, [](const auto& xy) { return std::hypot(xy.first, xy.second) > 3.0; });
    return paths;
  };
  io::write_file(in_dir(dir, "spiral_delta.svg"), render_svg({}, clip(delta_paths)));
  io::write_file(in_dir(dir, "spiral_k.svg"), render_svg({}, clip(k_paths)));
  return kOk;
}

int cmd_construct_divergent(const std::string& in, const std::string& out, double fraction,
                            Index extension, const std::string& v0) {
  const auto mrp = io::load_mrp(in);
  const auto g = td_matrix(mrp.with_reward(Vector(Vector::Zero(mrp.n()))));
  const V0Mode mode = v0 == "u2" ? V0Mode::U2 : v0 == "sum" ? V0Mode::Sum : V0Mode::U1;
  std::shared_ptr<DivergentApproximator> approx;
  try {
    approx = construct_divergent(g, fraction, mode, extension);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoComplexEigenvalue) throw;
    std::cerr << "refused: " << e.what() << "\n";
    return kInvalidInput;
  }
  // Certificate: a short run from theta = 0 with d theta / dt checked at every sample.
  IntegratorConfig ic;
  ic.t_max = 10.0;
  const auto sys = td_vector_field(approx, g);
  const auto traj = integrate(sys, approx->initial_theta(), ic);
  double min_rate = kInfinity;
  for (const auto& th : traj.thetas) min_rate = std::min(min_rate, sys(th)(0));
  json doc = approx->to_json();
  doc["certificate"] = {{"reward", "zeroed"},
                        {"t_max", ic.t_max},
                        {"samples", traj.size()},
                        {"min_theta_dot", min_rate},
                        {"theta_dot_positive", min_rate > 0.0},
                        {"norm_mu_initial", traj.diagnostics.front().norm_mu},
                        {"norm_mu_final", traj.diagnostics.back().norm_mu}};
  if (const auto parent = fs::path(out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  io::write_file(out, doc.dump(2) + "\n");
  std::cout << "wrote " << out << "  (a = " << approx->parts().a << ", b = " << approx->parts().b
            << ", epsilon = " << approx->parts().epsilon << ", min dtheta/dt = " << min_rate
            << ")\n";
  return min_rate > 0.0 ? kOk : kClaimFailure;
}

const std::map<std::string, std::vector<std::string>>& claim_aliases() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"all", {}},
      {"T1", {"T1"}},
      {"T2", {"T2"}},
      {"C1", {"C1"}},
      {"T3", {"T3"}},
      {"P1", {"P1_divergence"}},
      {"P2", {"P2_kstep"}},
      {"LE", {"L_homogeneous"}},
      {"PB", {"P_bihoelder"}},
      {"BL", {"B_linear"}},
  };
  return m;
}

int cmd_verify(const std::string& claim, std::uint64_t seed, const std::string& out_flag,
               const std::string& mrp_file, bool negate) {
  SuiteConfig cfg;
  cfg.seed = seed;
  cfg.negate_drive = negate;
  const auto& aliases = claim_aliases();
  if (auto it = aliases.find(claim); it != aliases.end()) {
    cfg.claims.insert(it->second.begin(), it->second.end());
  } else if (std::find(claim_ids().begin(), claim_ids().end(), claim) != claim_ids().end()) {
    cfg.claims.insert(claim);
  } else {
    std::cerr << "error: unknown claim id \"" << claim << "\"\n";
    return kUsage;
  }

  std::vector<VerificationReport> reports;
  if (!mrp_file.empty()) {
    // A user MRP replaces the canonical fixtures of the MRP-only claims.
    const auto mrp = io::load_mrp(mrp_file);
    const std::string label = stem_of(mrp_file);
    if (cfg.wants("P1_divergence")) {
      DivergenceConfig dc;
      dc.seed = seed;
      reports.push_back(verify_divergence(mrp, dc));
      reports.back().fixture = label;
    }
    if (cfg.wants("P2_kstep")) {
      reports.push_back(verify_kstep_proposition(td_matrix(mrp), {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
      reports.back().fixture = label;
    }
    // The remaining claims still run on their canonical fixtures.
    std::set<std::string> rest;
    for (const auto& id : claim_ids())
      if (cfg.wants(id) && id != "P1_divergence" && id != "P2_kstep") rest.insert(id);
    cfg.claims = rest;
    if (rest.empty()) cfg.claims.insert("none");
  }
  if (!cfg.claims.count("none")) {
    auto suite = run_full_suite(cfg);
    reports.insert(reports.end(), suite.begin(), suite.end());
  }

  const std::string dir = output_dir(out_flag);
  bool failed = false;
  for (const auto& r : reports) {
    io::write_file(in_dir(dir, r.claim_id + "_" + r.fixture + ".json"), to_json(r).dump(2) + "\n");
    failed = failed || r.failed();
    std::cout << r.claim_id << "  " << r.fixture << "  " << to_string(r.outcome);
    if (const auto m = r.margin()) std::cout << "  margin " << format_cell(*m);
    if (r.outcome == Outcome::NotApplicable) std::cout << "  (skipped: hypothesis not met)";
    std::cout << "\n";
  }
  io::write_file(in_dir(dir, "summary.csv"), summary_csv(reports));
  return failed ? kClaimFailure : kOk;
}

int cmd_plot_data(const std::string& field_mrp, const std::string& traj_file,
                  const std::string& plane_mrp, int grid, double extent, int k,
                  const std::string& out_flag) {
  const std::string dir = output_dir(out_flag);
  std::vector<GridPoint> points;
  std::vector<SvgPath> paths;
  std::string stem;
  const std::string basis_source = !plane_mrp.empty() ? plane_mrp : field_mrp;
  if (basis_source.empty())
    throw Error(ErrorCode::InvalidArgument, "plot-data needs --vector-field or --mrp for the plane");
  const auto g = td_matrix(io::load_mrp(basis_source));
  const Matrix basis = spiral_plane(g);

  if (!field_mrp.empty()) {
    const auto fg = td_matrix(io::load_mrp(field_mrp));
    require(fg.n == g.n, ErrorCode::ShapeMismatch, "plane and field MRPs differ in size");
    GridSpec spec{-extent, extent, -extent, extent, grid, grid};
    const Matrix drive = k_step_matrix(fg, k).A;
    points = vector_field_grid(fg, basis, spec, &drive);
    stem = stem_of(field_mrp);
    io::write_file(in_dir(dir, stem + "_field.csv"), grid_csv(points));
  }
  if (!traj_file.empty()) {
    const auto tv = read_trajectory_csv(io::read_file(traj_file));
    require(tv.values.rows() == g.n, ErrorCode::ShapeMismatch,
            "trajectory dimension differs from the MRP");
    Matrix plane = basis.transpose() * (tv.values.colwise() - g.V_star);
    std::string csv = "t,x,y\n";
    for (Index i = 0; i < plane.cols(); ++i)
      csv += format_cell(tv.times[static_cast<std::size_t>(i)]) + "," + format_cell(plane(0, i)) +
             "," + format_cell(plane(1, i)) + "\n";
    const std::string tstem = stem_of(traj_file);
    io::write_file(in_dir(dir, tstem + "_plane.csv"), csv);
    paths.push_back(plane_path(plane, "#c0392b"));
    stem = stem.empty() ? tstem : stem + "_" + tstem;
  }
  io::write_file(in_dir(dir, stem + ".svg"), render_svg(points, paths));
  std::cout << "wrote " << (fs::path(dir) / (stem + ".svg")).string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TD learning geometry: analysis, simulation and claim verification"};
  app.require_subcommand(1);

  std::string out;
  auto* analyze = app.add_subcommand("analyze", "Report mu, V*, rho, lambda2 and rho_k for an MRP");
  std::string analyze_file;
  int k_max = 5;
  analyze->add_option("mrp", analyze_file, "MRP JSON file")->required();
  analyze->add_option("--k-max", k_max, "Largest k for rho_k")->check(CLI::PositiveNumber);
  analyze->add_option("--out", out, "Also write <stem>_analysis.json here");

  auto* simulate = app.add_subcommand("simulate", "Run an experiment spec");
  std::string spec_file;
  simulate->add_option("spec", spec_file, "Experiment spec JSON")->required();
  simulate->add_option("--out", out, "Output directory");

  auto* spiral = app.add_subcommand("spiral", "Delta and k sweeps on the three-state chain");
  SpiralConfig scfg;
  spiral->add_option("--deltas", scfg.deltas, "Reverse-transition probabilities");
  spiral->add_option("--ks", scfg.ks, "k-step returns");
  spiral->add_option("--gamma", scfg.gamma, "Discount")->check(CLI::Range(0.0, 0.999999));
  spiral->add_option("--t-max", scfg.t_max, "Horizon")->check(CLI::PositiveNumber);
  spiral->add_option("--out", out, "Output directory");

  auto* construct = app.add_subcommand("construct-divergent", "Build the spiral approximator");
  std::string construct_in, construct_out, v0 = "u1";
  double fraction = 0.5;
  Index extension = 0;
  construct->add_option("mrp", construct_in, "MRP JSON file")->required();
  construct->add_option("out", construct_out, "Output JSON")->required();
  construct->add_option("--epsilon-fraction", fraction, "Fraction of the admissible epsilon")
      ->check(CLI::Range(1e-9, 1.0 - 1e-9));
  construct->add_option("--extension-rank", extension, "Extra linear directions (0..n-2)");
  construct->add_option("--v0", v0, "Starting value vector")->check(CLI::IsMember({"u1", "u2", "sum"}));

  auto* verify = app.add_subcommand("verify", "Run claim checks");
  std::string claim = "all", verify_mrp;
  std::uint64_t seed = 0;
  bool negate = false;
  verify->add_option("--claim", claim, "all|T1|T2|C1|T3|P1|P2|LE|PB|BL");
  verify->add_option("--seed", seed, "Master seed");
  verify->add_option("--mrp", verify_mrp, "Use this MRP for the P1 and P2 checks");
  verify->add_flag("--negate-a", negate, "Negate A (harness sanity check)");
  verify->add_option("--out", out, "Output directory");

  auto* plot = app.add_subcommand("plot-data", "Vector-field grids, plane projections and SVG");
  std::string field_mrp, traj_file, plane_mrp;
  int grid = 21, k = 1;
  double extent = 1.0;
  plot->add_option("--vector-field", field_mrp, "MRP whose TD field is sampled");
  plot->add_option("--trajectory", traj_file, "Trajectory CSV to project");
  plot->add_option("--mrp", plane_mrp, "MRP defining the plane (default: the field MRP)");
  plot->add_option("--grid", grid, "Grid points per axis")->check(CLI::Range(1, 1000));
  plot->add_option("--extent", extent, "Half-width of the plotted square")->check(CLI::PositiveNumber);
  plot->add_option("--k", k, "k-step drive matrix")->check(CLI::PositiveNumber);
  plot->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*analyze) return cmd_analyze(analyze_file, k_max, out);
    if (*simulate) return cmd_simulate(spec_file, out);
    if (*spiral) return cmd_spiral(scfg, out);
    if (*construct) return cmd_construct_divergent(construct_in, construct_out, fraction, extension, v0);
    if (*verify) return cmd_verify(claim, seed, out, verify_mrp, negate);
    if (*plot) {
      if (field_mrp.empty() && traj_file.empty()) {
        std::cerr << "error: plot-data needs --vector-field and/or --trajectory\n";
        return kUsage;
      }
      return cmd_plot_data(field_mrp, traj_file, plane_mrp, grid, extent, k, out);
    }
  } catch (const Error& e) {
    return report_error(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: ParseError: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidInput;
  }
  return kUsage;
}
