// Command-line surface: simulate the ball-beam closed loop, sweep matching
// residuals, demonstrate the constant-coefficient construction, solve the
// symmetry equation, and dump parameter diagnostics.
//
// Exit codes: 0 success, 1 usage/config error, 2 domain outcome
// (divergence or residual failure).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "matchctl/config_io.hpp"
#include "matchctl/linear.hpp"
#include "matchctl/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace matchctl;

namespace {

constexpr const char* kSchemaTag = "matchctl/v1";

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
};

fs::path resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("MATCHCTL_OUT"); env && *env) return env;
  return ".";
}

io::RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return io::RunConfig{};
  return io::load_run_config(path);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot open for writing: " + p.string());
  f << j.dump(2) << "\n";
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& resolved_config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json m{{"schema", kSchemaTag},
         {"command", command},
         {"config", resolved_config},
         {"inputs", inputs},
         {"outputs", outputs}};
  write_json(out_dir / "manifest.json", m);
}

bool parse_grid_flag(const std::string& text, io::GridSpec* grid) {
  // "s=LO:HI:N,theta=LO:HI:N" (either axis optional)
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) return false;
    const std::string axis = part.substr(0, eq);
    double lo, hi;
    int n;
    if (std::sscanf(part.c_str() + eq + 1, "%lf:%lf:%d", &lo, &hi, &n) != 3)
      return false;
    if (axis == "s") {
      grid->s_lo = lo;
      grid->s_hi = hi;
      grid->s_n = n;
    } else if (axis == "theta") {
      grid->theta_lo = lo;
      grid->theta_hi = hi;
      grid->theta_n = n;
    } else {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonOpts& common, const std::string& controller,
                 const std::string& gains_file,
                 std::optional<double> init_s, std::optional<double> init_theta,
                 std::optional<double> init_sdot,
                 std::optional<double> init_thetadot,
                 std::optional<double> duration, std::optional<double> v_sat,
                 std::optional<std::string> mode) {
  io::RunConfig rc = load_or_default(common.config_path);
  if (init_s) rc.initial[0] = *init_s;
  if (init_theta) rc.initial[1] = *init_theta;
  if (init_sdot) rc.initial[2] = *init_sdot;
  if (init_thetadot) rc.initial[3] = *init_thetadot;
  if (duration) rc.sim.duration = *duration;
  if (v_sat) rc.model.v_sat = (*v_sat > 0) ? std::optional<double>(*v_sat)
                                           : std::nullopt;
  if (mode) {
    if (*mode == "continuous")
      rc.sim.controller_mode = sim::ControllerMode::Continuous;
    else if (*mode == "sampled")
      rc.sim.controller_mode = sim::ControllerMode::Sampled;
    else
      throw ConfigError("--mode must be continuous or sampled");
  }

  auto model = ballbeam::BallBeamModel::create(rc.model);
  const LagrangianSystem open = model->open_loop_system();
  const ClosedLoopSpec closed = model->closed_loop_family();

  sim::SimConfig sc = rc.sim;
  sc.time_scale = model->scales().time;
  sc.motor = model->motor();
  if (!sc.divergence_bounds)
    sc.divergence_bounds =
        sim::DivergenceBounds::ballbeam_default(model->dims().s0_star);

  sim::Controller law;
  if (controller == "nonlinear") {
    law = sim::matched_controller(open, closed);
  } else if (controller == "linearized") {
    const LinearFeedback fb = model->linearize_control(open, closed);
    law = sim::linear_controller(
        fb, Eigen::Vector2d(model->dims().s0_star, 0.0));
  } else if (controller == "gains-file") {
    if (gains_file.empty())
      throw ConfigError("--controller gains-file requires --gains FILE");
    std::ifstream f(gains_file);
    if (!f) throw ConfigError("gains file not found: " + gains_file);
    json j;
    f >> j;
    LinearFeedback fb;
    fb.v = io::matrix_from_json(j.at("v"));
    fb.a = io::matrix_from_json(j.at("a"));
    fb.b = io::matrix_from_json(j.at("b"));
    law = sim::linear_controller(
        fb, Eigen::Vector2d(model->dims().s0_star, 0.0));
  } else {
    throw ConfigError(
        "--controller must be nonlinear, linearized or gains-file");
  }

  const ConfigState initial(Eigen::Vector2d(rc.initial[0], rc.initial[1]),
                            Eigen::Vector2d(rc.initial[2], rc.initial[3]));
  const sim::Trajectory traj = sim::simulate(open, closed, law, sc, initial);

  const fs::path out = resolve_out_dir(common.out_dir);
  fs::create_directories(out);
  sim::write_trajectory_csv(traj, (out / "trajectory.csv").string());
  const auto rep = sim::lyapunov_report(traj);
  json run{{"schema", kSchemaTag},
           {"status", sim::to_string(traj.status)},
           {"message", traj.message},
           {"records", traj.records.size()},
           {"controller", controller},
           {"final",
            traj.records.empty()
                ? json(nullptr)
                : json({{"t", traj.records.back().t},
                        {"s", traj.records.back().q[0]},
                        {"theta", traj.records.back().q[1]}})},
           {"lyapunov",
            {{"max_positive_increment", rep.max_positive_increment},
             {"rate_correlation", rep.rate_correlation},
             {"first_violation_index", rep.first_violation_index}}}};
  write_json(out / "run.json", run);
  write_manifest(out, "simulate", io::run_config_to_json(rc),
                 common.config_path.empty()
                     ? std::vector<std::string>{}
                     : std::vector<std::string>{common.config_path},
                 {(out / "trajectory.csv").string(),
                  (out / "run.json").string()});

  std::cout << "status: " << sim::to_string(traj.status);
  if (!traj.message.empty()) std::cout << " (" << traj.message << ")";
  if (!traj.records.empty())
    std::cout << "  final s=" << traj.records.back().q[0]
              << " theta=" << traj.records.back().q[1];
  std::cout << "\n";
  return traj.status == sim::TerminalStatus::Completed ? 0 : 2;
}

int cmd_check_matching(const CommonOpts& common, const std::string& grid_flag,
                       double tolerance, double pde_tolerance,
                       std::optional<double> perturb_h) {
  io::RunConfig rc = load_or_default(common.config_path);
  io::GridSpec grid = rc.grid;
  if (!grid_flag.empty() && !parse_grid_flag(grid_flag, &grid))
    throw ConfigError("bad --grid, expected \"s=LO:HI:N,theta=LO:HI:N\"");

  auto model = ballbeam::BallBeamModel::create(rc.model);
  const LagrangianSystem open = model->open_loop_system();
  ClosedLoopSpec closed = model->closed_loop_family();

  if (perturb_h) {
    // Sensitivity probe: substitute h inside ghat11 only, keeping the rest
    // of the assembled family fixed. A consistent h-replacement would stay
    // inside the family and leave the residuals at zero.
    const double h_new = *perturb_h;
    auto base_value = closed.metric_hat.value;
    auto frame_of = [model](const VectorXd& q) {
      return model->eval_family(q[0], q[1]);
    };
    auto h_of = [model](double y) { return model->tuning().h.value(y); };
    auto perturbed = [base_value, frame_of, h_of, h_new](const VectorXd& q) {
      MatrixXd g = base_value(q);
      const auto f = frame_of(q);
      g(0, 0) += f.psi * f.psi * (h_new - h_of(f.y));
      return g;
    };
    closed.metric_hat = MetricField::with_fd(perturbed);
  }

  std::vector<ResidualRecord> records;
  MatchingResidual::Norms worst;
  double worst_lambda = 0.0, worst_transport = 0.0;
  int failures = 0;
  const Eigen::Vector2d qdot(0.37, -0.21);
  for (int i = 0; i < grid.s_n; ++i) {
    for (int j = 0; j < grid.theta_n; ++j) {
      const double s =
          grid.s_lo + (grid.s_hi - grid.s_lo) * i / std::max(grid.s_n - 1, 1);
      const double th = grid.theta_lo + (grid.theta_hi - grid.theta_lo) * j /
                                            std::max(grid.theta_n - 1, 1);
      const Eigen::Vector2d q(s, th);
      try {
        const MatchingResidual r = matching_residuals(open, closed, q, qdot);
        const LambdaPdeResiduals p = lambda_pde_residuals(open, closed, q);
        worst.geodesic = std::max(worst.geodesic, r.norms.geodesic);
        worst.dissipative = std::max(worst.dissipative, r.norms.dissipative);
        worst.potential = std::max(worst.potential, r.norms.potential);
        worst_lambda = std::max(worst_lambda, p.lambda_norm);
        worst_transport = std::max(worst_transport, p.transport_norm);
        ResidualRecord rec;
        rec.q = q;
        rec.qdot = qdot;
        rec.geodesic_norm = r.norms.geodesic;
        rec.dissipative_norm = r.norms.dissipative;
        rec.potential_norm = r.norms.potential;
        records.push_back(std::move(rec));
      } catch (const std::exception& e) {
        ++failures;  // singular point: reported, sweep continues
        std::cerr << "point (" << s << ", " << th << "): " << e.what() << "\n";
      }
    }
  }

  const bool pass = worst.max() <= tolerance &&
                    std::max(worst_lambda, worst_transport) <= pde_tolerance &&
                    failures == 0;
  const fs::path out = resolve_out_dir(common.out_dir);
  fs::create_directories(out);
  json report{{"schema", kSchemaTag},
              {"tolerance", tolerance},
              {"pde_tolerance", pde_tolerance},
              {"grid",
               {{"s", {grid.s_lo, grid.s_hi, grid.s_n}},
                {"theta", {grid.theta_lo, grid.theta_hi, grid.theta_n}}}},
              {"max",
               {{"geodesic", worst.geodesic},
                {"dissipative", worst.dissipative},
                {"potential", worst.potential},
                {"lambda_system", worst_lambda},
                {"metric_transport", worst_transport}}},
              {"singular_points", failures},
              {"pass", pass},
              {"points", records}};
  if (perturb_h) report["perturb_h"] = *perturb_h;
  write_json(out / "matching_report.json", report);
  write_manifest(out, "check-matching", io::run_config_to_json(rc),
                 common.config_path.empty()
                     ? std::vector<std::string>{}
                     : std::vector<std::string>{common.config_path},
                 {(out / "matching_report.json").string()});

  std::cout << "max residuals: geodesic=" << worst.geodesic
            << " dissipative=" << worst.dissipative
            << " potential=" << worst.potential
            << " lambda=" << worst_lambda << " transport=" << worst_transport
            << "  -> " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 2;
}

int cmd_linear_demo(const CommonOpts& common, int n, uint64_t seed) {
  if (n < 1 || n > 6) throw ConfigError("--n must lie in [1, 6]");
  const int n_u = std::max(1, (n + 1) / 2);
  const LinearInstance inst = make_random_admissible_instance(n, n_u, seed);
  const ConstantClosedLoop cl = theorem2_match(inst.sys, inst.fb);
  const double defect = constant_matching_defect(inst.sys, cl);

  // Round trip: the matched control of the constructed closed loop must
  // reproduce the feedback gains.
  const LagrangianSystem open = to_lagrangian(inst.sys);
  const ClosedLoopSpec closed = to_closed_loop(inst.sys, cl);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double roundtrip = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd q(n), qd(n);
    for (int i = 0; i < n; ++i) {
      q[i] = uni(rng);
      qd[i] = uni(rng);
    }
    const VectorXd u = control_law(open, closed, ConfigState(q, qd));
    const VectorXd u_fb = inst.fb.v + inst.fb.a * q + inst.fb.b * qd;
    roundtrip = std::max(roundtrip, (u - u_fb).cwiseAbs().maxCoeff());
  }

  const bool pass = defect <= 1e-9 && roundtrip <= 1e-9;
  const fs::path out = resolve_out_dir(common.out_dir);
  fs::create_directories(out);
  json report{{"schema", kSchemaTag},
              {"n", n},
              {"n_u", n_u},
              {"seed", seed},
              {"g", io::matrix_to_json(inst.sys.g)},
              {"g_hat", io::matrix_to_json(cl.g_hat)},
              {"V2_hat", io::matrix_to_json(cl.V2_hat)},
              {"C2_hat", io::matrix_to_json(cl.C2_hat)},
              {"g_hat_positive_definite", cl.g_hat_positive_definite},
              {"constant_matching_defect", defect},
              {"roundtrip_gain_error", roundtrip},
              {"pass", pass}};
  write_json(out / "linear_demo.json", report);
  write_manifest(out, "linear-demo", json{{"n", n}, {"seed", seed}}, {},
                 {(out / "linear_demo.json").string()});
  std::cout << "n=" << n << " seed=" << seed << " defect=" << defect
            << " roundtrip=" << roundtrip << "  -> "
            << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 2;
}

int cmd_lemma1(const CommonOpts& common, int n, uint64_t seed,
               const std::string& matrix_file) {
  MatrixXd R;
  if (!matrix_file.empty()) {
    std::ifstream f(matrix_file);
    if (!f) throw ConfigError("matrix file not found: " + matrix_file);
    json j;
    f >> j;
    R = io::matrix_from_json(j);
  } else {
    if (n < 1 || n > 6) throw ConfigError("--n must lie in [1, 6]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    R.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = uni(rng);
  }
  const Lemma1Result res = lemma1_solve(R);
  const fs::path out = resolve_out_dir(common.out_dir);
  fs::create_directories(out);
  json report{{"schema", kSchemaTag},
              {"R", io::matrix_to_json(R)},
              {"X", io::matrix_to_json(res.X)},
              {"solution_space_dim", res.solution_space_dim},
              {"residual", res.residual},
              {"sigma_ratio", res.sigma_ratio}};
  write_json(out / "lemma1.json", report);
  write_manifest(out, "lemma1", json{{"n", R.rows()}, {"seed", seed}},
                 matrix_file.empty() ? std::vector<std::string>{}
                                     : std::vector<std::string>{matrix_file},
                 {(out / "lemma1.json").string()});
  std::cout << "dim=" << res.solution_space_dim << " residual=" << res.residual
            << " sigma_ratio=" << res.sigma_ratio << "\n";
  return 0;
}

int cmd_params(const CommonOpts& common) {
  io::RunConfig rc = load_or_default(common.config_path);
  const ballbeam::PhysicalParams& phys = rc.model.physical;
  const ballbeam::RescaleResult r = ballbeam::rescale_params(phys);
  const ballbeam::DimensionlessParams printed =
      rc.model.dimensionless_overrides
          ? *rc.model.dimensionless_overrides
          : ballbeam::DimensionlessParams::experiment();

  const auto row = [](double derived, double active) {
    const double rel =
        std::abs(derived - active) / std::max(std::abs(active), 1e-30);
    return json{{"derived", derived}, {"active", active},
                {"rel_discrepancy", rel}, {"flagged", rel > 1e-3}};
  };
  json report{
      {"schema", kSchemaTag},
      {"a1", row(r.dims.a1, printed.a1)},
      {"a2", row(r.dims.a2, printed.a2)},
      {"a3", row(r.dims.a3, printed.a3)},
      {"a4", row(r.dims.a4, printed.a4)},
      {"a5", row(r.dims.a5, printed.a5)},
      {"a6", row(r.dims.a6, printed.a6)},
      {"a7", row(r.dims.a7, printed.a7)},
      {"s0_star", row(r.dims.s0_star, printed.s0_star)},
      {"unit_scales",
       {{"length_m", r.scales.length},
        {"time_s", r.scales.time},
        {"energy_J", r.scales.energy}}},
      {"ball_inertia_rel_defect", phys.ball_inertia_defect()}};
  const fs::path out = resolve_out_dir(common.out_dir);
  fs::create_directories(out);
  write_json(out / "params.json", report);
  write_manifest(out, "params", io::run_config_to_json(rc),
                 common.config_path.empty()
                     ? std::vector<std::string>{}
                     : std::vector<std::string>{common.config_path},
                 {(out / "params.json").string()});
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lambda-method matching control toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string controller = "nonlinear";
  std::string gains_file;
  std::optional<double> init_s, init_theta, init_sdot, init_thetadot;
  std::optional<double> duration, v_sat;
  std::optional<std::string> mode;
  std::string grid_flag;
  double tolerance = 1e-6, pde_tolerance = 1e-5;
  std::optional<double> perturb_h;
  int n = 2;
  uint64_t seed = 1;
  std::string matrix_file;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--out", common.out_dir,
                    "output directory (default: $MATCHCTL_OUT or .)");
  };

  CLI::App* sim_cmd = app.add_subcommand("simulate", "run a closed-loop simulation");
  add_common(sim_cmd);
  sim_cmd->add_option("--controller", controller,
                      "nonlinear | linearized | gains-file");
  sim_cmd->add_option("--gains", gains_file, "gains JSON for gains-file mode");
  sim_cmd->add_option("--initial-s", init_s, "initial s (dimensionless)");
  sim_cmd->add_option("--initial-theta", init_theta, "initial theta [rad]");
  sim_cmd->add_option("--initial-sdot", init_sdot, "initial s-dot");
  sim_cmd->add_option("--initial-thetadot", init_thetadot, "initial theta-dot");
  sim_cmd->add_option("--duration", duration, "dimensionless duration");
  sim_cmd->add_option("--v-sat", v_sat, "voltage limit; 0 disables clamping");
  sim_cmd->add_option("--mode", mode, "continuous | sampled");

  CLI::App* chk = app.add_subcommand("check-matching",
                                     "sweep matching residuals over a grid");
  add_common(chk);
  chk->add_option("--grid", grid_flag, "\"s=LO:HI:N,theta=LO:HI:N\"");
  chk->add_option("--tolerance", tolerance, "residual tolerance");
  chk->add_option("--pde-tolerance", pde_tolerance,
                  "lambda-system residual tolerance");
  chk->add_option("--perturb-h", perturb_h,
                  "substitute h inside ghat11 post-assembly (sensitivity)");

  CLI::App* lin = app.add_subcommand(
      "linear-demo", "random constant-coefficient construction + round trip");
  add_common(lin);
  lin->add_option("--n", n, "state dimension (1..6)");
  lin->add_option("--seed", seed, "RNG seed");

  CLI::App* lem = app.add_subcommand("lemma1",
                                     "solve R X - X^T R^T = 0 for symmetric X");
  add_common(lem);
  lem->add_option("--n", n, "dimension for a random R");
  lem->add_option("--seed", seed, "RNG seed");
  lem->add_option("--matrix", matrix_file, "JSON matrix file for R");

  CLI::App* par = app.add_subcommand(
      "params", "derived vs active dimensionless parameters");
  add_common(par);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed())
      return cmd_simulate(common, controller, gains_file, init_s, init_theta,
                          init_sdot, init_thetadot, duration, v_sat, mode);
    if (chk->parsed())
      return cmd_check_matching(common, grid_flag, tolerance, pde_tolerance,
                                perturb_h);
    if (lin->parsed()) return cmd_linear_demo(common, n, seed);
    if (lem->parsed()) return cmd_lemma1(common, n, seed, matrix_file);
    if (par->parsed()) return cmd_params(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
