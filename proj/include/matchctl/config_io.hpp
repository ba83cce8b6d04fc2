#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "matchctl/ballbeam.hpp"
#include "matchctl/sim.hpp"

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

namespace matchctl::io {

using nlohmann::json;

/// Grid sweep request, e.g. s in [5, 38] x theta in [-0.4, 0.4], 21 x 21.
struct GridSpec {
  double s_lo = 5.0, s_hi = 38.0;
  int s_n = 21;
  double theta_lo = -0.4, theta_hi = 0.4;
  int theta_n = 21;
};

/// Everything one run needs: model + sim + grid sections.
struct RunConfig {
  ballbeam::BallBeamConfig model;
  sim::SimConfig sim;
  GridSpec grid;
  Eigen::Vector4d initial{18.0, 0.0, 0.0, 0.0};  // (s, theta, sdot, thetadot)
};

namespace detail {

template <class T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void require_known_keys(const json& j,
                               std::initializer_list<const char*> known,
                               const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown key \"" + it.key() + "\" in section " +
                        section);
  }
}

}  // namespace detail

inline ballbeam::PhysicalParams physical_from_json(const json& j) {
  detail::require_known_keys(
      j,
      {"l_b", "l_l", "r_g", "r_B", "m_B", "m_b", "m_l", "I_B", "I_b", "I_s",
       "grav", "s0", "c0", "R_m", "N_g", "K_m"},
      "physical");
  ballbeam::PhysicalParams p = ballbeam::PhysicalParams::bench();
  detail::maybe_get(j, "l_b", p.l_b);
  detail::maybe_get(j, "l_l", p.l_l);
  detail::maybe_get(j, "r_g", p.r_g);
  detail::maybe_get(j, "r_B", p.r_B);
  detail::maybe_get(j, "m_B", p.m_B);
  detail::maybe_get(j, "m_b", p.m_b);
  detail::maybe_get(j, "m_l", p.m_l);
  detail::maybe_get(j, "I_B", p.I_B);
  detail::maybe_get(j, "I_b", p.I_b);
  detail::maybe_get(j, "I_s", p.I_s);
  detail::maybe_get(j, "grav", p.grav);
  detail::maybe_get(j, "s0", p.s0);
  detail::maybe_get(j, "c0", p.c0);
  detail::maybe_get(j, "R_m", p.R_m);
  detail::maybe_get(j, "N_g", p.N_g);
  detail::maybe_get(j, "K_m", p.K_m);
  return p;
}

inline json physical_to_json(const ballbeam::PhysicalParams& p) {
  return json{{"l_b", p.l_b}, {"l_l", p.l_l}, {"r_g", p.r_g}, {"r_B", p.r_B},
              {"m_B", p.m_B}, {"m_b", p.m_b}, {"m_l", p.m_l}, {"I_B", p.I_B},
              {"I_b", p.I_b}, {"I_s", p.I_s}, {"grav", p.grav}, {"s0", p.s0},
              {"c0", p.c0},   {"R_m", p.R_m}, {"N_g", p.N_g}, {"K_m", p.K_m}};
}

inline ballbeam::DimensionlessParams dimensionless_from_json(const json& j) {
  detail::require_known_keys(
      j, {"a1", "a2", "a3", "a4", "a5", "a6", "a7", "s0_star"},
      "dimensionless_overrides");
  ballbeam::DimensionlessParams d = ballbeam::DimensionlessParams::experiment();
  detail::maybe_get(j, "a1", d.a1);
  detail::maybe_get(j, "a2", d.a2);
  detail::maybe_get(j, "a3", d.a3);
  detail::maybe_get(j, "a4", d.a4);
  detail::maybe_get(j, "a5", d.a5);
  detail::maybe_get(j, "a6", d.a6);
  detail::maybe_get(j, "a7", d.a7);
  detail::maybe_get(j, "s0_star", d.s0_star);
  return d;
}

inline json dimensionless_to_json(const ballbeam::DimensionlessParams& d) {
  return json{{"a1", d.a1}, {"a2", d.a2}, {"a3", d.a3},
              {"a4", d.a4}, {"a5", d.a5}, {"a6", d.a6},
              {"a7", d.a7}, {"s0_star", d.s0_star}};
}

inline ballbeam::TuningFunctions tuning_from_json(const json& j) {
  detail::require_known_keys(j, {"mu1", "h", "w", "c2_hat", "psi"}, "tuning");
  ballbeam::TuningFunctions t = ballbeam::default_tuning();
  if (j.contains("mu1")) {
    const json& m = j.at("mu1");
    const std::string type = m.value("type", "exp_sin");
    if (type == "exp_sin") {
      t.mu1.kind = ballbeam::Mu1::Kind::ExpSin;
      detail::maybe_get(m, "c", t.mu1.c);
      detail::maybe_get(m, "k", t.mu1.k);
    } else if (type == "affine") {
      t.mu1.kind = ballbeam::Mu1::Kind::Affine;
      detail::maybe_get(m, "c0", t.mu1.c0);
      detail::maybe_get(m, "c1", t.mu1.c1);
    } else {
      throw ConfigError("tuning.mu1.type must be exp_sin or affine");
    }
  }
  if (j.contains("h")) t.h.coeffs = j.at("h").at("coeffs").get<std::vector<double>>();
  if (j.contains("w")) t.w.coeffs = j.at("w").at("coeffs").get<std::vector<double>>();
  if (j.contains("c2_hat")) {
    const std::string type = j.at("c2_hat").value("type", "paper_default");
    if (type == "paper_default") {
      t.c2_hat.kind = ballbeam::C2HatChoice::Kind::PaperDefault;
    } else if (type == "linear_damping") {
      t.c2_hat.kind = ballbeam::C2HatChoice::Kind::LinearDamping;
      detail::maybe_get(j.at("c2_hat"), "c", t.c2_hat.c);
    } else {
      throw ConfigError("tuning.c2_hat.type must be paper_default or linear_damping");
    }
  }
  if (j.contains("psi")) {
    const std::string type = j.at("psi").value("type", "auto");
    if (type == "auto") {
      t.psi.mode = ballbeam::PsiChoice::Mode::Auto;
    } else if (type == "candidate") {
      t.psi.mode = ballbeam::PsiChoice::Mode::Candidate;
    } else if (type == "ode") {
      t.psi.mode = ballbeam::PsiChoice::Mode::OdeDerived;
    } else if (type == "exponent") {
      t.psi.mode = ballbeam::PsiChoice::Mode::Exponent;
      detail::maybe_get(j.at("psi"), "coef", t.psi.exponent);
    } else {
      throw ConfigError("tuning.psi.type must be auto, candidate, ode or exponent");
    }
  }
  return t;
}

inline json tuning_to_json(const ballbeam::TuningFunctions& t) {
  json j;
  if (t.mu1.kind == ballbeam::Mu1::Kind::ExpSin)
    j["mu1"] = {{"type", "exp_sin"}, {"c", t.mu1.c}, {"k", t.mu1.k}};
  else
    j["mu1"] = {{"type", "affine"}, {"c0", t.mu1.c0}, {"c1", t.mu1.c1}};
  j["h"] = {{"coeffs", t.h.coeffs}};
  j["w"] = {{"coeffs", t.w.coeffs}};
  if (t.c2_hat.kind == ballbeam::C2HatChoice::Kind::PaperDefault)
    j["c2_hat"] = {{"type", "paper_default"}};
  else
    j["c2_hat"] = {{"type", "linear_damping"}, {"c", t.c2_hat.c}};
  switch (t.psi.mode) {
    case ballbeam::PsiChoice::Mode::Auto:
      j["psi"] = {{"type", "auto"}};
      break;
    case ballbeam::PsiChoice::Mode::Candidate:
      j["psi"] = {{"type", "candidate"}};
      break;
    case ballbeam::PsiChoice::Mode::OdeDerived:
      j["psi"] = {{"type", "ode"}};
      break;
    case ballbeam::PsiChoice::Mode::Exponent:
      j["psi"] = {{"type", "exponent"}, {"coef", t.psi.exponent}};
      break;
  }
  return j;
}

inline sim::SimConfig sim_from_json(const json& j) {
  detail::require_known_keys(
      j,
      {"dt", "duration", "controller_mode", "sample_rate_hz",
       "velocity_estimator", "record_stride", "divergence_bounds"},
      "sim");
  sim::SimConfig c;
  detail::maybe_get(j, "dt", c.dt);
  detail::maybe_get(j, "duration", c.duration);
  if (j.contains("controller_mode")) {
    const std::string m = j.at("controller_mode").get<std::string>();
    if (m == "continuous")
      c.controller_mode = sim::ControllerMode::Continuous;
    else if (m == "sampled")
      c.controller_mode = sim::ControllerMode::Sampled;
    else
      throw ConfigError("sim.controller_mode must be continuous or sampled");
  }
  detail::maybe_get(j, "sample_rate_hz", c.sample_rate_hz);
  if (j.contains("velocity_estimator")) {
    const std::string e = j.at("velocity_estimator").get<std::string>();
    if (e == "exact")
      c.velocity_estimator = sim::VelocityEstimator::Exact;
    else if (e == "forward-difference")
      c.velocity_estimator = sim::VelocityEstimator::ForwardDifference;
    else
      throw ConfigError(
          "sim.velocity_estimator must be exact or forward-difference");
  }
  detail::maybe_get(j, "record_stride", c.record_stride);
  if (j.contains("divergence_bounds")) {
    const json& b = j.at("divergence_bounds");
    sim::DivergenceBounds db;
    const auto vec = [](const json& arr) {
      const auto v = arr.get<std::vector<double>>();
      return Eigen::Map<const VectorXd>(v.data(),
                                        static_cast<Eigen::Index>(v.size()))
          .eval();
    };
    db.q_lo = vec(b.at("q_lo"));
    db.q_hi = vec(b.at("q_hi"));
    db.qd_lo = vec(b.at("qd_lo"));
    db.qd_hi = vec(b.at("qd_hi"));
    c.divergence_bounds = db;
  }
  return c;
}

inline json sim_to_json(const sim::SimConfig& c) {
  json j{{"dt", c.dt},
         {"duration", c.duration},
         {"controller_mode",
          c.controller_mode == sim::ControllerMode::Continuous ? "continuous"
                                                               : "sampled"},
         {"sample_rate_hz", c.sample_rate_hz},
         {"velocity_estimator",
          c.velocity_estimator == sim::VelocityEstimator::Exact
              ? "exact"
              : "forward-difference"},
         {"record_stride", c.record_stride}};
  if (c.divergence_bounds) {
    const auto vec = [](const VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    j["divergence_bounds"] = {{"q_lo", vec(c.divergence_bounds->q_lo)},
                              {"q_hi", vec(c.divergence_bounds->q_hi)},
                              {"qd_lo", vec(c.divergence_bounds->qd_lo)},
                              {"qd_hi", vec(c.divergence_bounds->qd_hi)}};
  }
  return j;
}

inline GridSpec grid_from_json(const json& j) {
  detail::require_known_keys(j, {"s", "theta"}, "grid");
  GridSpec g;
  if (j.contains("s")) {
    const auto v = j.at("s").get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("grid.s must be [lo, hi, n]");
    g.s_lo = v[0];
    g.s_hi = v[1];
    g.s_n = static_cast<int>(v[2]);
  }
  if (j.contains("theta")) {
    const auto v = j.at("theta").get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("grid.theta must be [lo, hi, n]");
    g.theta_lo = v[0];
    g.theta_hi = v[1];
    g.theta_n = static_cast<int>(v[2]);
  }
  return g;
}

inline RunConfig run_config_from_json(const json& j) {
  detail::require_known_keys(
      j,
      {"physical", "dimensionless_overrides", "tuning", "domain",
       "theta_working_interval", "v_sat", "sim", "grid", "initial"},
      "(top level)");
  RunConfig rc;
  if (j.contains("physical"))
    rc.model.physical = physical_from_json(j.at("physical"));
  if (j.contains("dimensionless_overrides")) {
    if (j.at("dimensionless_overrides").is_null())
      rc.model.dimensionless_overrides = std::nullopt;
    else
      rc.model.dimensionless_overrides =
          dimensionless_from_json(j.at("dimensionless_overrides"));
  }
  if (j.contains("tuning")) rc.model.tuning = tuning_from_json(j.at("tuning"));
  if (j.contains("domain")) {
    const json& d = j.at("domain");
    detail::require_known_keys(d, {"s", "theta"}, "domain");
    if (d.contains("s")) {
      const auto v = d.at("s").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("domain.s must be [lo, hi]");
      rc.model.s_min = v[0];
      rc.model.s_max = v[1];
    }
    if (d.contains("theta")) {
      const auto v = d.at("theta").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("domain.theta must be [lo, hi]");
      rc.model.theta_min = v[0];
      rc.model.theta_max = v[1];
    }
  }
  if (j.contains("theta_working_interval")) {
    const auto v = j.at("theta_working_interval").get<std::vector<double>>();
    if (v.size() != 2 || v[0] != -v[1])
      throw ConfigError("theta_working_interval must be [-w, w]");
    rc.model.theta_working = v[1];
  }
  if (j.contains("v_sat")) {
    if (j.at("v_sat").is_null())
      rc.model.v_sat = std::nullopt;
    else
      rc.model.v_sat = j.at("v_sat").get<double>();
  }
  if (j.contains("sim")) rc.sim = sim_from_json(j.at("sim"));
  if (j.contains("grid")) rc.grid = grid_from_json(j.at("grid"));
  if (j.contains("initial")) {
    const auto v = j.at("initial").get<std::vector<double>>();
    if (v.size() != 4)
      throw ConfigError("initial must be [s, theta, s_dot, theta_dot]");
    rc.initial = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }
  return rc;
}

inline json run_config_to_json(const RunConfig& rc) {
  json j;
  j["physical"] = physical_to_json(rc.model.physical);
  if (rc.model.dimensionless_overrides)
    j["dimensionless_overrides"] =
        dimensionless_to_json(*rc.model.dimensionless_overrides);
  else
    j["dimensionless_overrides"] = nullptr;
  j["tuning"] = tuning_to_json(rc.model.tuning);
  j["domain"] = {{"s", {rc.model.s_min, rc.model.s_max}},
                 {"theta", {rc.model.theta_min, rc.model.theta_max}}};
  j["theta_working_interval"] = {-rc.model.theta_working,
                                 rc.model.theta_working};
  if (rc.model.v_sat)
    j["v_sat"] = *rc.model.v_sat;
  else
    j["v_sat"] = nullptr;
  j["sim"] = sim_to_json(rc.sim);
  j["grid"] = {{"s", {rc.grid.s_lo, rc.grid.s_hi, double(rc.grid.s_n)}},
               {"theta",
                {rc.grid.theta_lo, rc.grid.theta_hi, double(rc.grid.theta_n)}}};
  j["initial"] = {rc.initial[0], rc.initial[1], rc.initial[2], rc.initial[3]};
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config file not found: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return run_config_from_json(j);
}

/// Matrix as {"rows", "cols", "data"} with row-major data.
inline json matrix_to_json(const MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("matrix_from_json: data size mismatch");
  MatrixXd m(rows, cols);
  size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[k++];
  return m;
}

}  // namespace matchctl::io
