#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "scm/equilibrium.hpp"
#include "scm/mc_sim.hpp"
#include "scm/verify.hpp"

namespace scm::io {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

/// Round-trip decimal representation.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---------------------------------------------------------------------------
// Equilibrium

inline constexpr const char* kBranchCsvHeader = "branch,alpha,R,S,C,eps_g,beta_f,min_eig,label";

inline void write_branches_csv(std::ostream& os, const std::vector<EquilibriumBranch>& branches) {
  os << kBranchCsvHeader << '\n';
  for (const auto& b : branches)
    for (const auto& p : b.points)
      os << b.id << ',' << fmt(p.alpha) << ',' << fmt(p.state.R) << ',' << fmt(p.state.S) << ',' << fmt(p.state.C)
         << ',' << fmt(p.eps_g) << ',' << fmt(p.beta_f) << ',' << fmt(p.min_eig) << ',' << to_string(p.label) << '\n';
}

inline json to_json(const SiteSymmetricState& s) { return {{"K", s.K}, {"R", s.R}, {"S", s.S}, {"C", s.C}}; }

inline json to_json(const EquilibriumBranch& b) {
  json pts = json::array();
  for (const auto& p : b.points)
    pts.push_back({{"alpha", p.alpha},
                   {"R", p.state.R},
                   {"S", p.state.S},
                   {"C", p.state.C},
                   {"eps_g", p.eps_g},
                   {"beta_f", p.beta_f},
                   {"min_eig", p.min_eig},
                   {"label", to_string(p.label)}});
  return {{"branch", b.id}, {"activation", to_string(b.activation)}, {"K", b.K}, {"points", pts}};
}

/// Branch rows of the K -> infinity mode. S is reported as K S and beta_f
/// per hidden unit; C vanishes at this order.
struct LimitRow {
  int branch = 0;
  large_k::LimitPoint point;
};

inline void write_limit_csv(std::ostream& os, const std::vector<LimitRow>& rows) {
  os << kBranchCsvHeader << '\n';
  for (const auto& r : rows) {
    const auto& p = r.point;
    os << r.branch << ',' << fmt(p.alpha) << ',' << fmt(p.R) << ',' << fmt(p.scaled_S()) << ',' << fmt(0.0) << ','
       << fmt(p.eps_g) << ',' << fmt(p.beta_f) << ',' << fmt(p.curvature) << ',' << to_string(p.label) << '\n';
  }
}

inline json to_json(const PhaseSummary& p) {
  return {{"activation", to_string(p.activation)},
          {"K", p.K ? json(*p.K) : json("inf")},
          {"alpha_s", optional_json(p.alpha_s)},
          {"alpha_c", p.alpha_c},
          {"alpha_d", optional_json(p.alpha_d)},
          {"transition_order", to_string(p.transition_order)}};
}

// ---------------------------------------------------------------------------
// Monte Carlo

inline json to_json(const mc::McConfig& c) {
  return {{"N", c.N},
          {"K", c.K},
          {"M", c.M},
          {"activation", to_string(c.activation)},
          {"beta", c.beta},
          {"alpha_tilde", c.alpha_tilde},
          {"mcs_total", c.mcs_total},
          {"measure_window", c.measure_window},
          {"runs", c.runs},
          {"seed", c.seed},
          {"init_bias", to_string(c.init_bias)},
          {"init_magnitude", c.init_magnitude},
          {"step_sigma", c.step_sigma},
          {"target_acceptance", c.target_acceptance},
          {"record_every", c.record_every},
          {"burn_in_fraction", c.burn_in_fraction},
          {"adapt_interval", c.adapt_interval}};
}

/// Overlays the fields present in j onto c. Unknown keys are rejected.
inline void update_from_json(mc::McConfig& c, const json& j) {
  for (const auto& [key, v] : j.items()) {
    if (key == "N") c.N = v.get<int>();
    else if (key == "K") c.K = v.get<int>();
    else if (key == "M") c.M = v.get<int>();
    else if (key == "activation") {
      const auto a = parse_activation(v.get<std::string>());
      if (!a) throw std::invalid_argument("unknown activation '" + v.get<std::string>() + "'");
      c.activation = *a;
    } else if (key == "beta") c.beta = v.get<double>();
    else if (key == "alpha_tilde") c.alpha_tilde = v.get<double>();
    else if (key == "mcs_total") c.mcs_total = v.get<int>();
    else if (key == "measure_window") c.measure_window = v.get<int>();
    else if (key == "runs") c.runs = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "init_bias") {
      const auto b = mc::parse_init_bias(v.get<std::string>());
      if (!b) throw std::invalid_argument("unknown init_bias '" + v.get<std::string>() + "'");
      c.init_bias = *b;
    } else if (key == "init_magnitude") c.init_magnitude = v.get<double>();
    else if (key == "step_sigma") c.step_sigma = v.get<double>();
    else if (key == "target_acceptance") c.target_acceptance = v.get<double>();
    else if (key == "record_every") c.record_every = v.get<int>();
    else if (key == "burn_in_fraction") c.burn_in_fraction = v.get<double>();
    else if (key == "adapt_interval") c.adapt_interval = v.get<int>();
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

inline constexpr const char* kSeriesCsvHeader = "run,step,E_over_P,eps_g,acceptance,sigma";

inline void write_series_csv(std::ostream& os, const mc::McObservables& o) {
  os << kSeriesCsvHeader << '\n';
  for (std::size_t r = 0; r < o.runs.size(); ++r) {
    const auto& t = o.runs[r];
    for (std::size_t i = 0; i < t.step.size(); ++i)
      os << r << ',' << t.step[i] << ',' << fmt(t.e_over_p[i]) << ',' << fmt(t.eps_g[i]) << ','
         << fmt(t.acceptance[i]) << ',' << fmt(t.sigma[i]) << '\n';
  }
}

inline json series_json(const mc::McObservables& o) {
  json runs = json::array();
  for (const auto& t : o.runs)
    runs.push_back({{"step", t.step},
                    {"E_over_P", t.e_over_p},
                    {"eps_g", t.eps_g},
                    {"acceptance", t.acceptance},
                    {"sigma", t.sigma}});
  return runs;
}

inline json to_json(const mc::WindowStats& s) {
  return {{"mean", s.mean}, {"std_dev", s.std_dev}, {"std_error", s.std_error}};
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline json summary_json(const mc::McObservables& o) {
  json runs = json::array();
  for (const auto& t : o.runs)
    runs.push_back({{"window_eps_g", t.window_eps_g},
                    {"window_E_over_P", t.window_e_over_p},
                    {"window_acceptance", t.window_acceptance},
                    {"final_Q", matrix_json(t.final_overlaps.Q)},
                    {"final_R", matrix_json(t.final_overlaps.R)}});
  return {{"config", to_json(o.config)},
          {"P", o.config.P()},
          {"eps_g", to_json(o.eps_g)},
          {"E_over_P", to_json(o.e_over_p)},
          {"acceptance", to_json(o.acceptance)},
          {"histogram", {{"edges", o.histogram.edges}, {"mass", o.histogram.mass}}},
          {"negative_mass", o.histogram.negative_mass()},
          {"runs", runs}};
}

// ---------------------------------------------------------------------------
// Verification

inline json to_json(const verify::Report& r) {
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"scope", c.scope},
                      {"name", c.name},
                      {"passed", c.passed},
                      {"value", c.value},
                      {"tolerance", c.tolerance},
                      {"detail", c.detail}});
  return {{"passed", r.passed()}, {"failures", r.failures()}, {"checks", checks}};
}

// ---------------------------------------------------------------------------
// Manifests

struct RunManifest {
  std::string command;
  json config;  // fully resolved options
  std::vector<std::uint64_t> seeds;
  std::string version = kVersion;
  std::vector<std::string> outputs;  // relative to the manifest directory
  double wall_seconds = 0.0;
};

inline json to_json(const RunManifest& m) {
  return {{"command", m.command},   {"config", m.config},     {"seeds", m.seeds},
          {"version", m.version},   {"outputs", m.outputs},   {"wall_seconds", m.wall_seconds}};
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.version = j.at("version").get<std::string>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  return m;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace scm::io
