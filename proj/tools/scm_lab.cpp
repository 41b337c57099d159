#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scm/scm.hpp"

namespace fs = std::filesystem;
using scm::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Outcome {
  int status = kExitOk;
  std::vector<std::string> outputs;
  std::vector<std::uint64_t> seeds;
};

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

scm::Activation activation_or_throw(const std::string& name) {
  const auto a = scm::parse_activation(name);
  if (!a) throw UsageError("unknown activation '" + name + "' (expected erf or relu)");
  return *a;
}

// ---------------------------------------------------------------------------
// curve

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  int points = 0;
  bool log = false;
};

GridSpec parse_grid(const std::string& spec, bool log) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw UsageError("--alpha expects min:max:points");
  GridSpec g;
  try {
    g.lo = std::stod(parts[0]);
    g.hi = std::stod(parts[1]);
    g.points = std::stoi(parts[2]);
  } catch (const std::exception&) {
    throw UsageError("--alpha: cannot parse '" + spec + "'");
  }
  g.log = log;
  if (!(g.lo > 0.0 || (!log && g.lo >= 0.0)) || !(g.hi > g.lo) || g.points < 2)
    throw UsageError("--alpha: need 0 <= min < max (min > 0 with --log) and points >= 2");
  return g;
}

std::vector<double> make_grid(const GridSpec& g) {
  std::vector<double> v(g.points);
  for (int i = 0; i < g.points; ++i) {
    const double t = static_cast<double>(i) / (g.points - 1);
    v[i] = g.log ? std::exp(std::log(g.lo) + t * (std::log(g.hi) - std::log(g.lo))) : g.lo + t * (g.hi - g.lo);
  }
  return v;
}

// Ten times the base density within +-5% of each located alpha.
std::vector<double> densify(std::vector<double> grid, const GridSpec& g, const std::vector<double>& located) {
  for (double a : located) {
    if (!(a > g.lo && a < g.hi)) continue;
    const double from = std::max(g.lo, 0.95 * a), to = std::min(g.hi, 1.05 * a);
    if (g.log) {
      const double step = (std::log(g.hi) - std::log(g.lo)) / (g.points - 1) / 10.0;
      for (double x = std::log(from); x <= std::log(to); x += step) grid.push_back(std::exp(x));
    } else {
      const double step = (g.hi - g.lo) / (g.points - 1) / 10.0;
      for (double x = from; x <= to; x += step) grid.push_back(x);
    }
  }
  std::sort(grid.begin(), grid.end());
  std::vector<double> out;
  for (double x : grid)
    if (out.empty() || x - out.back() > 1e-9 * std::max(1.0, x)) out.push_back(x);
  return out;
}

Outcome curve_large_k(scm::Activation a, const GridSpec& g, const std::string& format, const fs::path& dir,
                      const std::string& stem) {
  const scm::PhaseSummary p = scm::large_k::summary(a);
  std::vector<double> located = {p.alpha_c};
  if (p.alpha_s) located.push_back(*p.alpha_s);
  const auto grid = densify(make_grid(g), g, located);
  std::vector<scm::io::LimitRow> rows;
  for (double alpha : grid)
    for (const auto& m : scm::large_k::minima(a, alpha)) rows.push_back({static_cast<int>(m.label), m});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.branch < y.branch; });

  Outcome out;
  const std::string data = stem + (format == "json" ? ".json" : ".csv");
  if (format == "json") {
    json j = json::array();
    for (const auto& r : rows)
      j.push_back({{"branch", r.branch},
                   {"alpha", r.point.alpha},
                   {"R", r.point.R},
                   {"S", r.point.scaled_S()},
                   {"C", 0.0},
                   {"eps_g", r.point.eps_g},
                   {"beta_f", r.point.beta_f},
                   {"min_eig", r.point.curvature},
                   {"label", scm::to_string(r.point.label)}});
    scm::io::write_json((dir / data).string(), {{"scaling", "S is K*S, beta_f per hidden unit"}, {"points", j}});
  } else {
    std::ostringstream os;
    scm::io::write_limit_csv(os, rows);
    scm::io::write_text((dir / data).string(), os.str());
  }
  json summary = scm::io::to_json(p);
  if (a == scm::Activation::ReLU) summary["plateau_eps_g"] = scm::large_k::eps_g(a, 0.0);
  else summary["unspecialized_asymptote_eps_g"] = scm::large_k::eps_g(a, 0.0);
  const std::string sfile = stem + "_summary.json";
  scm::io::write_json((dir / sfile).string(), summary);
  out.outputs = {data, sfile};
  return out;
}

Outcome run_curve(const json& cfg, const fs::path& dir) {
  const scm::Activation a = activation_or_throw(cfg.at("activation").get<std::string>());
  const std::string kstr = cfg.at("K").get<std::string>();
  const GridSpec g = parse_grid(cfg.at("alpha").get<std::string>(), cfg.at("log").get<bool>());
  const std::string format = cfg.at("format").get<std::string>();
  const std::string stem = "curve_" + std::string(scm::to_string(a)) + "_K" + kstr;
  if (kstr == "inf") return curve_large_k(a, g, format, dir, stem);

  int K = 0;
  try {
    std::size_t pos = 0;
    K = std::stoi(kstr, &pos);
    if (pos != kstr.size()) throw std::invalid_argument(kstr);
  } catch (const std::exception&) {
    throw UsageError("--K expects a positive integer or 'inf'");
  }
  if (K < 1) throw UsageError("--K expects a positive integer or 'inf'");

  json summary;
  std::vector<double> located;
  if (K >= 2) {
    try {
      const scm::PhaseSummary p = scm::phase_summary(a, K, g.lo > 0.0 ? g.lo : 1e-3, g.hi);
      summary = scm::io::to_json(p);
      located.push_back(p.alpha_c);
      if (p.alpha_s) located.push_back(*p.alpha_s);
      if (p.alpha_d) {
        located.push_back(*p.alpha_d);
        // Status of the R = S point just beyond the disappearance.
        const double beyond = *p.alpha_d * 1.01;
        const auto sym = scm::symmetric_stationary(a, K, beyond);
        summary["symmetric_beyond_alpha_d"] = {{"alpha", beyond},
                                               {"stationary", sym.converged},
                                               {"grad_norm", sym.grad_norm},
                                               {"min_eig", sym.min_eig}};
      }
      if (p.transition_order == scm::TransitionOrder::First)
        summary["alpha_c_sign_change"] = scm::io::optional_json(scm::locate_c_sign_change(a, K, p.alpha_c, g.hi));
    } catch (const std::invalid_argument& e) {
      summary = {{"activation", scm::to_string(a)}, {"K", K}, {"transition", nullptr}, {"note", e.what()}};
    }
  } else {
    summary = {{"activation", scm::to_string(a)}, {"K", K}, {"transition", nullptr}};
  }

  const auto grid = densify(make_grid(g), g, located);
  const auto branches = scm::trace_branches(a, K, grid);
  std::vector<double> covered;
  for (const auto& b : branches)
    for (const auto& p : b.points) covered.push_back(p.alpha);
  std::sort(covered.begin(), covered.end());
  int missing = 0;
  for (double x : grid)
    if (!std::binary_search(covered.begin(), covered.end(), x)) ++missing;
  summary["grid_points"] = grid.size();
  summary["unconverged_points"] = missing;

  Outcome out;
  const std::string data = stem + (format == "json" ? ".json" : ".csv");
  if (format == "json") {
    json j = json::array();
    for (const auto& b : branches) j.push_back(scm::io::to_json(b));
    scm::io::write_json((dir / data).string(), j);
  } else {
    std::ostringstream os;
    scm::io::write_branches_csv(os, branches);
    scm::io::write_text((dir / data).string(), os.str());
  }
  const std::string sfile = stem + "_summary.json";
  scm::io::write_json((dir / sfile).string(), summary);
  out.outputs = {data, sfile};
  if (missing > 0) {
    std::cerr << "curve: no converged minimum at " << missing << " grid points\n";
    out.status = kExitFailure;
  }
  return out;
}

// ---------------------------------------------------------------------------
// mc

Outcome run_mc(const json& cfg, const fs::path& dir) {
  const auto alphas = cfg.at("alpha_tilde").get<std::vector<double>>();
  const auto biases = cfg.at("init_bias").get<std::vector<std::string>>();
  const int threads = cfg.at("threads").get<int>();
  const std::string format = cfg.at("format").get<std::string>();
  json base = cfg.at("base");

  std::vector<scm::mc::McConfig> configs;
  for (double at : alphas)
    for (const auto& b : biases) {
      scm::mc::McConfig c;
      try {
        base["alpha_tilde"] = at;
        base["init_bias"] = b;
        scm::io::update_from_json(c, base);
      } catch (const std::exception& e) {
        throw UsageError(std::string("mc config: ") + e.what());
      }
      if (auto p = c.problem()) throw UsageError("mc config: " + *p);
      configs.push_back(c);
    }

  Outcome out;
  for (const auto& c : configs) {
    const scm::mc::McObservables o = scm::mc::run(c, threads);
    const std::string stem = "mc_" + std::string(scm::to_string(c.activation)) + "_at" + fmt_short(c.alpha_tilde) +
                             "_" + std::string(scm::mc::to_string(c.init_bias));
    const std::string series = stem + "_series." + format;
    if (format == "json") {
      scm::io::write_json((dir / series).string(), scm::io::series_json(o));
    } else {
      std::ostringstream os;
      scm::io::write_series_csv(os, o);
      scm::io::write_text((dir / series).string(), os.str());
    }
    const std::string sfile = stem + "_summary.json";
    scm::io::write_json((dir / sfile).string(), scm::io::summary_json(o));
    out.outputs.push_back(series);
    out.outputs.push_back(sfile);
    std::cerr << stem << ": eps_g " << o.eps_g.mean << " +- " << o.eps_g.std_error << ", E/P " << o.e_over_p.mean
              << ", negative R mass " << o.histogram.negative_mass() << '\n';
  }
  out.seeds = {base.value("seed", std::uint64_t{1})};
  return out;
}

// ---------------------------------------------------------------------------
// verify

Outcome run_verify(const json& cfg, const fs::path& dir) {
  scm::verify::Options o;
  o.scopes = cfg.at("scopes").get<std::vector<std::string>>();
  for (const auto& s : o.scopes)
    if (!scm::verify::valid_scope(s)) throw UsageError("unknown scope '" + s + "'");
  o.samples = cfg.at("samples").get<long long>();
  o.seed = cfg.at("seed").get<std::uint64_t>();
  const std::string fault = cfg.at("fault").get<std::string>();
  if (fault == "wrong-sign-kernel") o.kernel = scm::verify::wrong_sign_kernel();
  else if (fault != "none") throw UsageError("unknown fault '" + fault + "'");

  const scm::verify::Report r = scm::verify::run(o);
  for (const auto& c : r.checks)
    std::cerr << (c.passed ? "PASS " : "FAIL ") << c.scope << ": " << c.name << " (" << c.value << " / "
              << c.tolerance << ")\n";
  Outcome out;
  out.outputs = {"verify_report.json"};
  out.seeds = {o.seed};
  scm::io::write_json((dir / out.outputs[0]).string(), scm::io::to_json(r));
  out.status = r.passed() ? kExitOk : kExitFailure;
  return out;
}

// ---------------------------------------------------------------------------
// dispatch and manifests

Outcome dispatch(const std::string& command, const json& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  if (command == "curve") return run_curve(cfg, dir);
  if (command == "mc") return run_mc(cfg, dir);
  if (command == "verify") return run_verify(cfg, dir);
  throw UsageError("unknown command '" + command + "'");
}

std::string manifest_name(const std::string& command, const Outcome& o) {
  // Named after the first output so each output belongs to one manifest.
  const std::string first = o.outputs.empty() ? command : fs::path(o.outputs.front()).stem().string();
  return first + ".manifest.json";
}

int execute(const std::string& command, const json& cfg, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o = dispatch(command, cfg, dir);
  scm::io::RunManifest m;
  m.command = command;
  m.config = cfg;
  m.seeds = o.seeds;
  m.outputs = o.outputs;
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path mpath = dir / manifest_name(command, o);
  scm::io::write_json(mpath.string(), scm::io::to_json(m));
  std::cerr << "manifest: " << mpath.string() << '\n';
  return o.status;
}

int replay(const fs::path& manifest_path, fs::path dir) {
  const auto m = scm::io::manifest_from_json(json::parse(scm::io::read_text(manifest_path.string())));
  if (m.version != scm::io::kVersion)
    std::cerr << "replay: manifest version " << m.version << " differs from " << scm::io::kVersion << '\n';
  const fs::path original = manifest_path.parent_path();
  if (dir.empty()) dir = original / "replay";
  if (fs::exists(dir) && fs::equivalent(dir, original.empty() ? fs::path(".") : original))
    throw UsageError("replay: --out-dir must differ from the manifest directory");
  const int status = execute(m.command, m.config, dir);
  int differing = 0;
  for (const auto& f : m.outputs) {
    const fs::path a = original / f, b = dir / f;
    const bool same = fs::exists(a) && fs::exists(b) && scm::io::read_text(a.string()) == scm::io::read_text(b.string());
    std::cout << (same ? "identical " : "differs   ") << f << '\n';
    differing += !same;
  }
  return differing ? kExitFailure : status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium learning curves and Monte Carlo training of soft committee machines"};
  app.require_subcommand(1);

  std::string out_dir = ".";
  int threads = 1;
  std::string format = "csv";
  std::uint64_t seed = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--format", format, "Data file format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    sub->add_option("--seed", seed, "Base RNG seed")->capture_default_str();
  };

  auto* curve = app.add_subcommand("curve", "Equilibrium branches and critical points over an alpha grid");
  std::string activation = "relu", kstr = "2", alpha_spec;
  bool log_grid = false;
  curve->add_option("--activation", activation, "erf or relu")->capture_default_str();
  curve->add_option("--K", kstr, "Hidden units, or 'inf' for the large-K limit")->capture_default_str();
  curve->add_option("--alpha", alpha_spec, "Grid as min:max:points")->required();
  curve->add_flag("--log", log_grid, "Logarithmic grid spacing");
  add_common(curve);

  auto* mc = app.add_subcommand("mc", "Metropolis training simulation");
  std::string config_path, alpha_tilde_list, bias_list, mc_activation;
  int N = 0, K = 0, M = 0, mcs = 0, window = 0, runs = 0, record_every = 0;
  double beta = -1, magnitude = -1, sigma = -1, target = -1;
  mc->add_option("--config", config_path, "JSON config file; flags override its fields");
  mc->add_option("--activation", mc_activation, "erf or relu");
  mc->add_option("--N", N, "Input dimension");
  mc->add_option("--K", K, "Student hidden units");
  mc->add_option("--M", M, "Teacher hidden units");
  mc->add_option("--beta", beta, "Inverse temperature");
  mc->add_option("--alpha-tilde", alpha_tilde_list, "Comma-separated alpha_tilde values");
  mc->add_option("--mcs", mcs, "Total Monte Carlo steps");
  mc->add_option("--window", window, "Measurement window (trailing steps)");
  mc->add_option("--runs", runs, "Independent runs");
  mc->add_option("--init-bias", bias_list, "Comma-separated: none, positive, anti");
  mc->add_option("--init-magnitude", magnitude, "Teacher admixture of the biased initialization");
  mc->add_option("--sigma", sigma, "Initial proposal scale");
  mc->add_option("--target-acceptance", target, "Acceptance rate targeted during burn-in");
  mc->add_option("--record-every", record_every, "Series cadence in steps");
  add_common(mc);

  auto* ver = app.add_subcommand("verify", "Oracle and finite-difference checks");
  std::string scopes;
  long long samples = 1'000'000;
  std::string fault = "none";
  ver->add_option("--scope", scopes, "Comma-separated scopes (default: all)");
  ver->add_option("--samples", samples, "Samples per sampling-oracle state")->capture_default_str();
  ver->add_option("--fault", fault, "Fault injection for negative controls")->check(CLI::IsMember({"none", "wrong-sign-kernel"}));
  add_common(ver);

  auto* rep = app.add_subcommand("replay", "Re-run a manifest and compare outputs byte for byte");
  std::string manifest_path, replay_dir;
  rep->add_option("--manifest", manifest_path, "Manifest written by an earlier command")->required()->check(CLI::ExistingFile);
  rep->add_option("--out-dir", replay_dir, "Directory for the re-run (default: <manifest dir>/replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*rep) return replay(manifest_path, replay_dir);
    if (*curve) {
      const json cfg = {{"activation", activation}, {"K", kstr}, {"alpha", alpha_spec}, {"log", log_grid},
                        {"format", format},         {"seed", seed}, {"threads", threads}};
      return execute("curve", cfg, out_dir);
    }
    if (*mc) {
      json base = json::object();
      if (!config_path.empty()) {
        try {
          base = json::parse(scm::io::read_text(config_path));
        } catch (const std::exception& e) {
          throw UsageError(std::string("--config: ") + e.what());
        }
      }
      if (!mc_activation.empty()) base["activation"] = mc_activation;
      if (N) base["N"] = N;
      if (K) base["K"] = K;
      if (M) base["M"] = M;
      if (beta >= 0) base["beta"] = beta;
      if (mcs) base["mcs_total"] = mcs;
      if (window) base["measure_window"] = window;
      if (runs) base["runs"] = runs;
      if (magnitude >= 0) base["init_magnitude"] = magnitude;
      if (sigma >= 0) base["step_sigma"] = sigma;
      if (target >= 0) base["target_acceptance"] = target;
      if (record_every) base["record_every"] = record_every;
      if (mc->count("--seed") || !base.contains("seed")) base["seed"] = seed;
      // Resolve every field so the manifest is self-contained.
      scm::mc::McConfig resolved;
      std::vector<double> alphas;
      std::vector<std::string> biases;
      try {
        scm::io::update_from_json(resolved, base);
        for (const auto& s : split(alpha_tilde_list, ',')) alphas.push_back(std::stod(s));
      } catch (const std::exception& e) {
        throw UsageError(std::string("mc config: ") + e.what());
      }
      if (alphas.empty()) alphas.push_back(resolved.alpha_tilde);
      biases = split(bias_list, ',');
      if (biases.empty()) biases.push_back(std::string(scm::mc::to_string(resolved.init_bias)));
      json full = scm::io::to_json(resolved);
      full.erase("alpha_tilde");
      full.erase("init_bias");
      const json cfg = {{"base", full}, {"alpha_tilde", alphas}, {"init_bias", biases},
                        {"threads", threads}, {"format", format}};
      return execute("mc", cfg, out_dir);
    }
    if (*ver) {
      const json cfg = {{"scopes", split(scopes, ',')}, {"samples", samples}, {"seed", seed}, {"fault", fault}};
      return execute("verify", cfg, out_dir);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
