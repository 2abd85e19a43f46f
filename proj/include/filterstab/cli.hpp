#pragma once

// Batch front-end shared by the `filterstab` tool and its tests.
//
// Exit codes: 0 success, 1 configuration error, 2 certificate or validation
// failure, 3 divergence.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "filterstab/errors.hpp"
#include "filterstab/harness.hpp"
#include "filterstab/quadrature.hpp"
#include "filterstab/report.hpp"
#include "filterstab/stability.hpp"

namespace filterstab::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kCheckFailed = 2, kDiverged = 3 };

/// Configuration error with the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  ExperimentSpec spec;
  std::string out;  // empty: no files for certify/validate; "out" default for simulate
  int verbosity = 1;
  std::size_t samples = 10000;  // assumption-check samples for validate
  std::optional<CubatureRule> rule;
  bool paper_preset = false;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + where + k + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

inline Matrix matrix_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw ConfigError("key '" + key + "': expected a 2-D array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw ConfigError("key '" + key + "': expected a 2-D array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError("key '" + key + "': ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ConfigError("key '" + key + "': non-numeric entry");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

inline Vector vector_from(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("key '" + key + "': expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("key '" + key + "': non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline std::vector<std::string> filters_from(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  if (j.is_array()) {
    std::vector<std::string> out;
    for (const auto& f : j) {
      if (!f.is_string()) throw ConfigError("key 'filter': expected strings");
      out.push_back(f.get<std::string>());
    }
    return out;
  }
  throw ConfigError("key 'filter': expected a string or an array of strings");
}

inline void check_filters(const std::vector<std::string>& filters) {
  for (const auto& f : filters) {
    if (f != "ekf" && f != "ukf" && f != "adf" && f != "gh") {
      throw ConfigError("unknown filter '" + f + "' (expected ekf, ukf, adf or gh)");
    }
  }
}

/// Applies a preset name: fig1, fig2 or paper (reference model parameters, run settings kept).
inline void apply_preset(CliConfig& cfg, const std::string& name) {
  if (name == "paper") {
    cfg.paper_preset = true;
    cfg.spec.velocity = IntegratedVelocityParams{};
    return;
  }
  try {
    cfg.spec = preset(name);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string(e.what()) + "; 'paper' is also accepted");
  }
}

/// File values on top of `cfg`. The file's preset is ignored when a preset flag was given.
inline void apply_json(CliConfig& cfg, const json& j, bool use_file_preset = true) {
  reject_unknown(j,
                 {"model", "filter", "preset", "trajectories", "dt", "horizon", "seed", "workers",
                  "out", "certificate", "velocity", "linear", "deltas", "samples", "verbosity",
                  "rule"},
                 "");
  if (j.contains("preset")) {
    const auto name = get<std::string>(j, "preset");
    if (use_file_preset) apply_preset(cfg, name);
  }
  if (j.contains("model")) cfg.spec.model = get<std::string>(j, "model");
  if (j.contains("filter")) {
    cfg.spec.filters = filters_from(j.at("filter"));
    check_filters(cfg.spec.filters);
  }
  if (j.contains("trajectories")) cfg.spec.trajectories = get<std::size_t>(j, "trajectories");
  if (j.contains("dt")) cfg.spec.dt = get<double>(j, "dt");
  if (j.contains("horizon")) cfg.spec.horizon = get<double>(j, "horizon");
  if (j.contains("seed")) cfg.spec.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("workers")) cfg.spec.workers = get<unsigned>(j, "workers");
  if (j.contains("out")) cfg.out = get<std::string>(j, "out");
  if (j.contains("certificate")) cfg.spec.certificate = get<std::string>(j, "certificate");
  if (j.contains("samples")) cfg.samples = get<std::size_t>(j, "samples");
  if (j.contains("verbosity")) cfg.verbosity = get<int>(j, "verbosity");
  if (j.contains("deltas")) cfg.spec.deltas = get<std::vector<double>>(j, "deltas");
  if (j.contains("velocity")) {
    const json& v = j.at("velocity");
    reject_unknown(v, {"a1", "a2", "q1", "q2", "h", "r"}, "velocity.");
    auto& p = cfg.spec.velocity;
    if (v.contains("a1")) p.a1 = get<double>(v, "a1");
    if (v.contains("a2")) p.a2 = get<double>(v, "a2");
    if (v.contains("q1")) p.q1 = get<double>(v, "q1");
    if (v.contains("q2")) p.q2 = get<double>(v, "q2");
    if (v.contains("h")) p.h = get<double>(v, "h");
    if (v.contains("r")) p.r = get<double>(v, "r");
  }
  if (j.contains("linear")) {
    const json& l = j.at("linear");
    reject_unknown(l, {"A", "Q", "H", "R", "mu0", "Sigma0"}, "linear.");
    for (const char* k : {"A", "Q", "H", "R"}) {
      if (!l.contains(k)) throw ConfigError(std::string("missing key 'linear.") + k + "'");
    }
    LinearModelSpec m;
    m.A = matrix_from(l.at("A"), "linear.A");
    m.Q = matrix_from(l.at("Q"), "linear.Q");
    m.H = matrix_from(l.at("H"), "linear.H");
    m.R = matrix_from(l.at("R"), "linear.R");
    const Eigen::Index d = m.A.rows();
    m.mu0 = l.contains("mu0") ? vector_from(l.at("mu0"), "linear.mu0") : Vector::Zero(d);
    m.Sigma0 = l.contains("Sigma0") ? matrix_from(l.at("Sigma0"), "linear.Sigma0")
                                    : Matrix(1e-2 * Matrix::Identity(d, d));
    cfg.spec.linear = m;
    if (!j.contains("model")) cfg.spec.model = "linear";
  }
  if (j.contains("rule")) {
    const json& r = j.at("rule");
    reject_unknown(r, {"points", "weights", "name"}, "rule.");
    if (!r.contains("points") || !r.contains("weights")) {
      throw ConfigError("rule needs 'points' and 'weights'");
    }
    const Matrix pts = matrix_from(r.at("points"), "rule.points");
    const Vector w = vector_from(r.at("weights"), "rule.weights");
    const std::string name = r.contains("name") ? get<std::string>(r, "name") : "custom";
    try {
      cfg.rule = CubatureRule(pts, w, name);
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("rule: ") + e.what());
    }
  }
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

inline void print_certificate(std::ostream& os, const ContinuousCertificate& c) {
  os << "construction   " << c.construction << " (" << to_string(c.kind) << ")\n"
     << "provenance     " << to_string(c.provenance) << (c.asymptotic ? ", asymptotic" : "")
     << "\n"
     << "lambda         " << c.lambda << "\n"
     << "lambda_P       " << c.lambda_P << "\n"
     << "T              " << c.T << "\n"
     << "C_lambda       " << c.C_lambda << "\n"
     << "u              " << c.u << "\n"
     << "rho            " << c.rho << "\n"
     << "C_T            " << c.C_T << " (moment-index-free surrogate)\n"
     << "e_T_sq         " << c.e_T_sq << "\n"
     << "mse asymptote  " << c.mse_asymptote() << "\n";
  for (const auto& [k, v] : c.details) os << "  " << k << " = " << v << "\n";
}

}  // namespace detail

/// Certificate for the configured model and (first) filter.
inline int cmd_certify(const CliConfig& cfg, std::ostream& os) {
  const ExperimentSpec& spec = cfg.spec;
  const ContinuousModel model = make_model(spec);
  const std::string filter = spec.filters.front();
  ContinuousCertificate cert;
  try {
    if (spec.model == "integrated_velocity") {
      if (filter != "ekf") {
        throw CertificateError("filter_variant",
                               "the element-wise construction covers the EKF only");
      }
      IntegratedVelocityOptions opt;
      opt.P0 = model.Sigma0;
      opt.x0_hat = model.mu0;
      cert = integrated_velocity_certificate(spec.velocity, opt);
    } else {
      cert = contractive_certificate(model, named_config(model, filter, TimeDomain::Continuous));
    }
  } catch (const CertificateError& e) {
    os << "no certificate: hypothesis '" << e.hypothesis() << "' failed: " << e.what() << "\n";
    return kCheckFailed;
  }
  os << "model          " << model.name << "\n";
  detail::print_certificate(os, cert);
  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    nlohmann::json j = to_json(cert);
    j["model"] = model.name;
    filterstab::detail::write_file(std::filesystem::path(cfg.out) / "certificate.json", j.dump(2) + "\n");
  }
  return kOk;
}

inline int cmd_simulate(const CliConfig& cfg, std::ostream& os) {
  const ExperimentResult r = run_experiment(cfg.spec);
  const std::string out = cfg.out.empty() ? std::string("out") : cfg.out;
  export_result(r, out);
  for (const auto& w : r.warnings) os << "warning: " << w << "\n";
  for (const auto& s : r.series) {
    os << s.filter << ": time-averaged MSE " << s.time_averaged_mse << " (t >= "
       << cfg.spec.average_from << ", " << s.used_paths << " paths)";
    if (s.certificate) {
      const double excess = worst_bound_excess(r, s.filter, 1.0);
      os << ", bound asymptote " << s.certificate->mse_asymptote() << ", bound dominates: "
         << (excess <= 0.0 ? "yes" : "no");
    } else {
      os << ", no bound";
    }
    os << "\n";
  }
  os << "wrote " << (std::filesystem::path(out) / "mse.csv").string() << "\n";
  return kOk;
}

/// Property suite: rule exactness, sampled deviation conditions, concentration.
inline int cmd_validate(const CliConfig& cfg, std::ostream& os) {
  const ExperimentSpec& spec = cfg.spec;
  const ContinuousModel model = make_model(spec);
  const Eigen::Index d = model.dim_x;
  nlohmann::json report = nlohmann::json::array();
  bool all_pass = true;
  auto emit = [&](const std::string& property, bool pass, nlohmann::json detail) {
    nlohmann::json line{{"property", property}, {"pass", pass}, {"detail", std::move(detail)}};
    os << line.dump() << "\n";
    report.push_back(line);
    all_pass = all_pass && pass;
  };

  std::vector<CubatureRule> rules = {unscented_rule(d), gauss_hermite_rule(d, 3)};
  if (cfg.rule) rules.push_back(*cfg.rule);
  std::vector<CubatureRule> certified;
  for (const auto& rule : rules) {
    const ExactnessReport rep = check_degree_two_exactness(rule, 1e-9);
    const bool dim_ok = rule.dim() == d;
    emit("exactness/" + rule.name(), rep.certified() && dim_ok,
         {{"weight_sum_residual", rep.weight_sum_residual},
          {"mean_residual", rep.mean_residual},
          {"second_moment_residual", rep.second_moment_residual},
          {"negative_weights", rep.negative_weights},
          {"dimension_matches", dim_ok}});
    if (rep.certified() && dim_ok) certified.push_back(rule);
  }

  // Sampled constants widen known ones; never narrower than either source.
  const auto est = log_lipschitz_estimate(model.drift.jacobian, Box::cube(d, -5.0, 5.0), 5000);
  const double m_f = std::max(model.known_M_f.value_or(est.m_hat), est.m_hat);
  const double n_f = std::min(model.known_N_f.value_or(est.n_hat), est.n_hat);
  std::vector<std::pair<std::string, MeanFunctional>> functionals = {
      {"ekf", MeanFunctional::ekf()}, {"adf", MeanFunctional::adf(d)}};
  for (const auto& r : certified) functionals.push_back({r.name(), MeanFunctional::sigma_point(r)});
  AssumptionCheckOptions aopt;
  aopt.box = Box::cube(d, -5.0, 5.0);
  for (const auto& [name, f] : functionals) {
    const auto rep = check_assumption_continuous(f, model.drift, m_f, n_f, cfg.samples,
                                                 spec.seed, aopt);
    emit("deviation/" + name, rep.pass,
         {{"worst_violation", rep.worst_violation}, {"samples", rep.sample_count},
          {"C_g", rep.c_g_used}});
  }

  const ExperimentResult r = run_experiment(spec);
  for (const auto& e : r.exceedance) {
    std::ostringstream name;
    name << "concentration/" << e.filter << "/t=" << e.t << "/delta=" << e.delta;
    emit(name.str(), e.pass,
         {{"threshold", e.threshold}, {"frequency", e.frequency}, {"limit", e.limit}});
  }
  for (const auto& s : r.series) {
    if (!s.certificate) continue;
    const double excess = worst_bound_excess(r, s.filter, std::max(1.0, s.certificate->T));
    emit("bound_domination/" + s.filter, excess <= 0.0, {{"worst_excess", excess}});
  }

  if (!cfg.out.empty()) {
    std::filesystem::create_directories(cfg.out);
    filterstab::detail::write_file(std::filesystem::path(cfg.out) / "validate.json", report.dump(2) + "\n");
  }
  os << (all_pass ? "all properties pass" : "some properties FAILED") << "\n";
  return all_pass ? kOk : kCheckFailed;
}

/// Entry point of the `filterstab` tool.
inline int main(int argc, char** argv, std::ostream& os = std::cout,
                std::ostream& err = std::cerr) {
  CLI::App app{"Stability certificates and Monte Carlo validation for Kalman-type filters"};
  app.require_subcommand(1);

  std::string config_path, model, preset_name, out;
  std::vector<std::string> filters;
  std::size_t trajectories = 0;
  double dt = 0.0, horizon = 0.0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  int verbosity = 1;

  std::vector<CLI::App*> subs = {
      app.add_subcommand("certify", "build a stability certificate"),
      app.add_subcommand("simulate", "run a Monte Carlo experiment and export CSV/JSON"),
      app.add_subcommand("validate", "run the property suite")};
  struct Opts {
    CLI::Option *config, *model, *filter, *preset, *traj, *dt, *horizon, *seed, *workers, *out,
        *verbosity;
  };
  std::vector<Opts> opts;
  for (CLI::App* s : subs) {
    Opts o{};
    o.config = s->add_option("--config", config_path, "JSON config file (unknown keys rejected)");
    o.model = s->add_option("--model", model, "contractive3d | integrated_velocity | ou | linear");
    o.filter = s->add_option("--filter", filters, "ekf | ukf | adf | gh (comma list)")
                   ->delimiter(',');
    o.preset = s->add_option("--preset", preset_name, "fig1 | fig2 | paper");
    o.traj = s->add_option("--trajectories", trajectories, "Monte Carlo paths");
    o.dt = s->add_option("--dt", dt, "time step");
    o.horizon = s->add_option("--horizon", horizon, "time horizon");
    o.seed = s->add_option("--seed", seed, "master seed");
    o.workers = s->add_option("--workers", workers, "worker threads (results do not depend on it)");
    o.out = s->add_option("--out", out, "output directory");
    o.verbosity = s->add_option("--verbosity", verbosity, "0 quiet, 1 normal");
    opts.push_back(o);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, os, err);
    return rc == 0 ? kOk : kConfigError;
  }

  std::size_t which = 0;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) which = i;
  const Opts& o = opts[which];

  try {
    CliConfig cfg;
    if (o.preset->count()) detail::apply_preset(cfg, preset_name);
    if (o.config->count()) {
      detail::apply_json(cfg, detail::load_json(config_path), o.preset->count() == 0);
    }
    if (o.model->count()) cfg.spec.model = model;
    if (o.filter->count()) {
      detail::check_filters(filters);
      cfg.spec.filters = filters;
    }
    if (o.traj->count()) cfg.spec.trajectories = trajectories;
    if (o.dt->count()) cfg.spec.dt = dt;
    if (o.horizon->count()) cfg.spec.horizon = horizon;
    if (o.seed->count()) cfg.spec.seed = seed;
    if (o.workers->count()) cfg.spec.workers = workers;
    if (o.out->count()) cfg.out = out;
    if (o.verbosity->count()) cfg.verbosity = verbosity;
    cfg.spec.validate();

    std::ostringstream quiet;
    std::ostream& sink = cfg.verbosity > 0 ? os : quiet;
    switch (which) {
      case 0: return cmd_certify(cfg, sink);
      case 1: return cmd_simulate(cfg, sink);
      default: return cmd_validate(cfg, sink);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CertificateError& e) {
    err << "certificate failure: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const DegenerateCovariance& e) {
    err << "divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace filterstab::cli
