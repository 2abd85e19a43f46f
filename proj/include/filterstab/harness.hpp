#pragma once

// Seeded Monte Carlo experiments: simulate paths, run filters, compare the
// empirical mean-square error with certified bounds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "filterstab/errors.hpp"
#include "filterstab/filters.hpp"
#include "filterstab/models.hpp"
#include "filterstab/report.hpp"
#include "filterstab/stability.hpp"

namespace filterstab {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Matrices of a user-defined linear model dX = A X dt + Q^{1/2} dW, dY = H X dt + R^{1/2} dV.
struct LinearModelSpec {
  Matrix A, Q, H, R;
  Vector mu0;
  Matrix Sigma0;
};

struct ExperimentSpec {
  std::string model = "contractive3d";  // contractive3d | integrated_velocity | ou | linear
  IntegratedVelocityParams velocity;    // used by integrated_velocity
  std::optional<LinearModelSpec> linear;
  std::vector<std::string> filters = {"ekf", "ukf"};
  double dt = 0.01;
  double horizon = 10.0;
  std::size_t trajectories = 1000;
  std::uint64_t seed = 20190601;
  unsigned workers = 1;                 // does not affect results
  std::string certificate = "auto";     // auto | none
  std::vector<double> deltas = {0.5, 1.0, 2.0, 3.0};
  std::vector<double> concentration_times = {5.0, 10.0};
  double checkpoint_interval = 0.5;
  double average_from = 2.0;            // start of the time-averaging window
  double max_divergence_fraction = 0.01;

  void validate() const {
    if (trajectories < 1) throw InvalidInput("experiment: trajectories must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("experiment: dt must be > 0");
    if (!(horizon >= dt) || !std::isfinite(horizon)) {
      throw InvalidInput("experiment: horizon must be >= dt");
    }
    if (filters.empty()) throw InvalidInput("experiment: no filters requested");
    if (!(checkpoint_interval > 0.0)) throw InvalidInput("experiment: checkpoint interval <= 0");
    if (certificate != "auto" && certificate != "none") {
      throw InvalidInput("experiment: certificate must be 'auto' or 'none'");
    }
    for (double d : deltas) {
      if (!(d > 0.0)) throw InvalidInput("experiment: deltas must be > 0");
    }
  }
};

/// Built-in model by name.
inline ContinuousModel make_model(const ExperimentSpec& spec) {
  if (spec.model == "contractive3d") return builtin_contractive3d();
  if (spec.model == "integrated_velocity") return builtin_integrated_velocity(spec.velocity);
  if (spec.model == "ou") {
    const Matrix one = Matrix::Identity(1, 1);
    ContinuousModel m = builtin_linear(-one, one, one, one, Vector::Zero(1), one);
    m.name = "ou";
    return m;
  }
  if (spec.model == "linear") {
    if (!spec.linear) throw InvalidInput("model 'linear' needs its matrices");
    const LinearModelSpec& l = *spec.linear;
    return builtin_linear(l.A, l.Q, l.H, l.R, l.mu0, l.Sigma0);
  }
  throw InvalidInput("unknown model '" + spec.model +
                     "' (expected contractive3d, integrated_velocity, ou or linear)");
}

struct ExperimentPreset {
  static ExperimentSpec fig1() {
    ExperimentSpec s;
    s.model = "contractive3d";
    s.filters = {"ekf", "ukf"};
    return s;
  }
  static ExperimentSpec fig2() {
    ExperimentSpec s;
    s.model = "integrated_velocity";
    s.filters = {"ekf"};
    return s;
  }
};

inline ExperimentSpec preset(const std::string& name) {
  if (name == "fig1") return ExperimentPreset::fig1();
  if (name == "fig2") return ExperimentPreset::fig2();
  throw InvalidInput("unknown preset '" + name + "' (expected fig1 or fig2)");
}

/// Certificate for (model, filter), or empty with a reason.
inline std::optional<ContinuousCertificate> auto_certificate(const ExperimentSpec& spec,
                                                             const ContinuousModel& model,
                                                             const std::string& filter,
                                                             std::string* reason = nullptr) {
  try {
    if (spec.model == "integrated_velocity") {
      if (filter != "ekf") {
        if (reason) *reason = "element-wise certificate only covers the EKF";
        return std::nullopt;
      }
      IntegratedVelocityOptions opt;
      opt.P0 = model.Sigma0;
      opt.x0_hat = model.mu0;
      return integrated_velocity_certificate(spec.velocity, opt);
    }
    return contractive_certificate(model, named_config(model, filter, TimeDomain::Continuous));
  } catch (const CertificateError& e) {
    if (reason) *reason = e.what();
    return std::nullopt;
  }
}

struct ExceedanceRow {
  std::string filter;
  double t = 0.0;
  double delta = 0.0;
  double threshold = 0.0;
  double frequency = 0.0;
  double limit = 0.0;
  bool pass = true;
};

struct FilterSeries {
  std::string filter;
  std::vector<double> mse;    // per time step
  std::vector<double> bound;  // NaN where no bound applies
  double time_averaged_mse = 0.0;
  double max_trace_P = 0.0;
  std::size_t divergent_paths = 0;
  std::size_t used_paths = 0;
  std::optional<ContinuousCertificate> certificate;
  std::string certificate_note;
  // used_paths x checkpoints, |E_t|^2 of every retained path at every checkpoint
  Matrix checkpoint_errors;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<double> times;
  std::vector<double> checkpoint_times;
  std::vector<FilterSeries> series;
  std::vector<ExceedanceRow> exceedance;
  std::vector<std::string> warnings;

  const FilterSeries& find(const std::string& filter) const {
    for (const auto& s : series)
      if (s.filter == filter) return s;
    throw InvalidInput("result has no filter '" + filter + "'");
  }
};

namespace detail {

struct PathOutcome {
  bool simulated = false;
  std::vector<bool> ok;                     // per filter
  std::vector<std::vector<double>> sq_err;  // per filter, per step
  std::vector<double> max_trace;            // per filter
};

inline std::size_t step_of(double t, double dt) {
  return static_cast<std::size_t>(std::llround(t / dt));
}

}  // namespace detail

/// Frequency of |E_t|^2 >= threshold at each (t, delta); passes iff it stays below
/// e^{-delta} + 3 binomial standard errors.
inline std::vector<ExceedanceRow> concentration_check(const ExperimentResult& result,
                                                      const std::string& filter,
                                                      const ContinuousCertificate& cert,
                                                      const std::vector<double>& t_list,
                                                      const std::vector<double>& delta_list) {
  const FilterSeries& s = result.find(filter);
  std::vector<ExceedanceRow> rows;
  for (double t : t_list) {
    const auto it = std::find_if(result.checkpoint_times.begin(), result.checkpoint_times.end(),
                                 [&](double c) { return std::abs(c - t) < 1e-9; });
    if (it == result.checkpoint_times.end()) {
      throw InvalidInput("concentration_check: t = " + std::to_string(t) + " is not a checkpoint");
    }
    const auto col = static_cast<Eigen::Index>(it - result.checkpoint_times.begin());
    const double n = static_cast<double>(s.checkpoint_errors.rows());
    for (double delta : delta_list) {
      ExceedanceRow r;
      r.filter = filter;
      r.t = t;
      r.delta = delta;
      r.threshold = continuous_concentration_threshold(cert, t, delta);
      const auto hits = (s.checkpoint_errors.col(col).array() >= r.threshold).count();
      r.frequency = n > 0 ? static_cast<double>(hits) / n : 0.0;
      const double p = std::exp(-delta);
      r.limit = p + 3.0 * std::sqrt(p * (1.0 - p) / std::max(n, 1.0));
      r.pass = r.frequency <= r.limit;
      rows.push_back(r);
    }
  }
  return rows;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const ContinuousModel model = make_model(spec);
  std::vector<FilterConfig> configs;
  for (const auto& f : spec.filters) {
    configs.push_back(named_config(model, f, TimeDomain::Continuous));
  }
  const std::size_t nf = configs.size();
  const std::size_t steps = detail::step_of(spec.horizon, spec.dt);

  ExperimentResult res;
  res.spec = spec;
  res.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) res.times[k] = static_cast<double>(k) * spec.dt;
  std::vector<std::size_t> checkpoint_steps;
  for (int i = 1;; ++i) {
    const double t = i * spec.checkpoint_interval;
    if (t > spec.horizon + 1e-9) break;
    res.checkpoint_times.push_back(t);
    checkpoint_steps.push_back(detail::step_of(t, spec.dt));
  }

  std::vector<detail::PathOutcome> outcomes(spec.trajectories);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    const RunOptions ropt{false, false};
    for (std::size_t i = next++; i < spec.trajectories; i = next++) {
      detail::PathOutcome& out = outcomes[i];
      out.ok.assign(nf, false);
      out.sq_err.assign(nf, {});
      out.max_trace.assign(nf, 0.0);
      SimulatedPath path;
      try {
        path = simulate_path(model, spec.dt, spec.horizon, spec.seed, i);
        out.simulated = true;
      } catch (const DivergenceError&) {
        continue;
      }
      for (std::size_t f = 0; f < nf; ++f) {
        try {
          const FilterTrajectory tr = run_continuous_filter(path, model, configs[f], ropt);
          std::vector<double> e(steps + 1);
          for (std::size_t k = 0; k <= steps; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            e[k] = (path.states.row(kk) - tr.estimates.row(kk)).squaredNorm();
          }
          out.sq_err[f] = std::move(e);
          out.max_trace[f] = tr.trace_P.maxCoeff();
          out.ok[f] = true;
        } catch (const DivergenceError&) {
        } catch (const DegenerateCovariance&) {
        }
      }
    }
  };
  const unsigned nw = std::max(1u, std::min<unsigned>(spec.workers, spec.trajectories));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Merge in path order so the floating-point sums do not depend on scheduling.
  for (std::size_t f = 0; f < nf; ++f) {
    FilterSeries s;
    s.filter = spec.filters[f];
    std::vector<double> sum(steps + 1, 0.0);
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < spec.trajectories; ++i) {
      const auto& o = outcomes[i];
      if (!o.simulated || !o.ok[f]) {
        ++s.divergent_paths;
        continue;
      }
      used.push_back(i);
      for (std::size_t k = 0; k <= steps; ++k) sum[k] += o.sq_err[f][k];
      s.max_trace_P = std::max(s.max_trace_P, o.max_trace[f]);
    }
    s.used_paths = used.size();
    if (static_cast<double>(s.divergent_paths) >
        spec.max_divergence_fraction * static_cast<double>(spec.trajectories)) {
      throw DivergenceError("experiment: " + std::to_string(s.divergent_paths) + " of " +
                                std::to_string(spec.trajectories) + " paths diverged for " +
                                s.filter,
                            0);
    }
    if (s.divergent_paths > 0) {
      res.warnings.push_back(s.filter + ": " + std::to_string(s.divergent_paths) +
                             " divergent paths excluded");
    }
    s.mse.resize(steps + 1);
    const double denom = static_cast<double>(std::max<std::size_t>(used.size(), 1));
    for (std::size_t k = 0; k <= steps; ++k) s.mse[k] = sum[k] / denom;
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 0; k <= steps; ++k) {
      if (res.times[k] >= spec.average_from - 1e-9) {
        acc += s.mse[k];
        ++cnt;
      }
    }
    s.time_averaged_mse = cnt > 0 ? acc / static_cast<double>(cnt) : s.mse.back();
    s.checkpoint_errors.resize(static_cast<Eigen::Index>(used.size()),
                               static_cast<Eigen::Index>(checkpoint_steps.size()));
    for (std::size_t r = 0; r < used.size(); ++r) {
      for (std::size_t c = 0; c < checkpoint_steps.size(); ++c) {
        s.checkpoint_errors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            outcomes[used[r]].sq_err[f][checkpoint_steps[c]];
      }
    }

    s.bound.assign(steps + 1, std::numeric_limits<double>::quiet_NaN());
    if (spec.certificate == "auto") {
      std::string reason;
      s.certificate = auto_certificate(spec, model, s.filter, &reason);
      if (s.certificate) {
        const auto& c = *s.certificate;
        for (std::size_t k = 0; k <= steps; ++k) {
          if (c.asymptotic) {
            s.bound[k] = c.mse_asymptote();
          } else if (res.times[k] >= c.T) {
            s.bound[k] = continuous_mse_bound(c, res.times[k]);
          }
        }
      } else {
        s.certificate_note = reason;
        res.warnings.push_back(s.filter + ": no certificate (" + reason + ")");
      }
    }
    res.series.push_back(std::move(s));
  }

  for (const auto& s : res.series) {
    if (!s.certificate) continue;
    std::vector<double> ts;
    for (double t : spec.concentration_times) {
      if (t < s.certificate->T) continue;  // the inequality only holds after the settle time
      const bool present = std::any_of(res.checkpoint_times.begin(), res.checkpoint_times.end(),
                                       [&](double c) { return std::abs(c - t) < 1e-9; });
      if (present) ts.push_back(t);
    }
    const auto rows = concentration_check(res, s.filter, *s.certificate, ts, spec.deltas);
    res.exceedance.insert(res.exceedance.end(), rows.begin(), rows.end());
  }
  return res;
}

/// Largest excess of the empirical MSE over the bound for t >= t_min (negative when the bound
/// holds everywhere), ignoring times without a bound.
inline double worst_bound_excess(const ExperimentResult& r, const std::string& filter,
                                 double t_min) {
  const FilterSeries& s = r.find(filter);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    if (r.times[k] < t_min - 1e-9 || !std::isfinite(s.bound[k])) continue;
    worst = std::max(worst, s.mse[k] - s.bound[k]);
  }
  return worst;
}

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  out << content;
  out.close();
  if (!out) throw std::runtime_error("write to '" + p.string() + "' failed");
}

}  // namespace detail

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["model"] = s.model;
  if (s.model == "integrated_velocity") {
    j["velocity"] = {{"a1", s.velocity.a1}, {"a2", s.velocity.a2}, {"q1", s.velocity.q1},
                     {"q2", s.velocity.q2}, {"h", s.velocity.h},   {"r", s.velocity.r}};
  }
  j["filters"] = s.filters;
  j["dt"] = s.dt;
  j["horizon"] = s.horizon;
  j["trajectories"] = s.trajectories;
  j["seed"] = s.seed;
  j["certificate"] = s.certificate;
  j["deltas"] = s.deltas;
  j["concentration_times"] = s.concentration_times;
  j["checkpoint_interval"] = s.checkpoint_interval;
  j["average_from"] = s.average_from;
  return j;
}

/// Writes mse.csv, exceedance.csv and experiment.json into `dir`.
inline void export_result(const ExperimentResult& r, const std::filesystem::path& dir) {
  if (r.times.empty() || r.checkpoint_times.empty()) {
    throw InvalidInput("export_result: result has no time points");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());

  std::ostringstream mse;
  mse << "time";
  for (const auto& s : r.series) mse << ",mse_" << s.filter << ",bound_" << s.filter;
  mse << "\n";
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    mse << detail::fmt(r.times[k]);
    for (const auto& s : r.series) {
      mse << "," << detail::fmt(s.mse[k]) << "," << detail::fmt(s.bound[k]);
    }
    mse << "\n";
  }
  detail::write_file(dir / "mse.csv", mse.str());

  std::ostringstream exc;
  exc << "filter,t,delta,threshold,frequency,limit\n";
  for (const auto& e : r.exceedance) {
    exc << e.filter << "," << detail::fmt(e.t) << "," << detail::fmt(e.delta) << ","
        << detail::fmt(e.threshold) << "," << detail::fmt(e.frequency) << ","
        << detail::fmt(e.limit) << "\n";
  }
  detail::write_file(dir / "exceedance.csv", exc.str());

  nlohmann::json meta;
  meta["library_version"] = kLibraryVersion;
  meta["spec"] = spec_to_json(r.spec);
  nlohmann::json filters = nlohmann::json::array();
  for (const auto& s : r.series) {
    nlohmann::json f;
    f["filter"] = s.filter;
    f["time_averaged_mse"] = s.time_averaged_mse;
    f["max_trace_P"] = s.max_trace_P;
    f["divergent_paths"] = s.divergent_paths;
    f["used_paths"] = s.used_paths;
    f["certificate"] = s.certificate ? to_json(*s.certificate) : nlohmann::json(nullptr);
    if (!s.certificate_note.empty()) f["certificate_note"] = s.certificate_note;
    const double excess = worst_bound_excess(r, s.filter, 1.0);
    f["bound_dominates_from_t1"] = s.certificate ? nlohmann::json(excess <= 0.0) : nullptr;
    filters.push_back(f);
  }
  meta["filters"] = filters;
  meta["warnings"] = r.warnings;
  detail::write_file(dir / "experiment.json", meta.dump(2) + "\n");
}

}  // namespace filterstab
