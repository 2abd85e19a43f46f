#pragma once

// Generic Kalman-Bucy filter (Euler co-integration of estimate and Riccati ODE)
// and the discrete predict/update filter.
//
//   dx^ = L_{x^,P}(f) dt + P H^T R^{-1} (dY - H x^ dt)
//   dP  = (Lambda + Lambda^T + Q~ - P S P) dt

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"
#include "filterstab/functionals.hpp"
#include "filterstab/matrix_measures.hpp"
#include "filterstab/models.hpp"

namespace filterstab {

struct FilterConfig {
  MeanFunctional mean = MeanFunctional::ekf();
  RiccatiFunctional riccati = RiccatiFunctional::ekf(TimeDomain::Continuous);
  Matrix Q_tuned;
  Vector x0_hat;
  Matrix P0;

  void validate(Eigen::Index dim, TimeDomain domain) const {
    if (riccati.domain() != domain) {
      throw VariantMismatch("FilterConfig: Riccati functional is for the wrong time domain");
    }
    if ((mean.kind() == FunctionalKind::Ekf) != (riccati.kind() == FunctionalKind::Ekf)) {
      throw VariantMismatch("FilterConfig: mixing EKF and quadrature-based functionals");
    }
    if (Q_tuned.rows() != dim || Q_tuned.cols() != dim || x0_hat.size() != dim ||
        P0.rows() != dim || P0.cols() != dim) {
      throw InvalidInput("FilterConfig: dimensions do not match the model");
    }
    for (const CubatureRule* r : {mean.rule(), riccati.rule()}) {
      if (r && r->dim() != dim) throw InvalidInput("FilterConfig: rule dimension mismatch");
    }
    require_finite(x0_hat, "FilterConfig x0_hat");
    require_finite(Q_tuned, "FilterConfig Q_tuned");
    require_finite(P0, "FilterConfig P0");
    if (!(lambda_min_sym(Q_tuned) > 0.0)) {
      throw InvalidInput("FilterConfig: Q_tuned must be positive-definite");
    }
    if (lambda_min_sym(P0) < -1e-12) throw InvalidInput("FilterConfig: P0 must be PSD");
  }
};

/// Tuning that matches the model: Q~ = Q, x^_0 = mu0, P0 = Sigma0.
inline FilterConfig matched_config(const ModelBase& model, MeanFunctional mean,
                                   RiccatiFunctional riccati) {
  return FilterConfig{std::move(mean), std::move(riccati), model.Q, model.mu0, model.Sigma0};
}

/// Convenience constructors by filter name: "ekf", "ukf", "adf", "gh" (GH order 3).
inline FilterConfig named_config(const ModelBase& model, const std::string& filter,
                                 TimeDomain domain) {
  const Eigen::Index d = model.dim_x;
  if (filter == "ekf") {
    return matched_config(model, MeanFunctional::ekf(), RiccatiFunctional::ekf(domain));
  }
  if (filter == "ukf") {
    return matched_config(model, MeanFunctional::sigma_point(unscented_rule(d)),
                          RiccatiFunctional::sigma_point(domain, unscented_rule(d)));
  }
  if (filter == "adf") {
    return matched_config(model, MeanFunctional::adf(d), RiccatiFunctional::adf(domain, d));
  }
  if (filter == "gh") {
    return matched_config(model, MeanFunctional::sigma_point(gauss_hermite_rule(d, 3)),
                          RiccatiFunctional::sigma_point(domain, gauss_hermite_rule(d, 3)));
  }
  throw InvalidInput("unknown filter '" + filter + "' (expected ekf, ukf, adf or gh)");
}

struct FilterState {
  Vector x_hat;
  Matrix P;
};

struct FilterTrajectory {
  Vector times;
  Matrix estimates;              // (steps + 1) x dim_x
  std::vector<Matrix> covariances;  // empty unless recorded
  std::vector<Matrix> gains;        // empty unless recorded
  Vector trace_P;
};

namespace detail {

inline Matrix symmetrize_clamp(const Matrix& p) { return project_psd(p); }

inline void check_step(const FilterState& s, std::size_t step) {
  if (!s.x_hat.allFinite() || !s.P.allFinite()) {
    throw DivergenceError("filter: non-finite state at step " + std::to_string(step), step);
  }
  if (s.P.trace() < 1e-14) {
    throw DegenerateCovariance("filter: covariance collapsed at step " + std::to_string(step));
  }
}

// Precomputed per-run quantities.
struct ContinuousContext {
  Matrix S;        // H^T R^{-1} H
  Matrix Rinv_H;   // R^{-1} H
};

inline ContinuousContext continuous_context(const ModelBase& model) {
  ContinuousContext c;
  if (model.dim_y > 0) {
    c.Rinv_H = model.R.llt().solve(model.H);
    c.S = model.H.transpose() * c.Rinv_H;
  } else {
    c.Rinv_H = Matrix::Zero(0, model.dim_x);
    c.S = Matrix::Zero(model.dim_x, model.dim_x);
  }
  return c;
}

inline FilterState kalman_bucy_step(const FilterState& s, const Vector& dy, double dt,
                                    const ContinuousModel& model, const FilterConfig& cfg,
                                    const ContinuousContext& ctx, std::size_t step) {
  Vector drift;
  Matrix lambda;
  const CubatureRule* mr = cfg.mean.rule();
  const CubatureRule* rr = cfg.riccati.rule();
  if (cfg.mean.kind() == FunctionalKind::SigmaPoint &&
      cfg.riccati.kind() == FunctionalKind::SigmaPoint && mr->size() == rr->size() &&
      mr->points() == rr->points() && mr->weights() == rr->weights()) {
    const PropagatedPoints pp = propagate(*mr, model.drift, s.x_hat, s.P);
    drift = weighted_mean(*mr, pp);
    lambda = stein_cross_moment(*mr, pp);
  } else {
    drift = eval_mean(cfg.mean, model.drift, s.x_hat, s.P);
    lambda = eval_riccati_cont(cfg.riccati, model.drift, s.x_hat, s.P);
  }
  FilterState out;
  if (model.dim_y > 0) {
    const Vector innovation = dy - model.H * s.x_hat * dt;
    out.x_hat = s.x_hat + drift * dt + s.P * (ctx.Rinv_H.transpose() * innovation);
  } else {
    out.x_hat = s.x_hat + drift * dt;
  }
  const Matrix dp = lambda + lambda.transpose() + cfg.Q_tuned - s.P * ctx.S * s.P;
  out.P = symmetrize_clamp(s.P + dp * dt);
  check_step(out, step);
  return out;
}

}  // namespace detail

/// One Euler step of the filter equations with measurement increment `dy`.
inline FilterState kalman_bucy_step(const FilterState& s, const Vector& dy, double dt,
                                    const ContinuousModel& model, const FilterConfig& cfg) {
  if (!(dt > 0.0)) throw InvalidInput("kalman_bucy_step: dt must be > 0");
  if (dy.size() != model.dim_y) throw InvalidInput("kalman_bucy_step: dY has wrong size");
  return detail::kalman_bucy_step(s, dy, dt, model, cfg, detail::continuous_context(model), 1);
}

struct RunOptions {
  bool record_covariances = true;
  bool record_gains = false;
};

inline FilterTrajectory run_continuous_filter(const SimulatedPath& path,
                                              const ContinuousModel& model,
                                              const FilterConfig& cfg, RunOptions opt = {}) {
  model.validate();
  cfg.validate(model.dim_x, TimeDomain::Continuous);
  if (path.states.cols() != model.dim_x || path.measurement_increments.cols() != model.dim_y) {
    throw InvalidInput("run_continuous_filter: path dimensions do not match the model");
  }
  const auto ctx = detail::continuous_context(model);
  const auto n = static_cast<Eigen::Index>(path.steps());
  FilterTrajectory tr;
  tr.times = path.times;
  tr.estimates.resize(n + 1, model.dim_x);
  tr.trace_P.resize(n + 1);
  FilterState s{cfg.x0_hat, detail::symmetrize_clamp(cfg.P0)};
  auto record = [&](Eigen::Index k) {
    tr.estimates.row(k) = s.x_hat.transpose();
    tr.trace_P(k) = s.P.trace();
    if (opt.record_covariances) tr.covariances.push_back(s.P);
    if (opt.record_gains) {
      tr.gains.push_back(model.dim_y > 0 ? Matrix(s.P * ctx.Rinv_H.transpose())
                                         : Matrix::Zero(model.dim_x, 0));
    }
  };
  record(0);
  for (Eigen::Index k = 0; k < n; ++k) {
    s = detail::kalman_bucy_step(s, path.measurement_increments.row(k).transpose(), path.dt,
                                 model, cfg, ctx, static_cast<std::size_t>(k + 1));
    record(k + 1);
  }
  return tr;
}

/// x^- = L_{x^,P}(f),  P^- = Lambda(f) + Q~.
inline FilterState discrete_predict(const FilterState& s, const DiscreteModel& model,
                                    const FilterConfig& cfg) {
  FilterState out;
  out.x_hat = eval_mean(cfg.mean, model.drift, s.x_hat, s.P);
  out.P = eval_riccati_disc(cfg.riccati, model.drift, s.x_hat, s.P) + cfg.Q_tuned;
  out.P = 0.5 * (out.P + out.P.transpose());
  if (!out.x_hat.allFinite() || !out.P.allFinite()) {
    throw DivergenceError("discrete_predict: non-finite prediction", 0);
  }
  return out;
}

struct UpdateResult {
  FilterState state;
  Matrix K;
};

/// K = P^- H^T (H P^- H^T + R)^{-1},  x^ = x^- + K (y - H x^-),  P = (I - K H) P^-.
inline UpdateResult discrete_update(const FilterState& pred, const Vector& y,
                                    const DiscreteModel& model) {
  if (y.size() != model.dim_y) throw InvalidInput("discrete_update: y has wrong size");
  UpdateResult r;
  if (model.dim_y == 0) {
    r.state = pred;
    r.K = Matrix::Zero(model.dim_x, 0);
    return r;
  }
  const Matrix innov_cov = model.H * pred.P * model.H.transpose() + model.R;
  Eigen::LDLT<Matrix> ldlt(0.5 * (innov_cov + innov_cov.transpose()));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    throw DegenerateCovariance("discrete_update: innovation covariance is singular");
  }
  r.K = ldlt.solve(model.H * pred.P).transpose();
  r.state.x_hat = pred.x_hat + r.K * (y - model.H * pred.x_hat);
  const Matrix i_kh = Matrix::Identity(model.dim_x, model.dim_x) - r.K * model.H;
  r.state.P = i_kh * pred.P;
  r.state.P = 0.5 * (r.state.P + r.state.P.transpose());
  return r;
}

inline FilterTrajectory run_discrete_filter(const SimulatedPath& path, const DiscreteModel& model,
                                            const FilterConfig& cfg, RunOptions opt = {}) {
  model.validate();
  cfg.validate(model.dim_x, TimeDomain::Discrete);
  if (path.states.cols() != model.dim_x || path.measurement_increments.cols() != model.dim_y) {
    throw InvalidInput("run_discrete_filter: path dimensions do not match the model");
  }
  const auto n = static_cast<Eigen::Index>(path.steps());
  FilterTrajectory tr;
  tr.times = path.times;
  tr.estimates.resize(n + 1, model.dim_x);
  tr.trace_P.resize(n + 1);
  FilterState s{cfg.x0_hat, cfg.P0};
  tr.estimates.row(0) = s.x_hat.transpose();
  tr.trace_P(0) = s.P.trace();
  if (opt.record_covariances) tr.covariances.push_back(s.P);
  for (Eigen::Index k = 0; k < n; ++k) {
    const FilterState pred = discrete_predict(s, model, cfg);
    UpdateResult u = discrete_update(pred, path.measurement_increments.row(k).transpose(), model);
    s = std::move(u.state);
    if (!s.x_hat.allFinite() || !s.P.allFinite()) {
      throw DivergenceError("run_discrete_filter: non-finite state",
                            static_cast<std::size_t>(k + 1));
    }
    tr.estimates.row(k + 1) = s.x_hat.transpose();
    tr.trace_P(k + 1) = s.P.trace();
    if (opt.record_covariances) tr.covariances.push_back(s.P);
    if (opt.record_gains) tr.gains.push_back(u.K);
  }
  return tr;
}

}  // namespace filterstab
