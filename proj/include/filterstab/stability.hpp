#pragma once

// Stability certificates and the error bounds they imply.
//
// Continuous time, for t >= T:
//   E|E_t|^2                      <= e_T^2 exp(-2 lambda (t - T)) + u / (2 lambda)
//   P[|E_t|^2 >= thr(t, delta)]   <= exp(-delta),
//   thr(t, delta) = (C_T exp(-2 lambda (t - T)) + u / (2 lambda)) beta(delta),
//   u = tr(Q) + 2 C_lambda lambda_P + tr(S) lambda_P^2,   beta(delta) = e (sqrt(2 delta) + delta).
//
// Discrete time:
//   E|E_k|^2 <= lambda_df^{2k} E|E_0|^2 + (lambda_d^2 [tr(Q) + C_f lambda_P^u] + kappa^2 tr(R)) / (1 - lambda_df^2)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"
#include "filterstab/filters.hpp"
#include "filterstab/functionals.hpp"
#include "filterstab/matrix_measures.hpp"
#include "filterstab/models.hpp"

namespace filterstab {

inline constexpr double kE = 2.718281828459045235360287;

/// beta(delta) = e (sqrt(2 delta) + delta).
inline double beta(double delta) {
  if (!(delta >= 0.0)) throw InvalidInput("beta: delta must be >= 0");
  return kE * (std::sqrt(2.0 * delta) + delta);
}

/// Threshold alpha e (sqrt(2 delta) + delta) exceeded with probability at most exp(-delta) by a
/// non-negative X with E[X^n] <= n^n alpha^n.
inline double bernstein_threshold(double alpha, double delta) {
  if (!(alpha > 0.0)) throw InvalidInput("bernstein_threshold: alpha must be > 0");
  if (!(delta > 0.0)) throw InvalidInput("bernstein_threshold: delta must be > 0");
  return alpha * beta(delta);
}

/// Bound on E(|X|^{2n})^{1/n} for X ~ N(m, P): 4(|m|^2 + |P| (d+2) n), or |P| (d+2) n if m = 0.
inline double chi_square_moment_bound(const Vector& m, const Matrix& p, int n) {
  if (n < 1) throw InvalidInput("chi_square_moment_bound: n must be >= 1");
  require_square(p, "chi_square_moment_bound");
  if (m.size() != p.rows()) throw InvalidInput("chi_square_moment_bound: size mismatch");
  const double d = static_cast<double>(p.rows());
  const double base = spectral_norm(p) * (d + 2.0) * n;
  if (m.squaredNorm() == 0.0) return base;
  return 4.0 * (m.squaredNorm() + base);
}

/// Envelope of x' <= alpha x + beta: x0 e^{alpha t} - (1 - e^{alpha t}) beta / alpha,
/// and x0 + beta t when alpha = 0.
inline double gronwall_continuous(double x0, double alpha, double beta_const, double t) {
  if (alpha == 0.0) return x0 + beta_const * t;
  return x0 * std::exp(alpha * t) + beta_const * std::expm1(alpha * t) / alpha;
}

/// Envelope of x_k <= alpha x_{k-1} + beta: alpha^k x0 + beta (1 - alpha^k) / (1 - alpha).
inline double gronwall_discrete(double x0, double alpha, double beta_const, double k) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidInput("gronwall_discrete: alpha must lie in [0, 1)");
  }
  if (!(beta_const >= 0.0)) throw InvalidInput("gronwall_discrete: beta must be >= 0");
  const double ak = std::pow(alpha, k);
  return ak * x0 + beta_const * (1.0 - ak) / (1.0 - alpha);
}

/// n-th moment envelope of x' <= alpha n x + beta n^2 x^{1-1/n}:
///   (x_{t0}^{1/n} e^{alpha (t - t0)} + (beta n / alpha)(e^{alpha (t - t0)} - 1))^n.
inline double moment_growth_bound(double x0_pow, double alpha, double beta_const, int n, double t,
                                  double t0) {
  if (alpha == 0.0) throw InvalidInput("moment_growth_bound: alpha must be non-zero");
  if (!(beta_const >= 0.0)) throw InvalidInput("moment_growth_bound: beta must be >= 0");
  if (n < 1) throw InvalidInput("moment_growth_bound: n must be >= 1");
  if (!(x0_pow >= 0.0)) throw InvalidInput("moment_growth_bound: x0 must be >= 0");
  const double s = t - t0;
  const double root = std::pow(x0_pow, 1.0 / n) * std::exp(alpha * s) +
                      beta_const * n / alpha * std::expm1(alpha * s);
  return std::pow(root, n);
}

// ---------------------------------------------------------------------------
// Continuous-time certificates
// ---------------------------------------------------------------------------

enum class Provenance { Analytic, Empirical, User };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Analytic: return "analytic";
    case Provenance::Empirical: return "empirical";
    case Provenance::User: return "user";
  }
  return "unknown";
}

struct ContinuousCertificate {
  double lambda = 0.0;    // contraction rate
  double lambda_P = 0.0;  // bound on tr(P_t) for t >= T
  double T = 0.0;         // settle time
  double C_lambda = 0.0;
  double u = 0.0;
  double rho = 0.0;       // growth rate on [0, T]
  double C_T = 0.0;       // concentration constant at T
  double e_T_sq = 0.0;    // bound on E|E_T|^2
  double trace_Q = 0.0;
  double trace_S = 0.0;
  Provenance provenance = Provenance::Analytic;
  bool asymptotic = false;  // constants are the t -> infinity limits of transient bounds
  FunctionalKind kind = FunctionalKind::Ekf;
  std::string construction;
  std::map<std::string, double> details;

  /// u / (2 lambda): the level the mean-square bound settles to.
  double mse_asymptote() const { return u / (2.0 * lambda); }
};

/// e_T^2 exp(-2 lambda (t - T)) + u / (2 lambda).
inline double continuous_mse_bound(const ContinuousCertificate& c, double t) {
  if (t < c.T) throw InvalidInput("continuous_mse_bound: t is before the settle time T");
  return c.e_T_sq * std::exp(-2.0 * c.lambda * (t - c.T)) + c.mse_asymptote();
}

inline double continuous_concentration_threshold(const ContinuousCertificate& c, double t,
                                                 double delta) {
  if (t < c.T) throw InvalidInput("continuous_concentration_threshold: t is before T");
  if (!(delta >= 0.0)) throw InvalidInput("continuous_concentration_threshold: delta < 0");
  return (c.C_T * std::exp(-2.0 * c.lambda * (t - c.T)) + c.mse_asymptote()) * beta(delta);
}

namespace detail {

// u, rho, e_T_sq and C_T from the rate constants already set in `c`.
inline void complete_certificate(ContinuousCertificate& c, const ModelBase& model,
                                 const Vector& x0_hat, double m_f) {
  const Matrix s = model.information();
  c.trace_Q = model.Q.trace();
  c.trace_S = s.trace();
  c.u = c.trace_Q + 2.0 * c.C_lambda * c.lambda_P + c.trace_S * c.lambda_P * c.lambda_P;
  c.rho = m_f + spectral_norm(s) * c.lambda_P;
  const Vector m = model.mu0 - x0_hat;
  const double d = static_cast<double>(model.dim_x);
  const double e0 = m.squaredNorm() + model.Sigma0.trace();
  const double chi = m.squaredNorm() + spectral_norm(model.Sigma0) * (d + 2.0);
  c.e_T_sq = gronwall_continuous(e0, 2.0 * c.rho, c.u, c.T);
  if (c.T == 0.0) {
    c.C_T = 4.0 * chi;
  } else if (c.rho > 0.0) {
    c.C_T = 4.0 * (chi + c.u / (8.0 * c.rho)) * std::exp(2.0 * c.rho * c.T);
  } else {
    // Non-expansive start: the growth term of the n-th moment envelope stays finite.
    c.C_T = gronwall_continuous(4.0 * chi, 2.0 * c.rho, c.u, c.T);
  }
}

inline void require_scalar_information(const ModelBase& model, double& s) {
  const auto si = model.scalar_information();
  if (!si || !(*si > 0.0)) {
    throw CertificateError("full_observation",
                           "H^T R^{-1} H is not a positive multiple of the identity");
  }
  s = *si;
}

}  // namespace detail

/// Logarithmic Lipschitz constants with their origin.
struct DriftConstants {
  double M = 0.0;
  double N = 0.0;
  Provenance provenance = Provenance::Analytic;
};

/// Known constants of the model, or a sampled estimate on [-box, box]^d.
inline DriftConstants drift_constants(const ModelBase& model, double box = 5.0,
                                      std::size_t budget = 20000) {
  if (model.known_M_f && model.known_N_f) {
    return {*model.known_M_f, *model.known_N_f, Provenance::Analytic};
  }
  const auto est =
      log_lipschitz_estimate(model.drift.jacobian, Box::cube(model.dim_x, -box, box), budget);
  return {est.m_hat, est.n_hat, Provenance::Empirical};
}

/// Certificate for a contractive drift (M(f) < 0) with S = s I: T = 0, lambda = -M(f),
/// lambda_P = tr(P0) + tr(Q~) / (2 lambda), C_lambda = 0 (EKF) or -lambda - N(f) + tr(S) lambda_P.
inline ContinuousCertificate contractive_certificate(const ContinuousModel& model,
                                                     const FilterConfig& cfg,
                                                     std::optional<DriftConstants> constants = {}) {
  model.validate();
  cfg.validate(model.dim_x, TimeDomain::Continuous);
  double s = 0.0;
  detail::require_scalar_information(model, s);
  const DriftConstants k = constants ? *constants : drift_constants(model);
  if (!(k.M < 0.0)) {
    throw CertificateError("contractivity",
                           "M(f) = " + std::to_string(k.M) + " is not negative");
  }
  ContinuousCertificate c;
  c.kind = cfg.mean.kind();
  c.construction = "contractive";
  c.provenance = k.provenance;
  c.lambda = -k.M;
  c.lambda_P = cfg.P0.trace() + cfg.Q_tuned.trace() / (2.0 * c.lambda);
  const double tr_s = s * static_cast<double>(model.dim_x);
  c.C_lambda = c.kind == FunctionalKind::Ekf ? 0.0 : -c.lambda - k.N + tr_s * c.lambda_P;
  c.C_lambda = std::max(0.0, c.C_lambda);
  c.T = 0.0;
  detail::complete_certificate(c, model, cfg.x0_hat, k.M);
  c.details["M_f"] = k.M;
  c.details["N_f"] = k.N;
  return c;
}

/// Limiting lower bound on lambda_min(P_t) for a fully observed model:
///   (lambda_min(Q~)/d) / (sqrt(lambda_min(Q~) lambda_max(S) / d + N(f)^2) - N(f)).
inline double inflation_mineig_bound(const ModelBase& model, const Matrix& q_tuned,
                                     std::optional<double> n_f = {}) {
  model.validate();
  const double n = n_f ? *n_f : drift_constants(model).N;
  const double d = static_cast<double>(model.dim_x);
  const double qmin = std::max(0.0, lambda_min_sym(q_tuned));
  const double smax = lambda_max_sym(model.information());
  if (qmin == 0.0) return 0.0;
  const double den = std::sqrt(qmin * smax / d + n * n) - n;
  if (!(den > 0.0)) throw InvalidInput("inflation_mineig_bound: degenerate denominator");
  return (qmin / d) / den;
}

/// Smallest q with inflation_mineig_bound(q I) >= (M(f) + target_lambda) / s.
inline Matrix required_inflation(const ModelBase& model, double target_lambda,
                                 std::optional<DriftConstants> constants = {}) {
  model.validate();
  if (!(target_lambda > 0.0)) throw InvalidInput("required_inflation: target must be > 0");
  double s = 0.0;
  detail::require_scalar_information(model, s);
  const DriftConstants k = constants ? *constants : drift_constants(model);
  const double need = (k.M + target_lambda) / s;
  const Eigen::Index d = model.dim_x;
  if (need <= 0.0) return Matrix::Zero(d, d);
  auto bound = [&](double q) {
    return inflation_mineig_bound(model, q * Matrix::Identity(d, d), k.N);
  };
  double hi = 1.0;
  int doublings = 0;
  while (bound(hi) < need) {
    hi *= 2.0;
    if (++doublings > 200) {
      throw CertificateError("inflation", "no finite inflation reaches the target rate");
    }
  }
  double lo = 0.0;
  while (hi - lo > 1e-7 * hi) {
    const double mid = 0.5 * (lo + hi);
    (bound(mid) >= need ? hi : lo) = mid;
  }
  return hi * Matrix::Identity(d, d);
}

struct IntegratedVelocityOptions {
  double ell_g = kVelocityDampingSlopeMin;     // lower bound on g'
  double g_prime_max = kVelocityDampingSlopeMax;
  std::optional<double> q_tuned1;  // defaults to q1
  std::optional<double> q_tuned2;  // defaults to q2
  Matrix P0 = 1e-2 * Matrix::Identity(2, 2);
  Vector x0_hat = Vector::Zero(2);
  std::optional<double> T;         // default: e^{-2 ell_g T} = 0.01
  int lambda12_grid = 4000;
};

namespace detail {

/// mu of [[a1 - s P11, a2], [-s P12, -g']]; convex in (P11, P12, g') jointly.
inline double iv_mu(double a1, double a2, double s, double p11, double p12, double gp) {
  Matrix a(2, 2);
  a << a1 - s * p11, a2, -s * p12, -gp;
  return log_norm_mu(a);
}

struct IvBox {
  double p11_lo, p11_hi, p12_lo, p12_hi, g_lo, g_hi;
};

/// Supremum of iv_mu over the box; a convex function peaks at a vertex.
inline double iv_worst_mu(double a1, double a2, double s, const IvBox& b) {
  double worst = -std::numeric_limits<double>::infinity();
  for (double p11 : {b.p11_lo, b.p11_hi})
    for (double p12 : {b.p12_lo, b.p12_hi})
      for (double gp : {b.g_lo, b.g_hi}) worst = std::max(worst, iv_mu(a1, a2, s, p11, p12, gp));
  return worst;
}

struct IvCandidate {
  double lambda12, c12, p11_lo, p11_hi, lambda;
};

inline IvCandidate iv_candidate(const IntegratedVelocityParams& p, double s, double q1t,
                                double c22, double ell, double gmax, double lambda12) {
  IvCandidate c{};
  c.lambda12 = lambda12;
  c.c12 = p.a2 * c22 / lambda12;
  c.p11_lo = (p.a1 + std::sqrt(s * q1t + p.a1 * p.a1)) / s;
  c.p11_hi = (p.a1 + std::sqrt(s * (q1t + 2.0 * p.a2 * c.c12) + p.a1 * p.a1)) / s;
  c.lambda = -iv_worst_mu(p.a1, p.a2, s, {c.p11_lo, c.p11_hi, 0.0, c.c12, ell, gmax});
  return c;
}

}  // namespace detail

/// Element-wise certificate for the EKF on the integrated velocity model. All constants
/// are limiting values (asymptotic flag set). lambda_12 is swept over its admissible
/// interval; the smallest lambda_12 reaching the best lambda is kept.
inline ContinuousCertificate integrated_velocity_certificate(
    const IntegratedVelocityParams& p, const IntegratedVelocityOptions& opt = {}) {
  p.validate();
  if (!(opt.ell_g > 0.0)) {
    throw CertificateError("slope_lower_bound", "inf g' must be bounded below by ell_g > 0");
  }
  if (!(opt.g_prime_max >= opt.ell_g)) {
    throw InvalidInput("integrated_velocity_certificate: g_prime_max < ell_g");
  }
  if (opt.P0.rows() != 2 || opt.P0.cols() != 2 || opt.P0(0, 1) < 0.0) {
    throw CertificateError("initial_cross_covariance", "P0 must be 2x2 with P0_12 >= 0");
  }
  if (opt.lambda12_grid < 2) throw InvalidInput("integrated_velocity_certificate: grid < 2");
  const double q1t = opt.q_tuned1.value_or(p.q1);
  const double q2t = opt.q_tuned2.value_or(p.q2);
  if (!(q1t > 0.0) || !(q2t > 0.0)) throw InvalidInput("tuned noise must be positive");
  const double s = p.h * p.h / p.r;
  const double ell = opt.ell_g;
  const double c22 = q2t / (2.0 * ell);
  const double lambda12_max = ell + std::sqrt(s * q1t + p.a1 * p.a1);

  detail::IvCandidate best{};
  best.lambda = -std::numeric_limits<double>::infinity();
  int best_index = -1;
  std::vector<detail::IvCandidate> grid;
  grid.reserve(static_cast<std::size_t>(opt.lambda12_grid));
  for (int i = 1; i <= opt.lambda12_grid; ++i) {
    // open interval: stop one step short of the upper end
    const double l12 = lambda12_max * i / (opt.lambda12_grid + 1.0);
    grid.push_back(detail::iv_candidate(p, s, q1t, c22, ell, opt.g_prime_max, l12));
    if (grid.back().lambda > best.lambda + 1e-12) {
      best = grid.back();
      best_index = i - 1;
    }
  }
  // Tighten the left edge of the optimal plateau between neighbouring grid points.
  if (best_index > 0) {
    double lo = grid[static_cast<std::size_t>(best_index - 1)].lambda12;
    double hi = best.lambda12;
    const double target = best.lambda;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto c = detail::iv_candidate(p, s, q1t, c22, ell, opt.g_prime_max, mid);
      if (c.lambda >= target - 1e-12) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    best = detail::iv_candidate(p, s, q1t, c22, ell, opt.g_prime_max, hi);
  }
  if (!(best.lambda > 0.0)) {
    throw CertificateError("contractivity",
                           "J_f - P S is not uniformly contractive; increase covariance inflation");
  }

  const ContinuousModel model = builtin_integrated_velocity(p);
  ContinuousCertificate c;
  c.kind = FunctionalKind::Ekf;
  c.construction = "integrated_velocity";
  c.provenance = Provenance::Analytic;
  c.asymptotic = true;
  c.lambda = best.lambda;
  c.lambda_P = best.p11_hi + c22;
  c.C_lambda = 0.0;
  c.T = opt.T.value_or(std::log(100.0) / (2.0 * ell));
  if (!(c.T >= 0.0)) throw InvalidInput("integrated_velocity_certificate: T must be >= 0");
  detail::complete_certificate(c, model, opt.x0_hat, *model.known_M_f);
  c.details["lambda12"] = best.lambda12;
  c.details["C22"] = c22;
  c.details["C12"] = best.c12;
  c.details["P11_lower"] = best.p11_lo;
  c.details["P11_upper"] = best.p11_hi;
  c.details["lambda12_max"] = lambda12_max;
  c.details["s"] = s;
  return c;
}

// ---------------------------------------------------------------------------
// Discrete-time certificates
// ---------------------------------------------------------------------------

struct DiscreteCertificate {
  double lambda_d = 1.0;
  double lambda_df = 0.0;
  double kappa = 0.0;
  double lambda_P_pred = 0.0;
  double lambda_P_upd = 0.0;
  double C_f = 0.0;
  double eta = 0.0;
  double u_d = 0.0;
  double trace_Q = 0.0;
  double trace_R = 0.0;
  double jf_norm = 0.0;
  Provenance lambda_d_provenance = Provenance::Empirical;
  Provenance trace_provenance = Provenance::User;
  FunctionalKind kind = FunctionalKind::Ekf;
};

struct DiscreteCertificateOptions {
  std::optional<double> lambda_d;  // analytic value; skips sampling
  std::optional<double> jf_norm;   // overrides the model's known |J_f|
  std::optional<double> C_f;       // overrides the variant default (0 for EKF, |J_f| otherwise)
  std::size_t samples = 2000;
  std::uint64_t seed = 7;
  Provenance trace_provenance = Provenance::User;
};

/// sup |I - K H| over random P^- with tr(P^-) <= lambda_P_pred, K = P^- H^T (H P^- H^T + R)^{-1}.
inline double sampled_gain_contraction(const ModelBase& model, double lambda_P_pred,
                                       std::size_t samples, std::uint64_t seed) {
  const Eigen::Index d = model.dim_x;
  const Matrix eye = Matrix::Identity(d, d);
  if (model.dim_y == 0) return 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    Matrix f(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) f(i, j) = normal(rng);
    Matrix pm = f * f.transpose();
    // half the samples on the boundary tr = lambda_P_pred
    const double tr = k % 2 == 0 ? lambda_P_pred : lambda_P_pred * unit(rng);
    pm *= tr / std::max(pm.trace(), 1e-300);
    const Matrix innov = model.H * pm * model.H.transpose() + model.R;
    const Matrix gain = innov.ldlt().solve(model.H * pm).transpose();
    worst = std::max(worst, spectral_norm(eye - gain * model.H));
  }
  return worst;
}

/// Trace bounds on the predicted and updated covariances from |J_f| < 1:
/// tr(P^-_k) <= |J_f|^2 tr(P_{k-1}) + tr(Q~) and tr(P_k) <= tr(P^-_k).
struct TraceBounds {
  double pred = 0.0;
  double upd = 0.0;
};

inline TraceBounds discrete_trace_bounds(double jf_norm, double trace_q_tuned, double trace_p0) {
  if (!(jf_norm >= 0.0 && jf_norm < 1.0)) {
    throw CertificateError("contraction", "trace bounds need |J_f| < 1");
  }
  const double a2 = jf_norm * jf_norm;
  const double pred = std::max(a2 * trace_p0 + trace_q_tuned, trace_q_tuned / (1.0 - a2));
  return {pred, pred};
}

inline DiscreteCertificate discrete_certificate(const DiscreteModel& model, const FilterConfig& cfg,
                                                double lambda_P_pred, double lambda_P_upd,
                                                const DiscreteCertificateOptions& opt = {}) {
  model.validate();
  cfg.validate(model.dim_x, TimeDomain::Discrete);
  if (!(lambda_P_pred > 0.0) || !(lambda_P_upd >= 0.0) || lambda_P_upd > lambda_P_pred * (1 + 1e-12)) {
    throw InvalidInput("discrete_certificate: need 0 <= lambda_P_upd <= lambda_P_pred");
  }
  DiscreteCertificate c;
  c.kind = cfg.mean.kind();
  c.lambda_P_pred = lambda_P_pred;
  c.lambda_P_upd = lambda_P_upd;
  c.trace_provenance = opt.trace_provenance;
  if (opt.jf_norm) {
    c.jf_norm = *opt.jf_norm;
  } else if (model.known_jf_norm) {
    c.jf_norm = *model.known_jf_norm;
  } else {
    c.jf_norm = log_lipschitz_estimate(model.drift.jacobian, Box::cube(model.dim_x, -5.0, 5.0),
                                       20000)
                    .jacobian_norm_hat;
  }
  const double h_norm = spectral_norm(model.H);
  const double rinv_norm =
      model.dim_y > 0 ? 1.0 / lambda_min_sym(model.R) : 0.0;
  c.kappa = lambda_P_pred * h_norm * rinv_norm;
  if (opt.lambda_d) {
    c.lambda_d = *opt.lambda_d;
    c.lambda_d_provenance = Provenance::Analytic;
  } else {
    c.lambda_d = std::max(1.0, sampled_gain_contraction(model, lambda_P_pred, opt.samples, opt.seed));
    c.lambda_d_provenance = Provenance::Empirical;
  }
  c.lambda_df = c.jf_norm * c.lambda_d;
  c.C_f = opt.C_f.value_or(c.kind == FunctionalKind::Ekf ? 0.0 : c.jf_norm);
  c.eta = c.lambda_d * std::sqrt(c.C_f * lambda_P_upd);
  c.trace_Q = model.Q.trace();
  c.trace_R = model.R.trace();
  c.u_d = c.lambda_d * c.lambda_d * c.trace_Q + c.kappa * c.kappa * c.trace_R;
  if (!(c.lambda_df < 1.0)) {
    throw CertificateError("contraction", "lambda_df = " + std::to_string(c.lambda_df) + " >= 1");
  }
  return c;
}

inline double discrete_mse_asymptote(const DiscreteCertificate& c) {
  return (c.lambda_d * c.lambda_d * (c.trace_Q + c.C_f * c.lambda_P_upd) +
          c.kappa * c.kappa * c.trace_R) /
         (1.0 - c.lambda_df * c.lambda_df);
}

inline double discrete_mse_bound(const DiscreteCertificate& c, const Vector& mu0,
                                 const Vector& x0_hat, const Matrix& sigma0, long k) {
  if (k < 0) throw InvalidInput("discrete_mse_bound: k must be >= 0");
  const double e0 = (mu0 - x0_hat).squaredNorm() + sigma0.trace();
  return std::pow(c.lambda_df, 2.0 * static_cast<double>(k)) * e0 + discrete_mse_asymptote(c);
}

inline double discrete_concentration_threshold(const DiscreteCertificate& c, const Vector& mu0,
                                               const Vector& x0_hat, const Matrix& sigma0, long k,
                                               double delta) {
  if (k < 0) throw InvalidInput("discrete_concentration_threshold: k must be >= 0");
  if (!(delta >= 0.0)) throw InvalidInput("discrete_concentration_threshold: delta < 0");
  const double start = (mu0 - x0_hat).norm() + std::sqrt(spectral_norm(sigma0));
  const double inner = std::pow(c.lambda_df, static_cast<double>(k)) * start +
                       (std::sqrt(c.u_d) + c.eta) / (1.0 - c.lambda_df);
  return 4.0 * beta(delta) * inner * inner;
}

struct NaiveComparison {
  double naive_mse = 0.0;     // d_y r / h^2
  double filter_bound = 0.0;  // limiting discrete mean-square bound
  bool filter_better = false;
};

/// Compares the filter's limiting bound with using y_k / h directly as the estimate.
inline NaiveComparison naive_vs_filter(const DiscreteModel& model, const DiscreteCertificate& c) {
  model.validate();
  if (model.dim_y != model.dim_x || model.dim_y == 0) {
    throw InvalidInput("naive_vs_filter: need H = h I (square)");
  }
  const double h = model.H(0, 0);
  const double r = model.R(0, 0);
  const Eigen::Index d = model.dim_y;
  const Matrix eye = Matrix::Identity(d, d);
  if (h == 0.0 || (model.H - h * eye).cwiseAbs().maxCoeff() > 1e-12 * std::abs(h) ||
      (model.R - r * eye).cwiseAbs().maxCoeff() > 1e-12 * std::abs(r)) {
    throw InvalidInput("naive_vs_filter: need H = h I and R = r I");
  }
  NaiveComparison out;
  out.naive_mse = static_cast<double>(d) * r / (h * h);
  out.filter_bound = discrete_mse_asymptote(c);
  out.filter_better = out.filter_bound < out.naive_mse;
  return out;
}

}  // namespace filterstab
