#pragma once

// State-space models and ground-truth simulation.
//
// Continuous time:   dX = f(X) dt + Q^{1/2} dW,   dY = H X dt + R^{1/2} dV
// Discrete time:     X_k = f(X_{k-1}) + Q^{1/2} W_k,   Y_k = H X_k + R^{1/2} V_k

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"
#include "filterstab/functionals.hpp"
#include "filterstab/matrix_measures.hpp"
#include "filterstab/quadrature.hpp"
#include "filterstab/rng.hpp"

namespace filterstab {

namespace detail {

inline void require_shape(const Matrix& m, Eigen::Index r, Eigen::Index c, const char* what) {
  if (m.rows() != r || m.cols() != c) {
    throw InvalidInput(std::string("model: ") + what + " has shape " + std::to_string(m.rows()) +
                       "x" + std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" +
                       std::to_string(c));
  }
}

inline void require_psd(const Matrix& m, const char* what, bool strict) {
  require_finite(m, what);
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw InvalidInput(std::string("model: ") + what + " is not symmetric");
  }
  const double lo = lambda_min_sym(m);
  if (strict ? !(lo > 0.0) : lo < -1e-12) {
    throw InvalidInput(std::string("model: ") + what +
                       (strict ? " is not positive-definite" : " is not positive-semidefinite"));
  }
}

}  // namespace detail

/// Fields shared by the continuous- and discrete-time models.
struct ModelBase {
  std::string name = "custom";
  Eigen::Index dim_x = 0;
  Eigen::Index dim_y = 0;
  VectorField drift;  // f
  Matrix Q;           // state noise covariance (per unit time / per step)
  Matrix H;           // dim_y x dim_x
  Matrix R;           // measurement noise covariance
  Vector mu0;
  Matrix Sigma0;
  std::optional<double> known_M_f;
  std::optional<double> known_N_f;
  std::optional<double> known_jf_norm;

  /// Shapes, symmetry and definiteness. Q and Sigma0 may be singular (noise-free
  /// simulations); R must be positive-definite since the filters invert it.
  void validate() const {
    if (dim_x < 1 || dim_y < 0) throw InvalidInput("model: invalid dimensions");
    if (!drift.value || !drift.jacobian) throw InvalidInput("model: drift not set");
    detail::require_shape(Q, dim_x, dim_x, "Q");
    detail::require_shape(H, dim_y, dim_x, "H");
    detail::require_shape(R, dim_y, dim_y, "R");
    detail::require_shape(Sigma0, dim_x, dim_x, "Sigma0");
    if (mu0.size() != dim_x) throw InvalidInput("model: mu0 has wrong size");
    require_finite(H, "model H");
    require_finite(mu0, "model mu0");
    detail::require_psd(Q, "Q", false);
    detail::require_psd(Sigma0, "Sigma0", false);
    if (dim_y > 0) detail::require_psd(R, "R", true);
    if (known_M_f && known_N_f && *known_N_f > *known_M_f) {
      throw InvalidInput("model: known N(f) exceeds known M(f)");
    }
  }

  /// S = H^T R^{-1} H.
  Matrix information() const {
    if (dim_y == 0) return Matrix::Zero(dim_x, dim_x);
    return H.transpose() * R.llt().solve(H);
  }

  /// s if S = s I (relative tolerance `tol`), otherwise empty.
  std::optional<double> scalar_information(double tol = 1e-10) const {
    const Matrix s = information();
    const double scale = s.trace() / static_cast<double>(dim_x);
    const Matrix residual = s - scale * Matrix::Identity(dim_x, dim_x);
    if (residual.cwiseAbs().maxCoeff() > tol * std::max(1.0, std::abs(scale))) return std::nullopt;
    return scale;
  }
};

struct ContinuousModel : ModelBase {};
struct DiscreteModel : ModelBase {};

/// Ground-truth path. Row k of `states` is X at `times(k)`; row k of
/// `measurement_increments` is the increment of Y over [times(k), times(k+1)]
/// (continuous) or Y at times(k+1) (discrete). `states` has one more row than
/// the increments.
struct SimulatedPath {
  double dt = 0.0;
  Vector times;
  Matrix states;
  Matrix measurement_increments;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;

  std::size_t steps() const { return static_cast<std::size_t>(measurement_increments.rows()); }
};

/// Euler-Maruyama path:
///   X_{k+1} = X_k + f(X_k) dt + Q^{1/2} dW_k,   dY_k = H X_k dt + R^{1/2} dV_k.
inline SimulatedPath simulate_path(const ContinuousModel& model, double dt, double horizon,
                                   std::uint64_t seed, std::uint64_t path_index = 0) {
  model.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("simulate_path: dt must be > 0");
  if (!(horizon >= dt)) throw InvalidInput("simulate_path: horizon must be >= dt");
  const auto n = static_cast<Eigen::Index>(std::llround(horizon / dt));
  const Matrix q_half = matrix_sqrt(model.Q);
  const Matrix r_half = model.dim_y > 0 ? matrix_sqrt(model.R) : Matrix();
  const Matrix sigma0_half = matrix_sqrt(model.Sigma0);
  const double sqrt_dt = std::sqrt(dt);

  auto init_rng = make_stream(seed, path_index, NoiseStream::Initial);
  auto state_rng = make_stream(seed, path_index, NoiseStream::State);
  auto meas_rng = make_stream(seed, path_index, NoiseStream::Measurement);

  SimulatedPath path;
  path.dt = dt;
  path.seed = seed;
  path.path_index = path_index;
  path.times.resize(n + 1);
  path.states.resize(n + 1, model.dim_x);
  path.measurement_increments.resize(n, model.dim_y);

  Vector x = model.mu0 + sigma0_half * standard_normal(model.dim_x, init_rng);
  path.times(0) = 0.0;
  path.states.row(0) = x.transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (model.dim_y > 0) {
      const Vector dv = sqrt_dt * standard_normal(model.dim_y, meas_rng);
      path.measurement_increments.row(k) = (model.H * x * dt + r_half * dv).transpose();
    }
    const Vector dw = sqrt_dt * standard_normal(model.dim_x, state_rng);
    x = x + model.drift.value(x) * dt + q_half * dw;
    if (!x.allFinite()) {
      throw DivergenceError("simulate_path: non-finite state", static_cast<std::size_t>(k + 1));
    }
    path.times(k + 1) = static_cast<double>(k + 1) * dt;
    path.states.row(k + 1) = x.transpose();
  }
  return path;
}

/// X_k = f(X_{k-1}) + Q^{1/2} W_k,  Y_k = H X_k + R^{1/2} V_k for k = 1..steps.
inline SimulatedPath simulate_discrete_path(const DiscreteModel& model, std::size_t steps,
                                            std::uint64_t seed, std::uint64_t path_index = 0) {
  model.validate();
  const auto n = static_cast<Eigen::Index>(steps);
  const Matrix q_half = matrix_sqrt(model.Q);
  const Matrix r_half = model.dim_y > 0 ? matrix_sqrt(model.R) : Matrix();
  const Matrix sigma0_half = matrix_sqrt(model.Sigma0);

  auto init_rng = make_stream(seed, path_index, NoiseStream::Initial);
  auto state_rng = make_stream(seed, path_index, NoiseStream::State);
  auto meas_rng = make_stream(seed, path_index, NoiseStream::Measurement);

  SimulatedPath path;
  path.dt = 1.0;
  path.seed = seed;
  path.path_index = path_index;
  path.times.resize(n + 1);
  path.states.resize(n + 1, model.dim_x);
  path.measurement_increments.resize(n, model.dim_y);

  Vector x = model.mu0 + sigma0_half * standard_normal(model.dim_x, init_rng);
  path.times(0) = 0.0;
  path.states.row(0) = x.transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    x = model.drift.value(x) + q_half * standard_normal(model.dim_x, state_rng);
    if (!x.allFinite()) {
      throw DivergenceError("simulate_discrete_path: non-finite state",
                            static_cast<std::size_t>(k + 1));
    }
    if (model.dim_y > 0) {
      path.measurement_increments.row(k) =
          (model.H * x + r_half * standard_normal(model.dim_y, meas_rng)).transpose();
    }
    path.times(k + 1) = static_cast<double>(k + 1);
    path.states.row(k + 1) = x.transpose();
  }
  return path;
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

/// Fully observed three-dimensional model with contractive drift
///   f(x) = ( -x3 (1 + 1/(1 + x3^2)) - 3 x1,
///            -x1 - x2 - x3,
///            x1^2 exp(-x1^2 - x3^2) - x1 - 2 x3 ).
inline VectorField contractive3d_drift() {
  auto value = [](const Vector& x) -> Vector {
    const double x1 = x(0), x2 = x(1), x3 = x(2);
    Vector f(3);
    f(0) = -x3 * (1.0 + 1.0 / (1.0 + x3 * x3)) - 3.0 * x1;
    f(1) = -x1 - x2 - x3;
    f(2) = x1 * x1 * std::exp(-x1 * x1 - x3 * x3) - x1 - 2.0 * x3;
    return f;
  };
  auto jacobian = [](const Vector& x) -> Matrix {
    const double x1 = x(0), x3 = x(2);
    const double e = std::exp(-x1 * x1 - x3 * x3);
    const double den = 1.0 + x3 * x3;
    Matrix j(3, 3);
    j << -3.0, 0.0, -1.0 - (1.0 - x3 * x3) / (den * den),
        -1.0, -1.0, -1.0,
        2.0 * x1 * e * (1.0 - x1 * x1) - 1.0, 0.0, -2.0 * x1 * x1 * x3 * e - 2.0;
    return j;
  };
  return VectorField{value, jacobian};
}

inline ContinuousModel builtin_contractive3d() {
  ContinuousModel m;
  m.name = "contractive3d";
  m.dim_x = 3;
  m.dim_y = 3;
  m.drift = contractive3d_drift();
  m.Q = Matrix::Identity(3, 3);
  m.H = Matrix::Identity(3, 3);
  m.R = 8.0 * Matrix::Identity(3, 3);
  m.mu0 = Vector::Zero(3);
  m.Sigma0 = 1e-2 * Matrix::Identity(3, 3);
  m.known_M_f = -0.5947;
  m.known_N_f = -4.5046;
  return m;
}

/// Velocity damping g(x) = x (1 + sin x / (1 + x^2)) of the integrated velocity model.
inline double velocity_damping(double x) { return x * (1.0 + std::sin(x) / (1.0 + x * x)); }

inline double velocity_damping_derivative(double x) {
  const double den = 1.0 + x * x;
  return 1.0 + ((x * x * x + x) * std::cos(x) - (x * x - 1.0) * std::sin(x)) / (den * den);
}

/// Range of g' over the real line, from a dense scan plus refinement (see tests).
inline constexpr double kVelocityDampingSlopeMin = 0.419;
inline constexpr double kVelocityDampingSlopeMax = 1.581;

struct IntegratedVelocityParams {
  double a1 = 0.0;
  double a2 = 1.0;
  double q1 = 0.05;
  double q2 = 0.05;
  double h = 1.0;
  double r = 0.05;
  Vector mu0 = Vector::Zero(2);
  Matrix Sigma0 = 1e-2 * Matrix::Identity(2, 2);

  void validate() const {
    if (!(a2 > 0.0) || !(q1 > 0.0) || !(q2 > 0.0) || !(r > 0.0) || h == 0.0 ||
        !std::isfinite(a1) || !std::isfinite(a2) || !std::isfinite(h)) {
      throw InvalidInput("integrated_velocity: need a2, q1, q2, r > 0 and h != 0");
    }
  }
};

/// d[X1, X2] = [a1 X1 + a2 X2, -g(X2)] dt + diag(q1, q2)^{1/2} dW,  dY = h X1 dt + r^{1/2} dV.
inline ContinuousModel builtin_integrated_velocity(const IntegratedVelocityParams& p = {}) {
  p.validate();
  ContinuousModel m;
  m.name = "integrated_velocity";
  m.dim_x = 2;
  m.dim_y = 1;
  const double a1 = p.a1, a2 = p.a2;
  m.drift.value = [a1, a2](const Vector& x) -> Vector {
    Vector f(2);
    f << a1 * x(0) + a2 * x(1), -velocity_damping(x(1));
    return f;
  };
  m.drift.jacobian = [a1, a2](const Vector& x) -> Matrix {
    Matrix j(2, 2);
    j << a1, a2, 0.0, -velocity_damping_derivative(x(1));
    return j;
  };
  m.Q = Vector::Map(std::array<double, 2>{p.q1, p.q2}.data(), 2).asDiagonal();
  m.H = Matrix(1, 2);
  m.H << p.h, 0.0;
  m.R = Matrix::Constant(1, 1, p.r);
  m.mu0 = p.mu0;
  m.Sigma0 = p.Sigma0;
  // mu/nu of [[a1, a2], [0, -g']] are convex/concave in g', so the extremes sit at the
  // ends of the slope range.
  auto jac_at = [&](double slope) {
    Matrix j(2, 2);
    j << a1, a2, 0.0, -slope;
    return j;
  };
  const Matrix lo = jac_at(kVelocityDampingSlopeMin);
  const Matrix hi = jac_at(kVelocityDampingSlopeMax);
  m.known_M_f = std::max(log_norm_mu(lo), log_norm_mu(hi));
  m.known_N_f = std::min(log_norm_nu(lo), log_norm_nu(hi));
  m.known_jf_norm = std::max(spectral_norm(lo), spectral_norm(hi));
  return m;
}

/// dX = A X dt + Q^{1/2} dW, dY = H X dt + R^{1/2} dV with exact constants from A.
inline ContinuousModel builtin_linear(const Matrix& a, const Matrix& q, const Matrix& h,
                                      const Matrix& r, const Vector& mu0, const Matrix& sigma0) {
  ContinuousModel m;
  m.name = "linear";
  m.dim_x = a.rows();
  m.dim_y = h.rows();
  m.drift = affine_field(a, Vector::Zero(a.rows()));
  m.Q = q;
  m.H = h;
  m.R = r;
  m.mu0 = mu0;
  m.Sigma0 = sigma0;
  require_square(a, "linear model A");
  m.known_M_f = log_norm_mu(a);
  m.known_N_f = log_norm_nu(a);
  m.known_jf_norm = spectral_norm(a);
  m.validate();
  return m;
}

inline DiscreteModel discrete_linear(const Matrix& a, const Vector& b, const Matrix& q,
                                     const Matrix& h, const Matrix& r, const Vector& mu0,
                                     const Matrix& sigma0) {
  DiscreteModel m;
  m.name = "discrete_linear";
  m.dim_x = a.rows();
  m.dim_y = h.rows();
  m.drift = affine_field(a, b);
  m.Q = q;
  m.H = h;
  m.R = r;
  m.mu0 = mu0;
  m.Sigma0 = sigma0;
  require_square(a, "discrete linear model A");
  m.known_M_f = log_norm_mu(a);
  m.known_N_f = log_norm_nu(a);
  m.known_jf_norm = spectral_norm(a);
  m.validate();
  return m;
}

}  // namespace filterstab
