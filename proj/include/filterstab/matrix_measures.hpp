#pragma once

// Logarithmic norms, eigenvalue extremes and sampled logarithmic Lipschitz
// constants of vector fields.
//
//   mu(A) = 1/2 lambda_max(A + A^T),   nu(A) = 1/2 lambda_min(A + A^T) = -mu(-A)
//   M(g)  = sup_z mu[J_g(z)],          N(g)  = inf_z nu[J_g(z)]
//
// All eigenvalue work goes through a dense symmetric eigensolver; the
// dimensions handled here are small (<= 10).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"

namespace filterstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Jacobian of a vector field, evaluated pointwise.
using JacobianFn = std::function<Matrix(const Vector&)>;

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw InvalidInput(std::string(what) + ": expected a non-empty square matrix");
  }
}

/// Eigenvalues (ascending) of the symmetric part of `a`.
inline Vector symmetric_eigenvalues(const Matrix& a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_max_sym(const Matrix& a) { return symmetric_eigenvalues(a).maxCoeff(); }
inline double lambda_min_sym(const Matrix& a) { return symmetric_eigenvalues(a).minCoeff(); }

/// Logarithmic norm mu(A) = 1/2 lambda_max(A + A^T).
inline double log_norm_mu(const Matrix& a) {
  require_square(a, "log_norm_mu");
  require_finite(a, "log_norm_mu");
  return lambda_max_sym(a);
}

/// nu(A) = 1/2 lambda_min(A + A^T).
inline double log_norm_nu(const Matrix& a) {
  require_square(a, "log_norm_nu");
  require_finite(a, "log_norm_nu");
  return lambda_min_sym(a);
}

/// Spectral norm (largest singular value). Works for rectangular matrices.
inline double spectral_norm(const Matrix& a) {
  require_finite(a, "spectral_norm");
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/// Axis-aligned box [lower_i, upper_i] in R^d.
struct Box {
  Vector lower;
  Vector upper;

  static Box cube(Eigen::Index dim, double lo, double hi) {
    return Box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  }

  Eigen::Index dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() == 0 || lower.size() != upper.size()) {
      throw InvalidInput("box: empty or inconsistent bounds");
    }
    if (!lower.allFinite() || !upper.allFinite()) throw InvalidInput("box: non-finite bounds");
    if ((upper.array() < lower.array()).any()) throw InvalidInput("box: empty interval");
  }

  Vector clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

/// Inner (sampled) approximation of M(g), N(g) and the Lipschitz constant on a box.
/// m_hat <= M(g) and n_hat >= N(g); the true constants may be more extreme.
struct LogLipschitzEstimate {
  double m_hat = -std::numeric_limits<double>::infinity();
  double n_hat = std::numeric_limits<double>::infinity();
  double jacobian_norm_hat = 0.0;
  std::size_t sample_count = 0;
  Box domain_box;
  Vector argmax_mu;
  Vector argmin_nu;
  // Next index of the low-discrepancy sequence, so an estimate can be extended.
  std::size_t sequence_index = 0;
};

namespace detail {

inline constexpr std::array<int, 16> kHaltonPrimes = {2,  3,  5,  7,  11, 13, 17, 19,
                                                      23, 29, 31, 37, 41, 43, 47, 53};

inline double radical_inverse(std::size_t index, int base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % static_cast<std::size_t>(base));
    index /= static_cast<std::size_t>(base);
    f *= inv;
  }
  return r;
}

/// Point `index` of the Halton sequence mapped into the box. Index 0 maps to the lower corner,
/// so the sequence starts at 1.
inline Vector halton_point(const Box& box, std::size_t index) {
  const Eigen::Index d = box.dim();
  if (d > static_cast<Eigen::Index>(kHaltonPrimes.size())) {
    throw InvalidInput("log_lipschitz_estimate: at most 16 dimensions supported");
  }
  Vector x(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double u = radical_inverse(index, kHaltonPrimes[static_cast<std::size_t>(i)]);
    x(i) = box.lower(i) + u * (box.upper(i) - box.lower(i));
  }
  return x;
}

struct JacobianSample {
  double mu;
  double nu;
  double norm;
};

inline JacobianSample sample_jacobian(const JacobianFn& jac, const Vector& x) {
  const Matrix j = jac(x);
  if (!j.allFinite()) throw InvalidInput("log_lipschitz_estimate: non-finite Jacobian");
  require_square(j, "log_lipschitz_estimate");
  const Vector ev = symmetric_eigenvalues(j);
  return {ev.maxCoeff(), ev.minCoeff(), spectral_norm(j)};
}

// Coordinate search: try +-step along each axis, move on improvement, halve otherwise.
// `sign` = +1 maximises mu, -1 minimises nu.
inline void coordinate_search(const JacobianFn& jac, const Box& box, int steps, double sign,
                              LogLipschitzEstimate& est) {
  Vector x = sign > 0 ? est.argmax_mu : est.argmin_nu;
  double best = sign > 0 ? est.m_hat : -est.n_hat;
  Vector step = (box.upper - box.lower) /
                std::max(4.0, std::pow(static_cast<double>(est.sample_count), 1.0 / box.dim()));
  for (int s = 0; s < steps; ++s) {
    bool improved = false;
    for (Eigen::Index i = 0; i < box.dim(); ++i) {
      for (double dir : {1.0, -1.0}) {
        Vector y = x;
        y(i) += dir * step(i);
        y = box.clamp(y);
        const JacobianSample js = sample_jacobian(jac, y);
        ++est.sample_count;
        est.jacobian_norm_hat = std::max(est.jacobian_norm_hat, js.norm);
        if (js.mu > est.m_hat) {
          est.m_hat = js.mu;
          est.argmax_mu = y;
        }
        if (js.nu < est.n_hat) {
          est.n_hat = js.nu;
          est.argmin_nu = y;
        }
        const double value = sign > 0 ? js.mu : -js.nu;
        if (value > best) {
          best = value;
          x = y;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
}

}  // namespace detail

/// Continues the low-discrepancy sampling of an existing estimate with `extra` more points,
/// then refines around the current arg-extremes. Never lowers m_hat, never raises n_hat.
inline void extend_estimate(LogLipschitzEstimate& est, const JacobianFn& jac, std::size_t extra,
                            int refine_steps = 50) {
  const Box& box = est.domain_box;
  for (std::size_t k = 0; k < extra; ++k) {
    const Vector x = detail::halton_point(box, ++est.sequence_index);
    const detail::JacobianSample js = detail::sample_jacobian(jac, x);
    ++est.sample_count;
    est.jacobian_norm_hat = std::max(est.jacobian_norm_hat, js.norm);
    if (js.mu > est.m_hat) {
      est.m_hat = js.mu;
      est.argmax_mu = x;
    }
    if (js.nu < est.n_hat) {
      est.n_hat = js.nu;
      est.argmin_nu = x;
    }
  }
  if (refine_steps > 0 && est.sample_count > 0) {
    detail::coordinate_search(jac, box, refine_steps, +1.0, est);
    detail::coordinate_search(jac, box, refine_steps, -1.0, est);
  }
}

/// Sampled M(f), N(f) and ||J_f|| over `box`: the box centre, `budget` Halton points, then
/// `refine_steps` of coordinate search from each arg-extreme.
inline LogLipschitzEstimate log_lipschitz_estimate(const JacobianFn& jac, const Box& box,
                                                   std::size_t budget, int refine_steps = 50) {
  box.validate();
  if (budget < 1) throw InvalidInput("log_lipschitz_estimate: budget must be >= 1");
  LogLipschitzEstimate est;
  est.domain_box = box;
  const Vector centre = 0.5 * (box.lower + box.upper);
  const detail::JacobianSample js = detail::sample_jacobian(jac, centre);
  est.m_hat = js.mu;
  est.n_hat = js.nu;
  est.jacobian_norm_hat = js.norm;
  est.argmax_mu = centre;
  est.argmin_nu = centre;
  est.sample_count = 1;
  extend_estimate(est, jac, budget - 1, refine_steps);
  return est;
}

}  // namespace filterstab
