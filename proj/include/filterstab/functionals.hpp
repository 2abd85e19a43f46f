#pragma once

// Mean functionals L_{x,P}(g) and Riccati functionals Lambda_{x,P}(g) of the generic
// Kalman(-Bucy) filter family, plus sampled checkers for the one-sided deviation
// conditions the stability results rely on.
//
//   EKF         L(g) = g(x)                        Lambda_c(g) = J_g(x) P
//   ADF         L(g) = E_{N(x,P)}[g]               Lambda_c(g) = E_{N(x,P)}[J_g] P
//   SigmaPoint  L(g) = sum w_i g(x + sqrt(P) xi_i) Lambda_c(g) = sum w_i g(x + sqrt(P) xi_i) xi_i^T sqrt(P)
//
// Discrete variants: EKF uses J P J^T, the others the weighted covariance of the
// propagated points. ADF expectations are evaluated with a high-order tensor
// Gauss-Hermite reference rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"
#include "filterstab/matrix_measures.hpp"
#include "filterstab/quadrature.hpp"

namespace filterstab {

/// A differentiable map R^d -> R^d given by its values and Jacobian.
struct VectorField {
  std::function<Vector(const Vector&)> value;
  JacobianFn jacobian;

  Vector operator()(const Vector& x) const { return value(x); }
};

/// The affine field z -> A z + b.
inline VectorField affine_field(const Matrix& a, const Vector& b) {
  return VectorField{[a, b](const Vector& z) -> Vector { return a * z + b; },
                     [a](const Vector&) -> Matrix { return a; }};
}

enum class FunctionalKind { Ekf, Adf, SigmaPoint };
enum class TimeDomain { Continuous, Discrete };

inline std::string to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::Ekf: return "ekf";
    case FunctionalKind::Adf: return "adf";
    case FunctionalKind::SigmaPoint: return "sigma_point";
  }
  return "unknown";
}

/// Reference rule standing in for exact Gaussian expectations.
inline CubatureRule adf_reference_rule(Eigen::Index dim) {
  if (dim <= 3) return gauss_hermite_rule(dim, 10);
  if (dim <= 5) return gauss_hermite_rule(dim, 6);
  return gauss_hermite_rule(dim, 3);
}

namespace detail {

inline CubatureRule certified_rule(CubatureRule rule, const char* who) {
  const ExactnessReport rep = check_degree_two_exactness(rule, 1e-9);
  if (!rep.certified()) {
    throw InvalidInput(std::string(who) + ": rule '" + rule.name() +
                       "' is not degree-2 exact with non-negative weights");
  }
  return rule;
}

}  // namespace detail

class MeanFunctional {
 public:
  static MeanFunctional ekf() { return MeanFunctional(FunctionalKind::Ekf, std::nullopt); }
  static MeanFunctional adf(Eigen::Index dim) {
    return MeanFunctional(FunctionalKind::Adf, adf_reference_rule(dim));
  }
  static MeanFunctional sigma_point(CubatureRule rule) {
    return MeanFunctional(FunctionalKind::SigmaPoint,
                          detail::certified_rule(std::move(rule), "MeanFunctional"));
  }

  FunctionalKind kind() const { return kind_; }
  /// Null for the EKF variant.
  const CubatureRule* rule() const { return rule_ ? &*rule_ : nullptr; }

 private:
  MeanFunctional(FunctionalKind k, std::optional<CubatureRule> r) : kind_(k), rule_(std::move(r)) {}
  FunctionalKind kind_;
  std::optional<CubatureRule> rule_;
};

class RiccatiFunctional {
 public:
  static RiccatiFunctional ekf(TimeDomain d) {
    return RiccatiFunctional(FunctionalKind::Ekf, d, std::nullopt);
  }
  static RiccatiFunctional adf(TimeDomain d, Eigen::Index dim) {
    return RiccatiFunctional(FunctionalKind::Adf, d, adf_reference_rule(dim));
  }
  static RiccatiFunctional sigma_point(TimeDomain d, CubatureRule rule) {
    return RiccatiFunctional(FunctionalKind::SigmaPoint, d,
                             detail::certified_rule(std::move(rule), "RiccatiFunctional"));
  }

  FunctionalKind kind() const { return kind_; }
  TimeDomain domain() const { return domain_; }
  const CubatureRule* rule() const { return rule_ ? &*rule_ : nullptr; }

 private:
  RiccatiFunctional(FunctionalKind k, TimeDomain d, std::optional<CubatureRule> r)
      : kind_(k), domain_(d), rule_(std::move(r)) {}
  FunctionalKind kind_;
  TimeDomain domain_;
  std::optional<CubatureRule> rule_;
};

/// Rule points mapped through x + sqrt(P) xi and pushed through g. Lets the mean and
/// Riccati functionals share one square root and one set of field evaluations.
struct PropagatedPoints {
  Matrix sqrt_p;
  Matrix inputs;  // d x n
  Matrix values;  // d_out x n
};

inline PropagatedPoints propagate(const CubatureRule& rule, const VectorField& g, const Vector& x,
                                  const Matrix& p) {
  if (rule.dim() != x.size() || p.rows() != x.size() || p.cols() != x.size()) {
    throw InvalidInput("propagate: dimension mismatch between rule, x and P");
  }
  PropagatedPoints pp;
  pp.sqrt_p = matrix_sqrt(p);
  pp.inputs = (pp.sqrt_p * rule.points()).colwise() + x;
  for (Eigen::Index i = 0; i < rule.size(); ++i) {
    Vector gi = g.value(pp.inputs.col(i));
    if (i == 0) pp.values.resize(gi.size(), rule.size());
    pp.values.col(i) = gi;
  }
  return pp;
}

inline Vector weighted_mean(const CubatureRule& rule, const PropagatedPoints& pp) {
  return pp.values * rule.weights();
}

/// Stein-identity form sum w_i g_i xi_i^T sqrt(P).
inline Matrix stein_cross_moment(const CubatureRule& rule, const PropagatedPoints& pp) {
  return pp.values * rule.weights().asDiagonal() * rule.points().transpose() * pp.sqrt_p;
}

/// Weighted covariance sum w_i (g_i - m)(g_i - m)^T.
inline Matrix weighted_covariance(const CubatureRule& rule, const PropagatedPoints& pp,
                                  const Vector& mean) {
  const Matrix centred = pp.values.colwise() - mean;
  return centred * rule.weights().asDiagonal() * centred.transpose();
}

/// Symmetrise and clamp negative eigenvalues to zero.
inline Matrix project_psd(const Matrix& m) {
  Matrix s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.eigenvalues().minCoeff() >= 0.0) return s;
  const Vector ev = es.eigenvalues().cwiseMax(0.0);
  s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (s + s.transpose());
}

/// L_{x,P}(g).
inline Vector eval_mean(const MeanFunctional& f, const VectorField& g, const Vector& x,
                        const Matrix& p) {
  if (f.kind() == FunctionalKind::Ekf) return g.value(x);
  const CubatureRule& rule = *f.rule();
  return weighted_mean(rule, propagate(rule, g, x, p));
}

/// Continuous-time Riccati functional (d x d, not necessarily symmetric).
inline Matrix eval_riccati_cont(const RiccatiFunctional& f, const VectorField& g,
                                const Vector& x, const Matrix& p) {
  if (f.domain() != TimeDomain::Continuous) {
    throw VariantMismatch("eval_riccati_cont: discrete Riccati functional supplied");
  }
  switch (f.kind()) {
    case FunctionalKind::Ekf:
      return g.jacobian(x) * p;
    case FunctionalKind::Adf: {
      const CubatureRule& rule = *f.rule();
      const Matrix sqrt_p = matrix_sqrt(p);
      const Matrix inputs = (sqrt_p * rule.points()).colwise() + x;
      Matrix mean_jac = Matrix::Zero(x.size(), x.size());
      for (Eigen::Index i = 0; i < rule.size(); ++i) {
        mean_jac += rule.weights()(i) * g.jacobian(inputs.col(i));
      }
      return mean_jac * p;
    }
    case FunctionalKind::SigmaPoint: {
      const CubatureRule& rule = *f.rule();
      return stein_cross_moment(rule, propagate(rule, g, x, p));
    }
  }
  throw VariantMismatch("eval_riccati_cont: unknown functional kind");
}

/// Discrete-time Riccati functional; symmetric PSD output.
inline Matrix eval_riccati_disc(const RiccatiFunctional& f, const VectorField& g,
                                const Vector& x, const Matrix& p) {
  if (f.domain() != TimeDomain::Discrete) {
    throw VariantMismatch("eval_riccati_disc: continuous Riccati functional supplied");
  }
  if (f.kind() == FunctionalKind::Ekf) {
    const Matrix j = g.jacobian(x);
    return project_psd(j * p * j.transpose());
  }
  const CubatureRule& rule = *f.rule();
  const PropagatedPoints pp = propagate(rule, g, x, p);
  return project_psd(weighted_covariance(rule, pp, weighted_mean(rule, pp)));
}

// ---------------------------------------------------------------------------
// Sampled checks of the one-sided deviation conditions.
// ---------------------------------------------------------------------------

struct AssumptionCheckReport {
  double worst_violation = -std::numeric_limits<double>::infinity();  // max (lhs - rhs)
  std::size_t sample_count = 0;
  double c_g_used = 0.0;
  bool pass = true;
};

struct AssumptionCheckOptions {
  // Sampling box for x and x~. A 1-D box is broadcast to the rule dimension; for the EKF
  // variant the box dimension is the state dimension.
  Box box = Box::cube(1, -5.0, 5.0);
  std::optional<double> c_g;          // overrides the variant's default constant
  double trace_min = 1e-3;
  double trace_max = 10.0;
};

namespace detail {

struct CheckSample {
  Vector x;
  Vector x_tilde;
  Matrix p;
};

inline CheckSample draw_check_sample(const Box& box, const AssumptionCheckOptions& opt,
                                     std::mt19937_64& rng) {
  const Eigen::Index d = box.dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  CheckSample s;
  s.x.resize(d);
  s.x_tilde.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    s.x(i) = box.lower(i) + unit(rng) * (box.upper(i) - box.lower(i));
    s.x_tilde(i) = box.lower(i) + unit(rng) * (box.upper(i) - box.lower(i));
  }
  Matrix factor(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) factor(i, j) = normal(rng);
  s.p = factor * factor.transpose();
  // log-uniform trace covers both the small-P and the large-P regime
  const double log_lo = std::log(opt.trace_min);
  const double log_hi = std::log(opt.trace_max);
  const double target = std::exp(log_lo + unit(rng) * (log_hi - log_lo));
  s.p *= target / s.p.trace();
  return s;
}

inline Box fit_box(const AssumptionCheckOptions& opt, Eigen::Index dim) {
  if (opt.box.dim() == dim) return opt.box;
  if (opt.box.dim() == 1) {
    return Box{Vector::Constant(dim, opt.box.lower(0)), Vector::Constant(dim, opt.box.upper(0))};
  }
  throw InvalidInput("assumption check: box dimension does not match the field");
}

}  // namespace detail

/// <x - x~, g(x) - L_{x~,P}(g)> <= m_g |x - x~|^2 + C_g tr(P) on random samples.
/// C_g defaults to 0 for the EKF and m_g - n_g otherwise.
inline AssumptionCheckReport check_assumption_continuous(const MeanFunctional& f,
                                                         const VectorField& g, double m_g,
                                                         double n_g, std::size_t samples,
                                                         std::uint64_t seed,
                                                         AssumptionCheckOptions opt = {}) {
  if (!std::isfinite(m_g) || !std::isfinite(n_g) || m_g < n_g) {
    throw InvalidInput("check_assumption_continuous: need finite m_g >= n_g");
  }
  AssumptionCheckReport rep;
  rep.c_g_used = opt.c_g.value_or(f.kind() == FunctionalKind::Ekf ? 0.0 : m_g - n_g);
  std::mt19937_64 rng(seed);
  const Box box = detail::fit_box(opt, f.rule() ? f.rule()->dim() : opt.box.dim());
  for (std::size_t k = 0; k < samples; ++k) {
    const detail::CheckSample s = detail::draw_check_sample(box, opt, rng);
    const Vector diff = s.x - s.x_tilde;
    const double lhs = diff.dot(g.value(s.x) - eval_mean(f, g, s.x_tilde, s.p));
    const double rhs = m_g * diff.squaredNorm() + rep.c_g_used * s.p.trace();
    const double violation = lhs - rhs;
    const double slack = 1e-8 * (1.0 + std::abs(lhs) + std::abs(rhs));
    rep.worst_violation = std::max(rep.worst_violation, violation);
    if (violation > slack) rep.pass = false;
    ++rep.sample_count;
  }
  return rep;
}

/// |g(x) - L_{x~,P}(g)|^2 <= |J_g|^2 |x - x~|^2 + C_g tr(P) on random samples.
/// C_g defaults to 0 for the EKF and |J_g| otherwise; pass `opt.c_g` to test another
/// convention (e.g. |J_g|^2).
inline AssumptionCheckReport check_assumption_discrete(const MeanFunctional& f,
                                                       const VectorField& g, double jf_norm,
                                                       std::size_t samples, std::uint64_t seed,
                                                       AssumptionCheckOptions opt = {}) {
  if (!std::isfinite(jf_norm) || jf_norm < 0.0) {
    throw InvalidInput("check_assumption_discrete: need finite jf_norm >= 0");
  }
  AssumptionCheckReport rep;
  rep.c_g_used = opt.c_g.value_or(f.kind() == FunctionalKind::Ekf ? 0.0 : jf_norm);
  std::mt19937_64 rng(seed);
  const Box box = detail::fit_box(opt, f.rule() ? f.rule()->dim() : opt.box.dim());
  for (std::size_t k = 0; k < samples; ++k) {
    const detail::CheckSample s = detail::draw_check_sample(box, opt, rng);
    const double lhs = (g.value(s.x) - eval_mean(f, g, s.x_tilde, s.p)).squaredNorm();
    const double rhs =
        jf_norm * jf_norm * (s.x - s.x_tilde).squaredNorm() + rep.c_g_used * s.p.trace();
    const double violation = lhs - rhs;
    const double slack = 1e-8 * (1.0 + std::abs(lhs) + std::abs(rhs));
    rep.worst_violation = std::max(rep.worst_violation, violation);
    if (violation > slack) rep.pass = false;
    ++rep.sample_count;
  }
  return rep;
}

}  // namespace filterstab
