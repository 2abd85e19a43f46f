#pragma once

// Unit sigma-point rules for Gaussian expectations:
//
//   E_{N(x,P)}[g] ~= sum_i w_i g(x + sqrt(P) xi_i)
//
// A rule is usable by the stability-certified filters when it integrates every
// polynomial of total degree <= 2 exactly and all weights are non-negative.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "filterstab/errors.hpp"
#include "filterstab/matrix_measures.hpp"

namespace filterstab {

class CubatureRule {
 public:
  CubatureRule() = default;

  /// `points` is dim x n (one unit sigma-point per column), `weights` has n entries.
  CubatureRule(Matrix points, Vector weights, std::string name = "custom")
      : points_(std::move(points)), weights_(std::move(weights)), name_(std::move(name)) {
    if (points_.cols() != weights_.size() || points_.rows() < 1 || weights_.size() < 1) {
      throw InvalidInput("CubatureRule: points/weights size mismatch");
    }
    if (!points_.allFinite() || !weights_.allFinite()) {
      throw InvalidInput("CubatureRule: non-finite points or weights");
    }
  }

  Eigen::Index dim() const { return points_.rows(); }
  Eigen::Index size() const { return weights_.size(); }
  const Matrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  const std::string& name() const { return name_; }

 private:
  Matrix points_;
  Vector weights_;
  std::string name_;
};

/// Classical fourth-moment-matching choice, clipped so that all weights stay non-negative.
inline double default_unscented_kappa(Eigen::Index dim) {
  return std::max(0.0, 3.0 - static_cast<double>(dim));
}

/// Unscented transform: points 0 and +-sqrt(d + kappa) e_i with
/// w_0 = kappa / (d + kappa), w_i = 1 / (2 (d + kappa)).
inline CubatureRule unscented_rule(Eigen::Index dim, double kappa) {
  if (dim < 1) throw InvalidInput("unscented_rule: dim must be >= 1");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw InvalidInput("unscented_rule: kappa must be finite and >= 0 (negative weights)");
  }
  const double d = static_cast<double>(dim);
  const double spread = std::sqrt(d + kappa);
  Matrix points = Matrix::Zero(dim, 2 * dim + 1);
  Vector weights(2 * dim + 1);
  weights(0) = kappa / (d + kappa);
  for (Eigen::Index i = 0; i < dim; ++i) {
    points(i, 1 + i) = spread;
    points(i, 1 + dim + i) = -spread;
    weights(1 + i) = 1.0 / (2.0 * (d + kappa));
    weights(1 + dim + i) = 1.0 / (2.0 * (d + kappa));
  }
  return CubatureRule(std::move(points), std::move(weights), "unscented");
}

inline CubatureRule unscented_rule(Eigen::Index dim) {
  return unscented_rule(dim, default_unscented_kappa(dim));
}

/// One-dimensional probabilists' Gauss-Hermite nodes and weights (Golub-Welsch).
inline std::pair<Vector, Vector> gauss_hermite_1d(int order) {
  if (order < 1) throw InvalidInput("gauss_hermite_1d: order must be >= 1");
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = jacobi(k - 1, k);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  Vector nodes = es.eigenvalues();
  Vector weights = es.eigenvectors().row(0).transpose().array().square();
  // Exact symmetry of the node set; removes round-off in the odd moments.
  for (int k = 0; k < order / 2; ++k) {
    const double x = 0.5 * (nodes(order - 1 - k) - nodes(k));
    const double w = 0.5 * (weights(k) + weights(order - 1 - k));
    nodes(k) = -x;
    nodes(order - 1 - k) = x;
    weights(k) = w;
    weights(order - 1 - k) = w;
  }
  if (order % 2 == 1) nodes(order / 2) = 0.0;
  weights /= weights.sum();
  return {nodes, weights};
}

/// Tensor-product Gauss-Hermite rule with `order` nodes per axis.
inline CubatureRule gauss_hermite_rule(Eigen::Index dim, int order) {
  if (dim < 1) throw InvalidInput("gauss_hermite_rule: dim must be >= 1");
  if (order < 2) throw InvalidInput("gauss_hermite_rule: order must be >= 2");
  double count = std::pow(static_cast<double>(order), static_cast<double>(dim));
  if (count > 1e6) {
    throw RuleTooLarge("gauss_hermite_rule: order^dim = " + std::to_string(count) +
                       " exceeds 1e6 points");
  }
  const auto [nodes, w1] = gauss_hermite_1d(order);
  const auto n = static_cast<Eigen::Index>(count);
  Matrix points(dim, n);
  Vector weights(n);
  std::vector<int> digit(static_cast<std::size_t>(dim), 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    double w = 1.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const int di = digit[static_cast<std::size_t>(i)];
      points(i, j) = nodes(di);
      w *= w1(di);
    }
    weights(j) = w;
    for (std::size_t i = 0; i < digit.size(); ++i) {
      if (++digit[i] < order) break;
      digit[i] = 0;
    }
  }
  return CubatureRule(std::move(points), std::move(weights),
                      "gauss_hermite" + std::to_string(order));
}

/// Symmetric square root of a symmetric PSD matrix; eigenvalues in [-1e-10 scale, 0) are
/// clamped to zero first.
inline Matrix matrix_sqrt(const Matrix& p) {
  require_square(p, "matrix_sqrt");
  require_finite(p, "matrix_sqrt");
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidInput("matrix_sqrt: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (p + p.transpose()));
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-10 * scale) {
    throw IndefiniteMatrix("matrix_sqrt: smallest eigenvalue " + std::to_string(ev.minCoeff()) +
                           " is negative");
  }
  const Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

struct ExactnessReport {
  double weight_sum_residual = 0.0;     // |sum w_i - 1|
  double mean_residual = 0.0;           // max |sum w_i xi_i|
  double second_moment_residual = 0.0;  // max |sum w_i xi_i xi_i^T - I|
  Eigen::Index negative_weights = 0;
  double min_weight = 0.0;
  double tolerance = 0.0;
  bool exact = false;        // all three moment identities within tolerance
  bool nonnegative = false;  // no negative weights

  /// Usable for the stability-certified filters.
  bool certified() const { return exact && nonnegative; }
};

/// Checks the degree-two moment identities sum w = 1, sum w xi = 0, sum w xi xi^T = I.
inline ExactnessReport check_degree_two_exactness(const CubatureRule& rule, double tol = 1e-10) {
  ExactnessReport r;
  const Matrix& xi = rule.points();
  const Vector& w = rule.weights();
  r.tolerance = tol;
  r.weight_sum_residual = std::abs(w.sum() - 1.0);
  r.mean_residual = (xi * w).cwiseAbs().maxCoeff();
  const Matrix second = xi * w.asDiagonal() * xi.transpose();
  r.second_moment_residual =
      (second - Matrix::Identity(rule.dim(), rule.dim())).cwiseAbs().maxCoeff();
  r.negative_weights = (w.array() < 0.0).count();
  r.min_weight = w.minCoeff();
  r.exact = r.weight_sum_residual <= tol && r.mean_residual <= tol &&
            r.second_moment_residual <= tol;
  r.nonnegative = r.negative_weights == 0;
  return r;
}

}  // namespace filterstab
