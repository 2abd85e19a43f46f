#include <cmath>

#include <gtest/gtest.h>

#include "filterstab/filters.hpp"

using namespace filterstab;

namespace {

ContinuousModel scalar_linear(double a, double q, double h, double r) {
  return builtin_linear(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, q),
                        Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, r), Vector::Zero(1),
                        Matrix::Constant(1, 1, 1.0));
}

DiscreteModel discrete_model(const Matrix& a, const Vector& b) {
  const Eigen::Index d = a.rows();
  Matrix h(1, d);
  h.setZero();
  h(0, 0) = 1.0;
  return discrete_linear(a, b, 0.1 * Matrix::Identity(d, d), h, Matrix::Constant(1, 1, 0.5),
                         Vector::Zero(d), 0.2 * Matrix::Identity(d, d));
}

bool symmetric_psd(const Matrix& p) {
  if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
  return Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff() >= -1e-12;
}

}  // namespace

TEST(FilterConfig, Validation) {
  const auto m = builtin_contractive3d();
  auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  EXPECT_NO_THROW(cfg.validate(3, TimeDomain::Continuous));
  EXPECT_THROW(cfg.validate(3, TimeDomain::Discrete), VariantMismatch);
  EXPECT_THROW(cfg.validate(2, TimeDomain::Continuous), InvalidInput);

  FilterConfig mixed = matched_config(m, MeanFunctional::ekf(),
                                      RiccatiFunctional::sigma_point(TimeDomain::Continuous,
                                                                     unscented_rule(3)));
  EXPECT_THROW(mixed.validate(3, TimeDomain::Continuous), VariantMismatch);

  cfg.Q_tuned = Matrix::Zero(3, 3);
  EXPECT_THROW(cfg.validate(3, TimeDomain::Continuous), InvalidInput);
  EXPECT_THROW(named_config(m, "pf", TimeDomain::Continuous), InvalidInput);
}

TEST(KalmanBucy, ScalarRiccatiReachesAlgebraicSolution) {
  // -2P + 1 - P^2 = 0  =>  P = sqrt(2) - 1
  const auto m = scalar_linear(-1.0, 1.0, 1.0, 1.0);
  const auto path = simulate_path(m, 1e-3, 20.0, 8);
  const auto tr = run_continuous_filter(path, m, named_config(m, "ekf", TimeDomain::Continuous));
  EXPECT_NEAR(tr.trace_P(tr.trace_P.size() - 1), std::sqrt(2.0) - 1.0, 1e-3);
}

TEST(KalmanBucy, ZeroInnovationWithZeroDriftKeepsEstimate) {
  auto m = scalar_linear(0.0, 1.0, 2.0, 1.0);
  const auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  FilterState s{Vector::Constant(1, 0.7), Matrix::Constant(1, 1, 0.3)};
  const double dt = 0.01;
  const Vector dy = m.H * s.x_hat * dt;
  const auto out = kalman_bucy_step(s, dy, dt, m, cfg);
  EXPECT_DOUBLE_EQ(out.x_hat(0), 0.7);
  // P' = P + (Q - P S P) dt
  EXPECT_NEAR(out.P(0, 0), 0.3 + (1.0 - 0.3 * 4.0 * 0.3) * dt, 1e-15);
}

TEST(KalmanBucy, NoObservationGainIsOpenLoop) {
  const auto base = builtin_contractive3d();
  auto m = base;
  m.H = Matrix::Zero(3, 3);
  const auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  FilterState s{Vector::Constant(3, 0.5), 0.1 * Matrix::Identity(3, 3)};
  const Vector dy = Vector::Constant(3, 10.0);  // ignored
  const auto out = kalman_bucy_step(s, dy, 0.01, m, cfg);
  EXPECT_LT((out.x_hat - (s.x_hat + m.drift(s.x_hat) * 0.01)).norm(), 1e-15);
}

TEST(KalmanBucy, StepErrors) {
  const auto m = scalar_linear(-1.0, 1.0, 1.0, 1.0);
  const auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  FilterState s{Vector::Zero(1), Matrix::Constant(1, 1, 1.0)};
  EXPECT_THROW(kalman_bucy_step(s, Vector::Zero(1), 0.0, m, cfg), InvalidInput);
  EXPECT_THROW(kalman_bucy_step(s, Vector::Zero(2), 0.1, m, cfg), InvalidInput);
  s.x_hat(0) = std::nan("");
  EXPECT_THROW(kalman_bucy_step(s, Vector::Zero(1), 0.1, m, cfg), DivergenceError);
}

TEST(KalmanBucy, DegenerateCovarianceReported) {
  // Q~ tiny and P0 = 0 with a huge gain: P collapses
  auto m = scalar_linear(-1.0, 1.0, 1.0, 1.0);
  auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  cfg.Q_tuned = Matrix::Constant(1, 1, 1e-20);
  FilterState s{Vector::Zero(1), Matrix::Zero(1, 1)};
  EXPECT_THROW(kalman_bucy_step(s, Vector::Zero(1), 0.01, m, cfg), DegenerateCovariance);
}

TEST(KalmanBucy, LinearModelAllVariantsAgree) {
  Matrix a(2, 2);
  a << -1.0, 0.5, -0.3, -0.8;
  const auto m = builtin_linear(a, 0.5 * Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                0.4 * Matrix::Identity(2, 2), Vector::Zero(2),
                                0.1 * Matrix::Identity(2, 2));
  const auto path = simulate_path(m, 0.01, 5.0, 21);
  const auto ref = run_continuous_filter(path, m, named_config(m, "ekf", TimeDomain::Continuous));
  for (const char* name : {"ukf", "adf", "gh"}) {
    const auto tr = run_continuous_filter(path, m, named_config(m, name, TimeDomain::Continuous));
    EXPECT_LT((tr.estimates - ref.estimates).cwiseAbs().maxCoeff(), 1e-8) << name;
    EXPECT_LT((tr.trace_P - ref.trace_P).cwiseAbs().maxCoeff(), 1e-8) << name;
  }
}

TEST(KalmanBucy, ContractiveEkfTraceStaysBelowCertifiedBound) {
  const auto m = builtin_contractive3d();
  const auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  RunOptions opt;
  opt.record_covariances = false;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto tr = run_continuous_filter(simulate_path(m, 0.01, 10.0, 2024, i), m, cfg, opt);
    worst = std::max(worst, tr.trace_P.maxCoeff());
  }
  EXPECT_LE(worst, 2.552);
}

TEST(KalmanBucy, CovariancesStaySymmetricPsd) {
  const auto m = builtin_contractive3d();
  RunOptions opt;
  opt.record_gains = true;
  for (const char* name : {"ekf", "ukf"}) {
    const auto tr = run_continuous_filter(simulate_path(m, 0.01, 3.0, 5), m,
                                          named_config(m, name, TimeDomain::Continuous), opt);
    ASSERT_EQ(tr.covariances.size(), 301u);
    ASSERT_EQ(tr.gains.size(), 301u);
    for (const auto& p : tr.covariances) ASSERT_TRUE(symmetric_psd(p));
    EXPECT_TRUE(tr.trace_P.allFinite());
    // K = P H^T R^{-1}
    EXPECT_LT((tr.gains.back() - tr.covariances.back() / 8.0).norm(), 1e-14);
  }
}

TEST(KalmanBucy, RunIsReproducible) {
  const auto m = builtin_contractive3d();
  const auto path = simulate_path(m, 0.01, 2.0, 77);
  const auto cfg = named_config(m, "ukf", TimeDomain::Continuous);
  const auto a = run_continuous_filter(path, m, cfg);
  const auto b = run_continuous_filter(path, m, cfg);
  EXPECT_EQ(a.estimates, b.estimates);
  EXPECT_EQ(a.trace_P, b.trace_P);
}

TEST(KalmanBucy, PathShapeMismatchRejected) {
  const auto m = builtin_contractive3d();
  const auto other = scalar_linear(-1.0, 1.0, 1.0, 1.0);
  const auto path = simulate_path(other, 0.01, 0.1, 1);
  EXPECT_THROW(run_continuous_filter(path, m, named_config(m, "ekf", TimeDomain::Continuous)),
               InvalidInput);
}

TEST(DiscreteFilter, PredictIdentityEkf) {
  const auto m = discrete_model(Matrix::Identity(2, 2), Vector::Zero(2));
  const auto cfg = named_config(m, "ekf", TimeDomain::Discrete);
  FilterState s{Vector::Constant(2, 0.3), 0.5 * Matrix::Identity(2, 2)};
  const auto out = discrete_predict(s, m, cfg);
  EXPECT_EQ(out.x_hat, s.x_hat);
  EXPECT_LT((out.P - (s.P + cfg.Q_tuned)).norm(), 1e-15);
}

TEST(DiscreteFilter, PredictAffineAllVariants) {
  Matrix a(2, 2);
  a << 0.6, 0.2, -0.1, 0.7;
  Vector b(2);
  b << 0.5, -0.25;
  const auto m = discrete_model(a, b);
  Matrix p(2, 2);
  p << 0.4, 0.1, 0.1, 0.3;
  const FilterState s{Vector::Constant(2, 1.5), p};
  for (const char* name : {"ekf", "ukf", "adf", "gh"}) {
    const auto cfg = named_config(m, name, TimeDomain::Discrete);
    const auto out = discrete_predict(s, m, cfg);
    EXPECT_LT((out.x_hat - (a * s.x_hat + b)).norm(), 1e-12) << name;
    EXPECT_LT((out.P - (a * p * a.transpose() + cfg.Q_tuned)).norm(), 1e-12) << name;
  }
}

TEST(DiscreteFilter, UnscentedPredictionCloseToHighOrderRule) {
  // one Euler step of the integrated velocity drift used as a discrete map
  const auto iv = builtin_integrated_velocity();
  const double h = 0.1;
  DiscreteModel m;
  m.dim_x = 2;
  m.dim_y = 1;
  m.drift.value = [iv, h](const Vector& x) -> Vector { return x + h * iv.drift(x); };
  m.drift.jacobian = [iv, h](const Vector& x) -> Matrix {
    return Matrix::Identity(2, 2) + h * iv.drift.jacobian(x);
  };
  m.Q = h * iv.Q;
  m.H = iv.H;
  m.R = iv.R;
  m.mu0 = iv.mu0;
  m.Sigma0 = iv.Sigma0;
  auto ut = named_config(m, "ukf", TimeDomain::Discrete);
  auto gh8 = matched_config(m, MeanFunctional::sigma_point(gauss_hermite_rule(2, 8)),
                            RiccatiFunctional::sigma_point(TimeDomain::Discrete,
                                                           gauss_hermite_rule(2, 8)));
  for (double v : {-2.0, 0.0, 0.5, 3.0}) {
    const FilterState s{Vector::Constant(2, v), 0.5 * Matrix::Identity(2, 2)};
    const auto a = discrete_predict(s, m, ut);
    const auto b = discrete_predict(s, m, gh8);
    EXPECT_LE((a.P - b.P).norm(), 0.05) << "x = " << v;
  }
}

TEST(DiscreteFilter, UpdateScalarExample) {
  const auto m = discrete_linear(Matrix::Constant(1, 1, 1.0), Vector::Zero(1),
                                 Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
                                 Matrix::Constant(1, 1, 1.0), Vector::Zero(1),
                                 Matrix::Constant(1, 1, 1.0));
  const auto u = discrete_update({Vector::Zero(1), Matrix::Constant(1, 1, 1.0)},
                                 Vector::Constant(1, 2.0), m);
  EXPECT_DOUBLE_EQ(u.K(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(u.state.x_hat(0), 1.0);
  EXPECT_DOUBLE_EQ(u.state.P(0, 0), 0.5);
}

TEST(DiscreteFilter, UpdateLimits) {
  auto m = discrete_linear(0.5 * Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Identity(2, 2),
                           Matrix::Identity(2, 2), 1e-12 * Matrix::Identity(2, 2),
                           Vector::Zero(2), Matrix::Identity(2, 2));
  const FilterState pred{Vector::Zero(2), Matrix::Identity(2, 2)};
  Vector y(2);
  y << 3.0, -1.0;
  EXPECT_LT((discrete_update(pred, y, m).state.x_hat - y).norm(), 1e-6);

  m.H = Matrix::Zero(2, 2);
  m.R = Matrix::Identity(2, 2);
  const auto u = discrete_update(pred, y, m);
  EXPECT_EQ(u.state.x_hat, pred.x_hat);
  EXPECT_EQ(u.state.P, pred.P);
  EXPECT_EQ(u.K, Matrix::Zero(2, 2));
}

TEST(DiscreteFilter, AffineModelMatchesClosedFormKalmanFilter) {
  Matrix a(2, 2);
  a << 0.9, 0.2, -0.1, 0.8;
  Vector b(2);
  b << 0.05, 0.0;
  const auto m = discrete_model(a, b);
  const auto path = simulate_discrete_path(m, 100, 31);
  for (const char* name : {"ekf", "ukf", "gh"}) {
    const auto cfg = named_config(m, name, TimeDomain::Discrete);
    const auto tr = run_discrete_filter(path, m, cfg);
    // textbook recursion with explicit inverses
    Vector x = cfg.x0_hat;
    Matrix p = cfg.P0;
    for (Eigen::Index k = 0; k < 100; ++k) {
      const Vector xp = a * x + b;
      const Matrix pp = a * p * a.transpose() + m.Q;
      const Matrix k_gain = pp * m.H.transpose() * (m.H * pp * m.H.transpose() + m.R).inverse();
      x = xp + k_gain * (path.measurement_increments.row(k).transpose() - m.H * xp);
      p = (Matrix::Identity(2, 2) - k_gain * m.H) * pp;
      ASSERT_LT((tr.estimates.row(k + 1).transpose() - x).norm(), 1e-10) << name << " k=" << k;
      ASSERT_LT((tr.covariances[static_cast<std::size_t>(k + 1)] - p).norm(), 1e-10) << name;
    }
  }
}
