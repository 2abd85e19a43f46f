#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "filterstab/filters.hpp"
#include "filterstab/stability.hpp"

using namespace filterstab;

namespace {

ContinuousModel scalar_linear(double a, double q, double h, double r) {
  return builtin_linear(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, q),
                        Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, r), Vector::Zero(1),
                        Matrix::Constant(1, 1, 0.1));
}

DiscreteModel scalar_discrete(double a, double q, double h, double r) {
  return discrete_linear(Matrix::Constant(1, 1, a), Vector::Zero(1), Matrix::Constant(1, 1, q),
                         Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, r), Vector::Zero(1),
                         Matrix::Constant(1, 1, 0.04));
}

ContinuousCertificate contractive(const char* filter) {
  const auto m = builtin_contractive3d();
  return contractive_certificate(m, named_config(m, filter, TimeDomain::Continuous));
}

}  // namespace

TEST(Utilities, Beta) {
  EXPECT_DOUBLE_EQ(beta(0.0), 0.0);
  EXPECT_NEAR(beta(2.0), kE * 4.0, 1e-12);
  EXPECT_NEAR(beta(2.0), 10.8731, 1e-4);
  EXPECT_NEAR(beta(0.5), 4.0774, 1e-4);
  EXPECT_THROW(beta(-1.0), InvalidInput);
}

TEST(Utilities, BernsteinAndChiSquare) {
  EXPECT_NEAR(bernstein_threshold(1.0, 1.0), kE * (std::sqrt(2.0) + 1.0), 1e-12);
  EXPECT_NEAR(bernstein_threshold(1.0, 1.0), 6.5625, 1e-4);
  EXPECT_THROW(bernstein_threshold(0.0, 1.0), InvalidInput);
  EXPECT_DOUBLE_EQ(chi_square_moment_bound(Vector::Zero(1), Matrix::Identity(1, 1), 1), 3.0);
  EXPECT_DOUBLE_EQ(chi_square_moment_bound(Vector::Ones(1), Matrix::Identity(1, 1), 1), 16.0);
  EXPECT_THROW(chi_square_moment_bound(Vector::Zero(1), Matrix::Identity(1, 1), 0), InvalidInput);
}

TEST(Utilities, ChiSquareFourthMomentMonteCarlo) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  double acc = 0.0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) {
    const double a = n(rng), b = n(rng), c = n(rng);
    const double sq = a * a + b * b + c * c;
    acc += sq * sq;
  }
  const double m4 = acc / draws;
  EXPECT_NEAR(m4, 15.0, 0.15);
  const double bound = chi_square_moment_bound(Vector::Zero(3), Matrix::Identity(3, 3), 2);
  EXPECT_DOUBLE_EQ(bound * bound, 100.0);
  EXPECT_LE(m4, bound * bound);
}

TEST(Utilities, Gronwall) {
  EXPECT_NEAR(gronwall_continuous(0.0, -1.0, 1.0, 60.0), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(gronwall_continuous(1.5, 0.0, 2.0, 3.0), 7.5);
  // the alpha -> 0 limit is continuous
  EXPECT_NEAR(gronwall_continuous(1.5, 1e-9, 2.0, 3.0), 7.5, 1e-7);
  EXPECT_NEAR(gronwall_discrete(0.0, 0.5, 1.0, 200.0), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(gronwall_discrete(3.0, 0.5, 1.0, 0.0), 3.0);
  EXPECT_THROW(gronwall_discrete(0.0, 1.0, 1.0, 1.0), InvalidInput);
  EXPECT_THROW(gronwall_discrete(0.0, 0.5, -1.0, 1.0), InvalidInput);
}

TEST(Utilities, GronwallDiscreteMatchesRecursion) {
  double x = 4.0;
  for (int k = 1; k <= 30; ++k) {
    x = 0.7 * x + 0.3;
    EXPECT_NEAR(gronwall_discrete(4.0, 0.7, 0.3, k), x, 1e-12);
  }
}

TEST(Utilities, MomentGrowth) {
  EXPECT_NEAR(moment_growth_bound(2.0, -0.5, 0.0, 3, 4.0, 1.0), 2.0 * std::exp(3 * -0.5 * 3.0),
              1e-12);
  for (double t : {0.5, 2.0, 7.0}) {
    EXPECT_NEAR(moment_growth_bound(1.3, -0.4, 0.8, 1, t, 0.0),
                gronwall_continuous(1.3, -0.4, 0.8, t), 1e-12);
  }
  EXPECT_NEAR(moment_growth_bound(0.0, -1.0, 1.0, 2, 80.0, 0.0), 4.0, 1e-12);
  EXPECT_THROW(moment_growth_bound(1.0, 0.0, 1.0, 1, 1.0, 0.0), InvalidInput);
}

TEST(Contractive, ReferenceConstants) {
  const auto ekf = contractive("ekf");
  const auto ukf = contractive("ukf");
  EXPECT_NEAR(ekf.lambda, 0.5947, 1e-12);
  EXPECT_NEAR(ekf.lambda_P, 2.552, 1e-3);
  EXPECT_DOUBLE_EQ(ekf.C_lambda, 0.0);
  EXPECT_NEAR(ukf.C_lambda, 4.867, 1e-3);
  EXPECT_NEAR(ekf.trace_S, 0.375, 1e-15);
  EXPECT_DOUBLE_EQ(ekf.T, 0.0);
  // T = 0: e_T^2 is the initial error and C_T = 4 chi
  EXPECT_NEAR(ekf.e_T_sq, 0.03, 1e-15);
  EXPECT_NEAR(ekf.C_T, 4.0 * 0.01 * 5.0, 1e-15);
  EXPECT_GE(ukf.u, ukf.trace_Q);
}

TEST(Contractive, BoundFormulaAndAsymptotes) {
  const auto ekf = contractive("ekf");
  const auto ukf = contractive("ukf");
  const double lp = ekf.lambda_P;
  EXPECT_NEAR(ekf.mse_asymptote(), (3.0 + 0.375 * lp * lp) / (2.0 * 0.5947), 1e-12);
  EXPECT_NEAR(ekf.mse_asymptote(), 4.577, 2e-3);
  EXPECT_NEAR(ukf.mse_asymptote(), 25.45, 0.02);
  EXPECT_NEAR(continuous_mse_bound(ekf, 1e3), ekf.mse_asymptote(), 1e-12);
  EXPECT_NEAR(continuous_mse_bound(ekf, 0.0), ekf.e_T_sq + ekf.mse_asymptote(), 1e-12);
  EXPECT_NEAR(continuous_concentration_threshold(ekf, 1e3, 3.0), 67.8, 0.1);
  EXPECT_NEAR(continuous_concentration_threshold(ekf, 1e3, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(continuous_concentration_threshold(ekf, 1e3, 1e-12), 0.0, 1e-4);
}

TEST(Contractive, BoundIsNonIncreasingOnceErrorExceedsAsymptote) {
  auto c = contractive("ukf");
  double prev = continuous_mse_bound(c, 0.0);
  for (int i = 1; i <= 200; ++i) {
    const double b = continuous_mse_bound(c, 0.05 * i);
    EXPECT_LE(b, prev + 1e-12);
    prev = b;
  }
}

TEST(Contractive, PureDecayWithoutNoise) {
  ContinuousCertificate c;
  c.lambda = 0.7;
  c.T = 1.0;
  c.e_T_sq = 2.0;
  c.u = 0.0;  // tr(Q) = 0, C_lambda = 0, tr(S) = 0
  EXPECT_NEAR(continuous_mse_bound(c, 3.0), 2.0 * std::exp(-2.0 * 0.7 * 2.0), 1e-15);
  EXPECT_THROW(continuous_mse_bound(c, 0.5), InvalidInput);
  EXPECT_THROW(continuous_concentration_threshold(c, 0.5, 1.0), InvalidInput);
}

TEST(Contractive, HypothesisFailures) {
  const auto unstable = scalar_linear(0.5, 1.0, 1.0, 1.0);
  EXPECT_THROW(contractive_certificate(unstable, named_config(unstable, "ekf",
                                                              TimeDomain::Continuous)),
               CertificateError);
  const auto iv = builtin_integrated_velocity();
  try {
    contractive_certificate(iv, named_config(iv, "ekf", TimeDomain::Continuous));
    FAIL() << "partially observed model certified";
  } catch (const CertificateError& e) {
    EXPECT_EQ(e.hypothesis(), "full_observation");
  }
}

TEST(Contractive, SampledConstantsAreFlaggedEmpirical) {
  auto m = builtin_contractive3d();
  m.known_M_f.reset();
  m.known_N_f.reset();
  const auto c = contractive_certificate(m, named_config(m, "ekf", TimeDomain::Continuous));
  EXPECT_EQ(c.provenance, Provenance::Empirical);
  EXPECT_NEAR(c.lambda, 0.5947, 0.01);
}

TEST(Contractive, TraceBoundHoldsAlongRuns) {
  const auto m = builtin_contractive3d();
  const auto cfg = named_config(m, "ukf", TimeDomain::Continuous);
  const auto c = contractive_certificate(m, cfg);
  RunOptions opt;
  opt.record_covariances = false;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto tr = run_continuous_filter(simulate_path(m, 0.01, 10.0, 5, i), m, cfg, opt);
    ASSERT_LE(tr.trace_P.maxCoeff(), c.lambda_P + 1e-6);
  }
}

TEST(Inflation, ClosedForms) {
  const auto m = scalar_linear(0.0, 1.0, 1.0, 1.0);  // N(f) = 0, s = 1, d = 1
  EXPECT_NEAR(inflation_mineig_bound(m, Matrix::Constant(1, 1, 4.0)), 2.0, 1e-12);
  const auto m3 = builtin_linear(Matrix::Zero(3, 3), Matrix::Identity(3, 3),
                                 Matrix::Identity(3, 3), 2.0 * Matrix::Identity(3, 3),
                                 Vector::Zero(3), Matrix::Identity(3, 3));
  // sqrt(q / (d s)) with q = 6, d = 3, s = 1/2
  EXPECT_NEAR(inflation_mineig_bound(m3, 6.0 * Matrix::Identity(3, 3)), 2.0, 1e-12);
}

TEST(Inflation, RequiredInflation) {
  const auto m = scalar_linear(0.0, 1.0, 1.0, 1.0);
  const Matrix q = required_inflation(m, 1.0, DriftConstants{1.0, 0.0, Provenance::User});
  EXPECT_NEAR(q(0, 0), 4.0, 4e-6);
  const Matrix zero = required_inflation(m, 1.0, DriftConstants{-2.0, -3.0, Provenance::User});
  EXPECT_EQ(zero, Matrix::Zero(1, 1));

  const auto c3 = builtin_contractive3d();
  const DriftConstants k{0.5, -4.5046, Provenance::User};
  const Matrix q3 = required_inflation(c3, 1.0, k);
  const double need = (0.5 + 1.0) / 0.125;
  EXPECT_GE(inflation_mineig_bound(c3, q3, k.N), need * (1.0 - 1e-6));
  EXPECT_LT(inflation_mineig_bound(c3, q3 * (1.0 - 1e-5), k.N), need);
}

TEST(Inflation, MinEigenvalueBoundHoldsOnSimulatedRuns) {
  const auto m = builtin_contractive3d();
  auto cfg = named_config(m, "ekf", TimeDomain::Continuous);
  cfg.Q_tuned = 25.0 * Matrix::Identity(3, 3);
  const double bound = inflation_mineig_bound(m, cfg.Q_tuned);
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto tr = run_continuous_filter(simulate_path(m, 0.01, 10.0, 61, i), m, cfg);
    worst = std::min(worst, lambda_min_sym(tr.covariances.back()));
  }
  EXPECT_GT(bound, 0.0);
  EXPECT_GE(worst, bound);
}

TEST(IntegratedVelocity, Constants) {
  const auto c = integrated_velocity_certificate({});
  EXPECT_NEAR(c.details.at("C22"), 0.05 / (2.0 * 0.419), 1e-12);
  EXPECT_NEAR(c.details.at("C22"), 0.0597, 1e-4);
  EXPECT_NEAR(c.lambda_P, 0.173, 0.02);
  EXPECT_TRUE(c.asymptotic);
  EXPECT_DOUBLE_EQ(c.C_lambda, 0.0);
  EXPECT_GT(c.lambda, 0.0);
  // mu(J_f - P S) >= -g', so no certificate can beat the damping slope
  EXPECT_LE(c.lambda, 0.419 + 1e-12);
  EXPECT_NEAR(c.T, std::log(100.0) / (2.0 * 0.419), 1e-12);
  EXPECT_NEAR(c.lambda_P, c.details.at("P11_upper") + c.details.at("C22"), 1e-15);
}

TEST(IntegratedVelocity, VertexWorstCaseMatchesGridSearch) {
  const auto c = integrated_velocity_certificate({});
  const double s = c.details.at("s");
  const double p11_lo = c.details.at("P11_lower"), p11_hi = c.details.at("P11_upper");
  const double c12 = c.details.at("C12");
  const int n = 60;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        const double p11 = p11_lo + (p11_hi - p11_lo) * i / n;
        const double p12 = c12 * j / n;
        const double gp = 0.419 + (1.581 - 0.419) * k / n;
        Matrix a(2, 2);
        a << -s * p11, 1.0, -s * p12, -gp;
        worst = std::max(worst, log_norm_mu(a));
      }
  EXPECT_NEAR(-worst, c.lambda, 1e-9);
}

TEST(IntegratedVelocity, Lambda12IsTheBestOnTheGrid) {
  const auto c = integrated_velocity_certificate({});
  IntegratedVelocityParams p;
  const double s = c.details.at("s");
  const double lmax = c.details.at("lambda12_max");
  for (int i = 1; i < 200; ++i) {
    const double l12 = lmax * i / 200.0;
    const auto cand = detail::iv_candidate(p, s, p.q1, c.details.at("C22"), 0.419, 1.581, l12);
    EXPECT_LE(cand.lambda, c.lambda + 1e-9);
  }
}

TEST(IntegratedVelocity, HypothesisFailures) {
  IntegratedVelocityOptions opt;
  opt.ell_g = 0.0;
  EXPECT_THROW(integrated_velocity_certificate({}, opt), CertificateError);
  IntegratedVelocityOptions neg;
  neg.P0(0, 1) = neg.P0(1, 0) = -0.01;
  EXPECT_THROW(integrated_velocity_certificate({}, neg), CertificateError);
}

TEST(Discrete, NoMeasurementsIsAContractionMapping) {
  auto m = scalar_discrete(0.6, 0.1, 0.0, 1.0);
  const auto cfg = named_config(m, "ekf", TimeDomain::Discrete);
  const auto c = discrete_certificate(m, cfg, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(c.lambda_d, 1.0);
  EXPECT_DOUBLE_EQ(c.lambda_df, 0.6);
  EXPECT_DOUBLE_EQ(c.kappa, 0.0);
  auto expanding = scalar_discrete(1.2, 0.1, 0.0, 1.0);
  EXPECT_THROW(discrete_certificate(expanding, named_config(expanding, "ekf", TimeDomain::Discrete),
                                    1.0, 1.0),
               CertificateError);
}

TEST(Discrete, LargeNoiseGainVanishes) {
  const auto m = scalar_discrete(0.5, 0.1, 1.0, 1e4);
  const auto c = discrete_certificate(m, named_config(m, "ekf", TimeDomain::Discrete), 1.0, 1.0);
  EXPECT_NEAR(c.kappa, 1e-4, 1e-16);
  EXPECT_DOUBLE_EQ(c.lambda_d, 1.0);
}

TEST(Discrete, WorkedScalarCase) {
  const auto m = scalar_discrete(0.5, 0.1, 1.0, 1.0);
  const auto cfg = named_config(m, "ukf", TimeDomain::Discrete);
  const auto c = discrete_certificate(m, cfg, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(c.kappa, 1.0);
  EXPECT_DOUBLE_EQ(c.lambda_d, 1.0);  // |1 - K| < 1 for every scalar gain
  EXPECT_DOUBLE_EQ(c.lambda_df, 0.5);
  EXPECT_DOUBLE_EQ(c.C_f, 0.5);
  EXPECT_NEAR(c.eta, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(c.u_d, 0.1 + 1.0, 1e-15);

  const double e0 = 0.04;
  const double per_step = 1.0 * (0.1 + 0.5 * 1.0) + 1.0 * 1.0;
  double e = e0;
  for (int k = 1; k <= 10; ++k) e = 0.25 * e + per_step;
  EXPECT_NEAR(gronwall_discrete(e0, 0.25, per_step, 10), e, 1e-12);
  const double b10 = discrete_mse_bound(c, m.mu0, cfg.x0_hat, m.Sigma0, 10);
  EXPECT_NEAR(b10, std::pow(0.5, 20) * e0 + per_step / 0.75, 1e-12);
  EXPECT_GE(b10, e);
  // noise-free start
  EXPECT_NEAR(discrete_mse_bound(c, m.mu0, cfg.x0_hat, m.Sigma0, 0) - discrete_mse_asymptote(c),
              e0, 1e-15);
  // threshold: 4 beta(2) (0.5^10 (0 + 0.2) + (sqrt(1.1) + sqrt(0.5)) / 0.5)^2
  const double inner = std::pow(0.5, 10) * 0.2 + (std::sqrt(1.1) + std::sqrt(0.5)) / 0.5;
  EXPECT_NEAR(discrete_concentration_threshold(c, m.mu0, cfg.x0_hat, m.Sigma0, 10, 2.0),
              4.0 * beta(2.0) * inner * inner, 1e-12);
  EXPECT_NEAR(discrete_concentration_threshold(c, m.mu0, cfg.x0_hat, m.Sigma0, 10, 0.0), 0.0,
              1e-15);
}

TEST(Discrete, BoundIsNonIncreasingInK) {
  const auto m = scalar_discrete(0.5, 0.1, 1.0, 1.0);
  const auto cfg = named_config(m, "ekf", TimeDomain::Discrete);
  const auto c = discrete_certificate(m, cfg, 1.0, 1.0);
  double prev = discrete_mse_bound(c, Vector::Constant(1, 3.0), cfg.x0_hat, m.Sigma0, 0);
  for (long k = 1; k < 40; ++k) {
    const double b = discrete_mse_bound(c, Vector::Constant(1, 3.0), cfg.x0_hat, m.Sigma0, k);
    EXPECT_LE(b, prev);
    prev = b;
  }
  EXPECT_THROW(discrete_mse_bound(c, m.mu0, cfg.x0_hat, m.Sigma0, -1), InvalidInput);
}

TEST(Discrete, ZeroContractionLeavesTraceTerm) {
  DiscreteCertificate c;
  c.lambda_d = 1.2;
  c.lambda_df = 0.0;
  c.kappa = 0.3;
  c.C_f = 0.5;
  c.lambda_P_upd = 2.0;
  c.trace_Q = 1.0;
  c.trace_R = 4.0;
  EXPECT_NEAR(discrete_mse_asymptote(c), 1.44 * (1.0 + 1.0) + 0.09 * 4.0, 1e-12);
}

TEST(Discrete, SampledGainContractionAndTraceBounds) {
  Matrix h(1, 2);
  h << 1.0, 0.0;
  const auto m = discrete_linear(0.5 * Matrix::Identity(2, 2), Vector::Zero(2),
                                 0.1 * Matrix::Identity(2, 2), h, Matrix::Constant(1, 1, 0.5),
                                 Vector::Zero(2), 0.1 * Matrix::Identity(2, 2));
  const double lam = sampled_gain_contraction(m, 1.0, 2000, 3);
  EXPECT_GE(lam, 1.0);  // I - K H has a unit singular value along the unobserved axis
  const auto tb = discrete_trace_bounds(0.5, 0.2, 0.2);
  EXPECT_NEAR(tb.pred, std::max(0.25 * 0.2 + 0.2, 0.2 / 0.75), 1e-15);
  EXPECT_THROW(discrete_trace_bounds(1.0, 0.2, 0.2), CertificateError);
  // trace bound holds along a filter run
  const auto cfg = named_config(m, "ekf", TimeDomain::Discrete);
  const auto path = simulate_discrete_path(m, 50, 9);
  const auto tr = run_discrete_filter(path, m, cfg);
  EXPECT_LE(tr.trace_P.maxCoeff(), discrete_trace_bounds(0.5, cfg.Q_tuned.trace(),
                                                         cfg.P0.trace()).upd + 1e-12);
}

TEST(Discrete, NaiveComparison) {
  const auto m = discrete_linear(0.5 * Matrix::Identity(2, 2), Vector::Zero(2),
                                 1e-3 * Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                 4.0 * Matrix::Identity(2, 2), Vector::Zero(2),
                                 0.1 * Matrix::Identity(2, 2));
  const auto cfg = named_config(m, "ekf", TimeDomain::Discrete);
  const auto tb = discrete_trace_bounds(0.5, cfg.Q_tuned.trace(), cfg.P0.trace());
  const auto c = discrete_certificate(m, cfg, tb.pred, tb.upd);
  const auto cmp = naive_vs_filter(m, c);
  EXPECT_DOUBLE_EQ(cmp.naive_mse, 8.0);
  EXPECT_TRUE(cmp.filter_better);

  const auto loud = discrete_linear(0.5 * Matrix::Identity(2, 2), Vector::Zero(2),
                                    100.0 * Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                    4.0 * Matrix::Identity(2, 2), Vector::Zero(2),
                                    0.1 * Matrix::Identity(2, 2));
  const auto lcfg = named_config(loud, "ekf", TimeDomain::Discrete);
  const auto ltb = discrete_trace_bounds(0.5, lcfg.Q_tuned.trace(), lcfg.P0.trace());
  EXPECT_FALSE(naive_vs_filter(loud, discrete_certificate(loud, lcfg, ltb.pred, ltb.upd))
                   .filter_better);

  Matrix h(1, 2);
  h << 1.0, 0.0;
  const auto partial = discrete_linear(0.5 * Matrix::Identity(2, 2), Vector::Zero(2),
                                       0.1 * Matrix::Identity(2, 2), h,
                                       Matrix::Constant(1, 1, 1.0), Vector::Zero(2),
                                       0.1 * Matrix::Identity(2, 2));
  EXPECT_THROW(naive_vs_filter(partial, c), InvalidInput);
}
