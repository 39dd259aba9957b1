#include <gtest/gtest.h>

#include "fdsic/cancellers.hpp"
#include "fdsic/theory.hpp"

using namespace fdsic;

namespace {

TheoryInputs type2_inputs(double tx, double mu_frac_of_alms_bound = 0.1) {
  auto p = type2_profile();
  p.tx_power_dbm = tx;
  const auto b = budget_for_tx(p, tx);
  const auto ch = synthesize_channels(p, 5, 4, 3);
  return make_theory_inputs(p, b, ch, mu_frac_of_alms_bound * alms_ms_bound(b.sigma_x2, 5));
}

TheoryInputs simple_inputs(double s2, double nv, int M, double mu) {
  TheoryInputs in;
  in.sigma_x2 = s2;
  in.sigma_v2 = nv;
  in.M = M;
  in.N = 0;
  in.mu = mu;
  in.channels = ChannelSet::zeros(M, 0);
  in.channels.h(0) = 1.0;
  in.p_x_soi = nv * 10.0;
  return in;
}

// Gaussian T for the M=1, N=0 regressor [x; x*]: only balanced moments survive.
cmat gaussian_t_m1(double s2) {
  cmat T = cmat::Zero(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
          if ((a == 0) + (b == 1) + (c == 1) + (d == 0) == 2) T(a * 2 + b, c * 2 + d) = 2 * s2 * s2;
  return T;
}

}  // namespace

TEST(AlmsBounds, Examples) {
  EXPECT_DOUBLE_EQ(alms_mean_bound(1.0), 2.0);
  EXPECT_DOUBLE_EQ(alms_ms_bound(1.0, 5), 1.0 / 6.0);
  for (double s2 : {1e-3, 0.1, 1.0, 7.0})
    for (int M : {1, 3, 8}) EXPECT_LT(alms_ms_bound(s2, M), alms_mean_bound(s2));
  EXPECT_THROW(alms_ms_bound(1.0, 0), InvalidArgument);
}

TEST(AlmsBias, ExampleAndZeroImd) {
  TheoryInputs in;
  in.M = 2;
  in.N = 1;
  in.channels = ChannelSet::zeros(2, 1);
  in.channels.h_imd(0) = 0.1;
  const cvec b = alms_bias(in);
  EXPECT_NEAR(b(0).real(), 0.2, 1e-15);
  EXPECT_EQ(b(1), cd(0, 0));
  in.channels.h_imd(0) = 0.0;
  EXPECT_EQ(alms_bias(in).norm(), 0.0);
}

TEST(AlmsSteady, LimitsAndRegimeAgreement) {
  auto in = simple_inputs(1.0, 0.01, 4, 0.0);
  EXPECT_DOUBLE_EQ(alms_steady_mse(in, Regime::low), 0.01);
  in.mu = 0.02;
  // Without IMD or quantization the high-regime expression reduces to the low one.
  EXPECT_NEAR(alms_steady_mse(in, Regime::high), alms_steady_mse(in, Regime::low), 1e-15);
  in.mu = 1.0 / 5.0;
  EXPECT_THROW(alms_steady_mse(in, Regime::low), InvalidArgument);
  in.mu = 1e-14;
  EXPECT_NEAR(alms_sinr(in, Regime::low), 10.0, 1e-9);
}

TEST(AlmsSteady, MonotoneInStepSize) {
  const auto base = type2_inputs(25.0);
  double prev = 0;
  for (double f : {0.01, 0.1, 0.3, 0.6, 0.9}) {
    auto in = base;
    in.mu = f * alms_ms_bound(in.sigma_x2, in.M);
    const double J = alms_steady_mse(in, Regime::high);
    EXPECT_GT(J, prev);
    prev = J;
  }
}

TEST(AlmsFa, EigenvaluesMatchNumericSolver) {
  for (double f : {0.05, 0.5, 0.95}) {
    auto in = type2_inputs(10.0);
    in.mu = f * alms_ms_bound(in.sigma_x2, in.M);
    Eigen::SelfAdjointEigenSolver<rmat> es(alms_fa_matrix(in));
    const auto [big, rest] = alms_fa_eigenvalues(in);
    const rvec ev = es.eigenvalues();
    EXPECT_NEAR(ev(ev.size() - 1), big, 1e-12);
    for (Eigen::Index i = 0; i + 1 < ev.size(); ++i) EXPECT_NEAR(ev(i), rest, 1e-12);
  }
}

TEST(AlmsTransient, FixedPointMatchesSteadyState) {
  auto low = simple_inputs(1.0, 0.01, 5, 0.1 / 6.0);
  const auto tl = alms_transient(low, 20000, Regime::low);
  EXPECT_NEAR(tl.mse.back() / alms_steady_mse(low, Regime::low), 1.0, 1e-3);
  for (double tx : {-5.0, 25.0}) {
    const auto in = type2_inputs(tx);
    const auto th = alms_transient(in, 20000, Regime::high);
    EXPECT_NEAR(th.mse.back() / alms_steady_mse(in, Regime::high), 1.0, 1e-3);
    EXPECT_FALSE(th.diverged);
  }
}

TEST(AlmsTransient, StartsAtNoiseFromOptimum) {
  auto in = simple_inputs(1.0, 0.01, 3, 0.05);
  const auto t = alms_transient(in, 10, Regime::low, in.channels.alms_weights());
  EXPECT_DOUBLE_EQ(t.mse.front(), 0.01);
}

TEST(AlmsTransient, ReportsDivergence) {
  auto in = simple_inputs(1.0, 0.01, 3, 0.0);
  in.mu = 1.5;  // beyond the mean bound of 2/s2 for the fast mode
  EXPECT_TRUE(alms_transient(in, 100000, Regime::low).diverged);
}

TEST(Q3, MatchesSampledCrossCorrelation) {
  auto in = type2_inputs(25.0);
  const double kt = in.k_tiq;
  const long long n = 1000000;
  const auto x = gen_proper_gaussian(n + in.M, in.sigma_x2, 5).samples;
  // One path at a time so the weak image path is not buried in the direct path's sampling noise.
  auto cross = [&](bool image) {
    ChannelSet c = ChannelSet::zeros(in.M, in.N);
    (image ? c.g_imd : c.h_imd) = image ? in.channels.g_imd : in.channels.h_imd;
    auto rng = make_rng(1);
    const auto u = render_d(x, c, kt, 0.0, rng);
    RegressorStream rs(CancellerVariant::alms, in.M, in.N, kt);
    cvec p = cvec::Zero(2 * in.M);
    for (int i = 0; i < in.M - 1; ++i) rs.push(x[i]);
    for (long long j = in.M - 1; j < n + in.M; ++j) p += rs.push(x[j]).conjugate() * u[j];
    return cvec(p / static_cast<double>(n + 1));
  };
  const cvec ph = cross(false), pg = cross(true);
  // Steady mean error is p / s2, so the driving diagonal is |p|^2 / s2.
  const rvec q = q3_diag(in);
  for (int i = 0; i < in.N; ++i) {
    EXPECT_NEAR(std::norm(ph(i)) / in.sigma_x2 / q(i), 1.0, 0.1);
    EXPECT_NEAR(std::norm(pg(in.M + i)) / in.sigma_x2 / q(in.M + i), 1.0, 0.1);
  }
  EXPECT_EQ(q(in.M - 1), 0.0);
}

TEST(RbSpectrum, Examples) {
  const auto z = rb_eigenvalues(2.0, 0.0, 5, 4);
  EXPECT_DOUBLE_EQ(z.lambda1, 2.0);
  EXPECT_DOUBLE_EQ(z.lambda2, 2.0);
  EXPECT_DOUBLE_EQ(z.lambda3, 0.0);
  const auto s = rb_eigenvalues(1.0, 1.0, 5, 4);
  EXPECT_NEAR(s.lambda2, 6.4580, 1e-4);
  EXPECT_NEAR(s.lambda3, 0.5420, 1e-4);
  EXPECT_EQ(s.mult1 + s.mult2 + s.mult3, 18);
  EXPECT_NEAR(anclms_mean_bound(1.0, 1.0) * s.lambda2, 2.0, 1e-12);
  EXPECT_NEAR(anclms_mean_bound(1.0, 1.0), 0.3097, 1e-4);
  EXPECT_NEAR(anclms_mean_bound(0.7, 0.0), 2.0 / 0.7, 1e-12);
}

TEST(RbSpectrum, ExactFormMatchesAnalyticCovariance) {
  for (double s2 : {0.05, 0.3, 1.0})
    for (double k : {0.5, 1.0, 4.0}) {
      const auto ex = rb_eigenvalues_exact(s2, k, 4, 2);
      Eigen::SelfAdjointEigenSolver<cmat> es(rb_analytic(s2, k, 4, 2));
      std::vector<double> want;
      for (int i = 0; i < ex.mult1; ++i) want.push_back(ex.lambda1);
      for (int i = 0; i < ex.mult2; ++i) want.push_back(ex.lambda2);
      for (int i = 0; i < ex.mult3; ++i) want.push_back(ex.lambda3);
      std::sort(want.begin(), want.end());
      for (std::size_t i = 0; i < want.size(); ++i)
        EXPECT_NEAR(es.eigenvalues()(i), want[i], 1e-10 * want.back());
      EXPECT_GT(ex.lambda3, 0.0);
      EXPECT_NEAR(ex.lambda2 * ex.lambda3, 2.0 * eps_of(s2, k) * s2 * s2, 1e-12 * ex.lambda2 * ex.lambda3);
    }
}

TEST(RbSpectrum, SampleCovarianceAgreesWithAnalytic) {
  const double s2 = 0.5, k = 1.0;
  const auto x = gen_proper_gaussian(400000, s2, 9).samples;
  const cmat X = regressor_block(x, CancellerVariant::anclms, 3, 1, k, 2, 399990);
  const cmat R = sample_covariance(X), A = rb_analytic(s2, k, 3, 1);
  EXPECT_LT((R - A).norm() / A.norm(), 0.02);
}

TEST(MeanSquareBound, GaussianSingleTapAnalytic) {
  for (double s2 : {0.5, 1.0, 2.0}) {
    const auto b = anclms_ms_bound(cmat::Identity(2, 2) * s2, gaussian_t_m1(s2));
    EXPECT_NEAR(b.value(), 1.0 / (2.0 * s2), 1e-9);
  }
  const auto x = gen_proper_gaussian(100000, 1.0, 3).samples;
  const cmat X = regressor_block(x, CancellerVariant::anclms, 1, 0, 1.0, 0, 100000);
  EXPECT_NEAR(anclms_ms_bound(X, 1.0, 1.0, 1, 0).value(), 0.5, 0.02);
  EXPECT_THROW(anclms_ms_bound(X.leftCols(100), 1.0, 1.0, 1, 0), InvalidArgument);
}

TEST(MeanSquareBound, TighterThanMeanBound) {
  for (double s2 : {0.1, 0.5})
    for (double k : {1.0, 4.0}) {
      const auto x = gen_proper_gaussian(40000, s2, 11).samples;
      const cmat X = regressor_block(x, CancellerVariant::anclms, 2, 1, k, 1, 36000);
      const auto b = anclms_ms_bound(X, s2, k, 2, 1);
      EXPECT_LT(b.value(), anclms_mean_bound_exact(s2, k));
      EXPECT_LE(b.value(), b.from_gamma);
    }
}

TEST(MeanSquareBound, SizeMismatchThrows) {
  EXPECT_THROW(anclms_ms_bound(cmat::Identity(3, 3), cmat::Identity(4, 4)), InvalidArgument);
}

TEST(AnclmsSteady, LimitsAndIndependenceFromImdTaps) {
  auto in = type2_inputs(25.0);
  in.mu = 0.0;
  EXPECT_DOUBLE_EQ(anclms_steady_mse(in), in.noise());
  EXPECT_NEAR(anclms_sinr(in), lin_to_db(in.p_x_soi / in.noise()), 1e-12);
  in.mu = 1e-3;
  const double J = anclms_steady_mse(in);
  in.channels.h_imd *= 10.0;
  EXPECT_DOUBLE_EQ(anclms_steady_mse(in), J);
}

TEST(AnclmsSteady, MonotoneInParameters) {
  auto base = type2_inputs(10.0);
  base.mu = 1e-3;
  const double J0 = anclms_steady_mse(base);
  auto a = base;
  a.mu *= 2;
  EXPECT_GT(anclms_steady_mse(a), J0);
  auto b = base;
  b.M = 7;
  b.channels = ChannelSet::zeros(7, 4);
  EXPECT_GT(anclms_steady_mse(b), J0);
  auto c = base;
  c.N = 2;
  EXPECT_LT(anclms_steady_mse(c), J0);
  auto d = base;
  d.k_tiq *= 2;
  EXPECT_GT(anclms_steady_mse(d), J0);
  auto e = base;
  e.sigma_x2 *= 2;
  EXPECT_GT(anclms_steady_mse(e), J0);
}

TEST(AnclmsSteady, ExactFixedPointApproachesApproximation) {
  const double s2 = 0.5, k = 1.0, nz = 1e-3;
  const int M = 2, N = 1;
  const auto x = gen_proper_gaussian(200000, s2, 13).samples;
  const cmat X = regressor_block(x, CancellerVariant::anclms, M, N, k, M - 1, 199990);
  const cmat R = rb_analytic(s2, k, M, N), T = estimate_fourth_moment(X);
  TheoryInputs in;
  in.sigma_x2 = s2;
  in.sigma_v2 = nz;
  in.k_tiq = k;
  in.M = M;
  in.N = N;
  in.channels = ChannelSet::zeros(M, N);
  const double bound = anclms_ms_bound(R, T).value();
  in.mu = 0.01 * bound;
  const double ex = anclms_steady_mse_exact(R, T, in.mu, nz) - nz;
  const double ap = anclms_steady_mse(in) - nz;
  EXPECT_NEAR(ex / ap, 1.0, 0.05);
}

TEST(AnclmsTransient, ConvergesToSteadyState) {
  auto in = type2_inputs(25.0);
  in.mu = 0.1 * anclms_mean_bound_exact(in.sigma_x2, in.k_tiq);
  const auto t = anclms_transient(in, 200000);
  EXPECT_NEAR(t.mse.back() / anclms_steady_mse(in), 1.0, 1e-3);
  const auto t0 = anclms_transient(in, 5, in.channels.anclms_weights());
  EXPECT_NEAR(t0.mse.front() / in.noise(), 1.0, 1e-9);
}

TEST(Condition, Examples) {
  EXPECT_NEAR(condition_number_eps(1.0 / 6.0), 4.6417, 1e-4);
  EXPECT_EQ(condition_number_eps(0.0), kInf);
  EXPECT_EQ(condition_number(1.0, 0.0), kInf);
  const auto m = min_condition_number();
  EXPECT_DOUBLE_EQ(m.epsilon_star, 1.0 / 6.0);
  EXPECT_NEAR(m.value, 4.6417, 1e-4);
  EXPECT_NEAR(condition_number_exact_eps(1.0 / 6.0), 5.0 + 2.0 * std::sqrt(6.0), 1e-12);
}

TEST(Condition, DependsOnEpsilonOnly) {
  for (double e : {0.01, 0.1, 1.0, 10.0}) {
    const double s2a = 0.1, ka = std::cbrt(e / (s2a * s2a));
    const double s2b = 2.0, kb = std::cbrt(e / (s2b * s2b));
    EXPECT_NEAR(condition_number(s2a, ka), condition_number(s2b, kb), 1e-9 * condition_number(s2a, ka));
    EXPECT_NEAR(condition_number_exact(s2a, ka), condition_number_exact(s2b, kb), 1e-9);
  }
}

TEST(Condition, MatchesSpectrumRatios) {
  for (double e : {0.02, 1.0 / 6.0, 3.0}) {
    const double k = std::cbrt(e);
    const auto p = rb_eigenvalues(1.0, k, 3, 1);
    EXPECT_NEAR(condition_number(1.0, k), p.lambda2 / p.lambda3, 1e-9 * p.lambda2 / p.lambda3);
    Eigen::SelfAdjointEigenSolver<cmat> es(rb_analytic(1.0, k, 3, 1));
    const auto x = rb_eigenvalues_exact(1.0, k, 3, 1);
    EXPECT_NEAR(condition_number_exact(1.0, k), x.lambda2 / x.lambda3, 1e-9 * x.lambda2 / x.lambda3);
    EXPECT_NEAR(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff(),
                std::max(x.lambda2, 1.0) / std::min(x.lambda3, 1.0), 1e-6 * x.lambda2 / x.lambda3);
  }
}

TEST(Condition, NumericMinimizerAgrees) {
  const auto n = numeric_min_condition_number();
  EXPECT_NEAR(n.epsilon_star, 1.0 / 6.0, 1e-4);
  EXPECT_NEAR(n.value, min_condition_number().value, 1e-8);
  const auto x = numeric_condition_minimum([](double e) { return condition_number_exact_eps(e); });
  EXPECT_NEAR(x.epsilon_star, 1.0 / 6.0, 1e-4);
  EXPECT_NEAR(x.value, 5.0 + 2.0 * std::sqrt(6.0), 1e-8);
  // Decreasing before the minimum, increasing after.
  EXPECT_GT(condition_number_eps(0.1), condition_number_eps(0.15));
  EXPECT_LT(condition_number_eps(0.2), condition_number_eps(0.3));
}

TEST(Settling, Index) {
  EXPECT_EQ(settling_index({}, 0.1), 0);
  EXPECT_EQ(settling_index({10.0, 5.0, 1.0, 1.0, 1.0}, 0.1), 2);
  EXPECT_EQ(settling_index({1.0, 1.0}, 0.1), 0);
}
