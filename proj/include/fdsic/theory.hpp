#pragma once
// Closed-form step-size bounds, biases, steady-state and transient MSE, and
// spectral/condition-number results for both cancellers.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "fdsic/cancellers.hpp"
#include "fdsic/transceiver.hpp"
#include "fdsic/units.hpp"

namespace fdsic {

struct TheoryInputs {
  double sigma_x2 = 1.0;
  double sigma_v2 = 0.0;
  double sigma_q2 = 0.0;
  double k_tiq = 1.0;
  int M = 5;
  int N = 4;
  double mu = 0.0;
  ChannelSet channels;
  double p_x_soi = 0.0;

  double noise() const { return sigma_v2 + sigma_q2; }
  double kt3() const { return k_tiq * k_tiq * k_tiq; }
  double imd_energy() const { return channels.h_imd.squaredNorm() + channels.g_imd.squaredNorm(); }
  void validate() const {
    if (N < 0 || N >= M) throw InvalidArgument("require 0 <= N < M");
    if (sigma_x2 <= 0 || sigma_v2 < 0 || sigma_q2 < 0 || k_tiq < 0) throw InvalidArgument("invalid variances");
  }
};

inline TheoryInputs make_theory_inputs(const TransceiverProfile& p, const NoiseBudget& b,
                                       const ChannelSet& ch, double mu) {
  TheoryInputs in;
  in.sigma_x2 = b.sigma_x2;
  in.sigma_v2 = b.sigma_v2;
  in.sigma_q2 = b.sigma_q2;
  in.k_tiq = p.k_tiq();
  in.M = ch.M();
  in.N = ch.N();
  in.mu = mu;
  in.channels = ch;
  in.p_x_soi = b.p_x_soi;
  return in;
}

// ---------------------------------------------------------------- ALMS

inline double alms_mean_bound(double sigma_x2) { return 2.0 / sigma_x2; }
inline double alms_ms_bound(double sigma_x2, int M) {
  if (M < 1) throw InvalidArgument("M must be >= 1");
  return 1.0 / ((M + 1) * sigma_x2);
}

// Steady-state mean of (w - w_o): the IMD leaks into the linear taps.
inline cvec alms_bias(const TheoryInputs& in) {
  const double c = 2.0 * std::pow(in.k_tiq, 1.5) * in.sigma_x2;
  cvec b = cvec::Zero(2 * in.M);
  if (in.N > 0) {
    b.head(in.N) = c * in.channels.h_imd;
    b.segment(in.M, in.N) = c * in.channels.g_imd;
  }
  return b;
}

// E[x^a* u] driving the mean recursion.
inline cvec alms_cross_correlation(const TheoryInputs& in) { return in.sigma_x2 * alms_bias(in); }

enum class Regime { low, high };

inline const char* to_string(Regime r) { return r == Regime::low ? "low" : "high"; }

// Low regime when quantization and IMD together stay under 1% of thermal noise.
inline Regime alms_regime(const TheoryInputs& in) {
  const double s6 = std::pow(in.sigma_x2, 3);
  const double extra = in.sigma_q2 + 6.0 * in.kt3() * s6 * in.imd_energy();
  return extra > 0.01 * in.sigma_v2 ? Regime::high : Regime::low;
}

inline double alms_steady_mse(const TheoryInputs& in, Regime regime) {
  in.validate();
  const double s2 = in.sigma_x2, mu = in.mu;
  if (!(mu >= 0.0) || mu >= alms_ms_bound(s2, in.M)) throw InvalidArgument("step size outside the mean-square bound");
  const double den = 1.0 - mu * (in.M + 1) * s2;
  if (regime == Regime::low) return (1.0 - mu * s2) * in.sigma_v2 / den;
  const double nz = in.noise();
  const double imd = in.kt3() * std::pow(s2, 3) * in.imd_energy();
  return nz - 2.0 * imd + (mu * in.M * nz * s2 + 4.0 * imd) / den;
}

inline double alms_sinr(const TheoryInputs& in, Regime regime) {
  return lin_to_db(in.p_x_soi / alms_steady_mse(in, regime));
}

// Displayed F^a = (1 - 2 mu s2 + 2 mu^2 s2^2) I + mu^2 s2^2 11^T.
inline rmat alms_fa_matrix(const TheoryInputs& in) {
  const double s2 = in.sigma_x2, mu = in.mu;
  const int D = 2 * in.M;
  const double b = mu * mu * s2 * s2;
  return rmat::Identity(D, D) * (1.0 - 2.0 * mu * s2 + 2.0 * b) + rmat::Constant(D, D, b);
}

// (largest, multiplicity 1) and (remaining, multiplicity 2M-1) eigenvalues of F^a.
inline std::pair<double, double> alms_fa_eigenvalues(const TheoryInputs& in) {
  const double s2 = in.sigma_x2, mu = in.mu, b = mu * mu * s2 * s2;
  return {1.0 - 2.0 * mu * s2 + (2.0 * in.M + 2.0) * b, 1.0 - 2.0 * mu * s2 + 2.0 * b};
}

struct TransientResult {
  std::vector<double> mse;
  std::vector<rvec> kappa;  // sampled every kappa_stride iterations (if requested)
  bool diverged = false;
};

inline TransientResult alms_transient(const TheoryInputs& in, long long n_iters, Regime regime,
                                      std::optional<cvec> w_init = std::nullopt, int kappa_stride = 0) {
  in.validate();
  const int D = 2 * in.M;
  const double s2 = in.sigma_x2, mu = in.mu;
  const cvec wo = in.channels.alms_weights();
  const cvec w0 = w_init ? *w_init : cvec::Zero(D);
  cvec m = w0 - wo;  // E[w - w_o]
  rvec kappa = m.cwiseAbs2();
  const bool high = regime == Regime::high;
  const cvec p = high ? alms_cross_correlation(in) : cvec::Zero(D);
  const double nz = high ? in.noise() : in.sigma_v2;
  const double eu2 = nz + (high ? 6.0 * in.kt3() * std::pow(s2, 3) * in.imd_energy() : 0.0);
  const double a = 1.0 - 2.0 * mu * s2 + 2.0 * mu * mu * s2 * s2;
  const double b = mu * mu * s2 * s2;
  const double drive = mu * mu * nz * s2;

  TransientResult r;
  r.mse.reserve(static_cast<std::size_t>(n_iters) + 1);
  for (long long n = 0; n <= n_iters; ++n) {
    const double J = s2 * kappa.sum() + eu2 - 2.0 * (p.adjoint() * m)(0).real();
    r.mse.push_back(J);
    if (kappa_stride > 0 && n % kappa_stride == 0) r.kappa.push_back(kappa);
    if (!std::isfinite(J) || kappa.maxCoeff() > 1e12) {
      r.diverged = true;
      break;
    }
    if (n == n_iters) break;
    const double sum = kappa.sum();
    rvec q3(D);
    for (int i = 0; i < D; ++i) q3(i) = (p(i) * std::conj(m(i))).real();
    kappa = a * kappa + rvec::Constant(D, b * sum + drive) + 2.0 * mu * q3;
    m = (1.0 - mu * s2) * m + mu * p;
  }
  return r;
}

// Driving diagonal: 4 k^3 s2^3 [|h_imd|^2; 0; |g_imd|^2; 0].
inline rvec q3_diag(const TheoryInputs& in) {
  const double c = 4.0 * in.kt3() * std::pow(in.sigma_x2, 3);
  rvec q = rvec::Zero(2 * in.M);
  for (int i = 0; i < in.N; ++i) {
    q(i) = c * std::norm(in.channels.h_imd(i));
    q(in.M + i) = c * std::norm(in.channels.g_imd(i));
  }
  return q;
}

// ---------------------------------------------------------------- ANCLMS spectrum

struct RbSpectrum {
  double lambda1, lambda2, lambda3;
  int mult1, mult2, mult3;
};

inline double eps_of(double sigma_x2, double k_tiq) { return std::pow(k_tiq, 3) * sigma_x2 * sigma_x2; }

// Closed form as commonly printed (discriminant 1 - 2eps + 36eps^2).
inline RbSpectrum rb_eigenvalues(double sigma_x2, double k_tiq, int M, int N) {
  if (!(sigma_x2 > 0) || k_tiq < 0) throw InvalidArgument("invalid sigma_x2/k_tiq");
  const double e = eps_of(sigma_x2, k_tiq);
  const double t = 1.0 + 6.0 * e, r = std::sqrt(1.0 - 2.0 * e + 36.0 * e * e);
  return {sigma_x2, sigma_x2 * (t + r) / 2.0, sigma_x2 * (t - r) / 2.0, 2 * M - 2 * N, 2 * N, 2 * N};
}

// Eigenvalues of the 2x2 block [[s2, 2k^1.5 s2^2], [2k^1.5 s2^2, 6k^3 s2^3]]:
// trace s2(1+6eps), determinant 2 eps s2^2.
inline RbSpectrum rb_eigenvalues_exact(double sigma_x2, double k_tiq, int M, int N) {
  if (!(sigma_x2 > 0) || k_tiq < 0) throw InvalidArgument("invalid sigma_x2/k_tiq");
  const double e = eps_of(sigma_x2, k_tiq);
  const double t = 1.0 + 6.0 * e, r = std::sqrt(1.0 + 4.0 * e + 36.0 * e * e);
  // t - r loses precision for small eps; use the product instead.
  const double l2 = sigma_x2 * (t + r) / 2.0;
  const double l3 = 2.0 * e * sigma_x2 * sigma_x2 / l2;
  return {sigma_x2, l2, l3, 2 * M - 2 * N, 2 * N, 2 * N};
}

// Analytic E[x^b* x^b^T] for proper Gaussian x.
inline cmat rb_analytic(double sigma_x2, double k_tiq, int M, int N) {
  const int H = M + N;
  cmat R = cmat::Zero(2 * H, 2 * H);
  const double s2 = sigma_x2, c = 2.0 * std::pow(k_tiq, 1.5) * s2 * s2;
  const double m6 = 6.0 * std::pow(k_tiq, 3) * s2 * s2 * s2;
  for (int off : {0, H}) {
    for (int i = 0; i < M; ++i) R(off + i, off + i) = s2;
    for (int i = 0; i < N; ++i) {
      R(off + M + i, off + M + i) = m6;
      R(off + i, off + M + i) = c;
      R(off + M + i, off + i) = c;
    }
  }
  return R;
}

inline double anclms_mean_bound(double sigma_x2, double k_tiq) {
  const double e = eps_of(sigma_x2, k_tiq);
  const double s6 = std::pow(k_tiq, 3) * std::pow(sigma_x2, 3);
  return 4.0 / (sigma_x2 + 6.0 * s6 + sigma_x2 * std::sqrt(1.0 - 2.0 * e + 36.0 * e * e));
}

inline double anclms_mean_bound_exact(double sigma_x2, double k_tiq) {
  return 2.0 / rb_eigenvalues_exact(sigma_x2, k_tiq, 1, 0).lambda2;
}

// C = lambda2/lambda3 as a function of eps only.
inline double condition_number_eps(double e) {
  if (!(e > 0)) return kInf;
  const double t = 1.0 + 6.0 * e, r = std::sqrt(1.0 - 2.0 * e + 36.0 * e * e);
  return (t + r) / (t - r);
}
inline double condition_number_exact_eps(double e) {
  if (!(e > 0)) return kInf;
  const double t = 1.0 + 6.0 * e, r = std::sqrt(1.0 + 4.0 * e + 36.0 * e * e);
  return (t + r) * (t + r) / (8.0 * e);
}
inline double condition_number(double sigma_x2, double k_tiq) {
  return condition_number_eps(eps_of(sigma_x2, k_tiq));
}
inline double condition_number_exact(double sigma_x2, double k_tiq) {
  return condition_number_exact_eps(eps_of(sigma_x2, k_tiq));
}

struct ConditionMinimum {
  double epsilon_star;
  double value;
};

inline ConditionMinimum min_condition_number() {
  return {1.0 / 6.0, (17.0 + 4.0 * std::sqrt(15.0)) / 7.0};
}

// Brent search over log(eps) in (lo, hi).
template <class F>
inline ConditionMinimum numeric_condition_minimum(F&& cond, double lo = 1e-4, double hi = 1e2) {
  auto f = [&](double le) { return cond(std::exp(le)); };
  const auto [arg, val] = boost::math::tools::brent_find_minima(f, std::log(lo), std::log(hi), 50);
  return {std::exp(arg), val};
}
inline ConditionMinimum numeric_min_condition_number() {
  return numeric_condition_minimum([](double e) { return condition_number_eps(e); });
}

// ---------------------------------------------------------------- ANCLMS mean-square

// Streams sample regressors (columns) into T = E[(x x^H) (x) (x* x^T)].
class FourthMomentAccumulator {
 public:
  explicit FourthMomentAccumulator(int dim) : D_(dim), T_(cmat::Zero(dim * dim, dim * dim)) {}
  void add(const cmat& X) {
    cmat Z(D_ * D_, X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
      for (int a = 0; a < D_; ++a)
        Z.col(c).segment(a * D_, D_) = X(a, c) * X.col(c).conjugate();
    T_.selfadjointView<Eigen::Lower>().rankUpdate(Z);
    n_ += X.cols();
  }
  cmat result() const {
    if (n_ == 0) throw InvalidArgument("no regressors accumulated");
    cmat T = T_.selfadjointView<Eigen::Lower>();
    return T / static_cast<double>(n_);
  }
  long long count() const { return n_; }

 private:
  int D_;
  cmat T_;
  long long n_ = 0;
};

inline cmat estimate_fourth_moment(const cmat& X, Eigen::Index chunk = 4096) {
  FourthMomentAccumulator acc(static_cast<int>(X.rows()));
  for (Eigen::Index c = 0; c < X.cols(); c += chunk) acc.add(X.middleCols(c, std::min(chunk, X.cols() - c)));
  return acc.result();
}

// R = E[x* x^T] from sample regressors.
inline cmat sample_covariance(const cmat& X) {
  return (X * X.adjoint()).conjugate() / static_cast<double>(X.cols());
}

inline cmat kron_S(const cmat& R) {
  const auto D = R.rows();
  const cmat I = cmat::Identity(D, D);
  return Eigen::kroneckerProduct(I, R).eval() + Eigen::kroneckerProduct(R.conjugate(), I).eval();
}

struct MsBound {
  double from_moment_ratio;  // 1 / lambda_max(S^-1 T)
  double from_gamma;         // 1 / largest positive real eigenvalue of Gamma
  double value() const { return std::min(from_moment_ratio, from_gamma); }
};

inline MsBound anclms_ms_bound(const cmat& R, const cmat& T) {
  const auto D2 = T.rows();
  if (R.rows() * R.rows() != D2) throw InvalidArgument("R and T sizes disagree");
  const cmat S = kron_S(R);
  Eigen::GeneralizedSelfAdjointEigenSolver<cmat> ges(T, S, Eigen::EigenvaluesOnly);
  if (ges.info() != Eigen::Success) throw DegenerateInput("S is singular");
  MsBound b;
  b.from_moment_ratio = 1.0 / ges.eigenvalues().maxCoeff();

  cmat G = cmat::Zero(2 * D2, 2 * D2);
  G.topLeftCorner(D2, D2) = S / 2.0;
  G.topRightCorner(D2, D2) = -T / 2.0;
  G.bottomLeftCorner(D2, D2).setIdentity();
  Eigen::ComplexEigenSolver<cmat> ces(G, false);
  const cvec ev = ces.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  double best = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i).imag()) <= 1e-9 * scale && ev(i).real() > best) best = ev(i).real();
  b.from_gamma = best > 0 ? 1.0 / best : kInf;
  return b;
}

// Convenience: bound from sample regressors with the analytic covariance.
inline MsBound anclms_ms_bound(const cmat& sample_regressors, double sigma_x2, double k_tiq, int M, int N) {
  if (sample_regressors.cols() < 100LL * sample_regressors.rows() * sample_regressors.rows())
    throw InvalidArgument("too few regressors to estimate the fourth-moment matrix");
  return anclms_ms_bound(rb_analytic(sigma_x2, k_tiq, M, N), estimate_fourth_moment(sample_regressors));
}

// Small-step approximation (sigma_v2+sigma_q2)[mu(M s2 + 6N k^3 s2^3) + 1].
inline double anclms_steady_mse(const TheoryInputs& in) {
  in.validate();
  const double s2 = in.sigma_x2;
  return in.noise() * (in.mu * (in.M * s2 + 6.0 * in.N * in.kt3() * s2 * s2 * s2) + 1.0);
}

inline double anclms_sinr(const TheoryInputs& in) { return lin_to_db(in.p_x_soi / anclms_steady_mse(in)); }

// Fixed point of the full vectorized second-order recursion.
inline double anclms_steady_mse_exact(const cmat& R, const cmat& T, double mu, double noise) {
  const auto D = R.rows();
  const cmat A = mu * kron_S(R) - mu * mu * T;
  cvec vr(D * D);
  for (Eigen::Index j = 0; j < D; ++j) vr.segment(j * D, D) = R.col(j);
  const cvec k = A.partialPivLu().solve(vr);
  cmat K(D, D);
  for (Eigen::Index j = 0; j < D; ++j) K.col(j) = k.segment(j * D, D);
  return noise * (1.0 + mu * mu * (R * K).trace().real());
}

// Per-mode recursion k_i(n+1) = (1 - 2 mu l_i) k_i + mu^2 nz l_i on the analytic covariance.
inline TransientResult anclms_transient(const TheoryInputs& in, long long n_iters,
                                        std::optional<cvec> w_init = std::nullopt) {
  in.validate();
  const cmat R = rb_analytic(in.sigma_x2, in.k_tiq, in.M, in.N);
  Eigen::SelfAdjointEigenSolver<cmat> es(R);
  const rvec lam = es.eigenvalues();
  const cvec wo = in.channels.anclms_weights();
  const cvec w0 = w_init ? *w_init : cvec::Zero(wo.size());
  const rvec k0 = (es.eigenvectors().adjoint() * (w0 - wo)).cwiseAbs2();
  const double nz = in.noise(), mu = in.mu;
  const double kinf = mu * nz / 2.0;
  rvec rho(lam.size()), amp(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    rho(i) = 1.0 - 2.0 * mu * lam(i);
    amp(i) = lam(i) * (k0(i) - kinf);
  }
  const double Jinf = nz + kinf * lam.sum();
  TransientResult r;
  r.mse.reserve(static_cast<std::size_t>(n_iters) + 1);
  rvec pw = rvec::Ones(lam.size());
  for (long long n = 0; n <= n_iters; ++n) {
    const double J = Jinf + amp.dot(pw);
    r.mse.push_back(J);
    if (!std::isfinite(J) || std::abs(J) > 1e12 * std::max(Jinf, 1e-300)) {
      r.diverged = true;
      break;
    }
    pw = pw.cwiseProduct(rho);
  }
  return r;
}

// First index after which the curve stays within tol_db of its last value.
inline long long settling_index(const std::vector<double>& J, double tol_db) {
  if (J.empty()) return 0;
  const double ref = J.back();
  for (long long n = static_cast<long long>(J.size()) - 1; n >= 0; --n)
    if (std::abs(lin_to_db(J[static_cast<std::size_t>(n)] / ref)) > tol_db) return n + 1;
  return 0;
}

}  // namespace fdsic
