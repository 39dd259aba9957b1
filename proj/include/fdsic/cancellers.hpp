#pragma once
// Augmented (widely linear) LMS and augmented nonlinear LMS cancellers,
// regressor builders, and the eigen-based pre-whitener.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fdsic/transceiver.hpp"
#include "fdsic/units.hpp"

namespace fdsic {

enum class RegressorVariant { linear, nonlinear };
enum class CancellerVariant { alms, anclms };

inline const char* to_string(CancellerVariant v) { return v == CancellerVariant::alms ? "alms" : "anclms"; }

struct AugmentedRegressor {
  cvec values;
  RegressorVariant variant = RegressorVariant::linear;
};

inline int regressor_dim(CancellerVariant v, int M, int N) {
  return v == CancellerVariant::alms ? 2 * M : 2 * M + 2 * N;
}

// window[0] is the newest sample x(n), window[i] is x(n-i).
inline AugmentedRegressor build_augmented(std::span<const cd> window) {
  if (window.empty()) throw InvalidArgument("window must be nonempty");
  const auto M = static_cast<Eigen::Index>(window.size());
  AugmentedRegressor r;
  r.values.resize(2 * M);
  for (Eigen::Index i = 0; i < M; ++i) {
    r.values(i) = window[i];
    r.values(M + i) = std::conj(window[i]);
  }
  return r;
}

// [x; x_imd; x*; x_imd*] with x_imd taken over the first N delays.
inline AugmentedRegressor build_augmented_nonlinear(std::span<const cd> window, double k_tiq, int N) {
  const int M = static_cast<int>(window.size());
  if (M < 1) throw InvalidArgument("window must be nonempty");
  if (N < 0 || N >= M) throw InvalidArgument("require 0 <= N < M");
  const int D = M + N;
  AugmentedRegressor r;
  r.variant = RegressorVariant::nonlinear;
  r.values.resize(2 * D);
  for (int i = 0; i < M; ++i) r.values(i) = window[i];
  for (int i = 0; i < N; ++i) r.values(M + i) = imd_sample(window[i], k_tiq);
  r.values.tail(D) = r.values.head(D).conjugate();
  return r;
}

// Streaming regressor over a sample stream; zero-filled before the first sample.
class RegressorStream {
 public:
  RegressorStream(CancellerVariant v, int M, int N, double k_tiq)
      : v_(v), M_(M), N_(N), kt15_(std::pow(k_tiq, 1.5)), win_(M, cd{}), imd_(std::max(N, 0), cd{}) {
    if (M < 1) throw InvalidArgument("M must be >= 1");
    if (v == CancellerVariant::anclms && (N < 0 || N >= M)) throw InvalidArgument("require 0 <= N < M");
    r_.resize(regressor_dim(v, M, N));
  }
  int dim() const { return static_cast<int>(r_.size()); }

  const cvec& push(cd x) {
    std::rotate(win_.rbegin(), win_.rbegin() + 1, win_.rend());
    win_[0] = x;
    if (v_ == CancellerVariant::alms) {
      for (int i = 0; i < M_; ++i) {
        r_(i) = win_[i];
        r_(M_ + i) = std::conj(win_[i]);
      }
    } else {
      if (N_ > 0) {
        std::rotate(imd_.rbegin(), imd_.rbegin() + 1, imd_.rend());
        imd_[0] = kt15_ * std::norm(x) * x;
      }
      const int H = M_ + N_;
      for (int i = 0; i < M_; ++i) {
        r_(i) = win_[i];
        r_(H + i) = std::conj(win_[i]);
      }
      for (int i = 0; i < N_; ++i) {
        r_(M_ + i) = imd_[i];
        r_(H + M_ + i) = std::conj(imd_[i]);
      }
    }
    return r_;
  }

 private:
  CancellerVariant v_;
  int M_, N_;
  double kt15_;
  std::vector<cd> win_, imd_;
  cvec r_;
};

// Regressors for samples [first, first+count) of x as columns of a matrix.
inline cmat regressor_block(const std::vector<cd>& x, CancellerVariant v, int M, int N,
                            double k_tiq, std::size_t first, std::size_t count) {
  RegressorStream rs(v, M, N, k_tiq);
  const std::size_t warm = first >= static_cast<std::size_t>(M) ? first - M + 1 : 0;
  for (std::size_t n = warm; n < first; ++n) rs.push(x[n]);
  cmat X(rs.dim(), static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c) X.col(static_cast<Eigen::Index>(c)) = rs.push(x[first + c]);
  return X;
}

struct WhiteningTransform {
  cmat phi;       // (Lambda)^(-1/2) U^H
  rvec eigenvalues;
  cmat basis;     // U
};

// Columns of `samples` are regressors.
inline WhiteningTransform prewhiten_fit(const cmat& samples) {
  const auto D = samples.rows(), n = samples.cols();
  if (D < 1 || n < 10 * D) throw InvalidArgument("need at least 10*dim regressors to fit a whitener");
  const cmat R = samples * samples.adjoint() / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<cmat> es(R);
  const rvec lam = es.eigenvalues();
  if (!(lam.minCoeff() > 1e-12 * lam.maxCoeff()))
    throw DegenerateInput("sample covariance is singular; cannot whiten");
  WhiteningTransform w;
  w.eigenvalues = lam;
  w.basis = es.eigenvectors();
  w.phi = lam.cwiseSqrt().cwiseInverse().asDiagonal() * w.basis.adjoint();
  return w;
}

struct CancellerState {
  cvec weights;
  double mu = 0.0;
  long long iteration = 0;
  CancellerVariant variant = CancellerVariant::alms;
  std::optional<WhiteningTransform> whitener;

  static CancellerState make(CancellerVariant v, int M, int N, double mu) {
    if (!(mu >= 0.0)) throw InvalidArgument("step size must be nonnegative");
    CancellerState s;
    s.variant = v;
    s.mu = mu;
    s.weights = cvec::Zero(regressor_dim(v, M, N));
    return s;
  }
  // Weights expressed against the un-whitened regressor.
  cvec effective_weights() const {
    return whitener ? cvec(whitener->phi.transpose() * weights) : weights;
  }
};

namespace detail {
inline cd lms_update(cvec& w, const cvec& r, cd d, double mu) {
  const cd e = d - (r.array() * w.array()).sum();
  w.noalias() += (mu * e) * r.conjugate();
  return e;
}
}  // namespace detail

inline cd alms_step(CancellerState& s, const AugmentedRegressor& r, cd d) {
  if (s.variant != CancellerVariant::alms) throw InvalidState("state is not an augmented LMS state");
  if (r.variant != RegressorVariant::linear || r.values.size() != s.weights.size())
    throw InvalidArgument("regressor does not match augmented LMS state");
  ++s.iteration;
  return detail::lms_update(s.weights, r.values, d, s.mu);
}

inline cd anclms_step(CancellerState& s, const AugmentedRegressor& r, cd d) {
  if (s.variant != CancellerVariant::anclms)
    throw InvalidState("state is not an augmented nonlinear LMS state");
  if (r.variant != RegressorVariant::nonlinear || r.values.size() != s.weights.size())
    throw InvalidArgument("regressor does not match augmented nonlinear LMS state");
  ++s.iteration;
  if (s.whitener) {
    const cvec rw = s.whitener->phi * r.values;
    return detail::lms_update(s.weights, rw, d, s.mu);
  }
  return detail::lms_update(s.weights, r.values, d, s.mu);
}

struct RunConfig {
  CancellerVariant variant = CancellerVariant::alms;
  double mu = 0.0;
  int M = 5;
  int N = 4;
  double k_tiq = 1.0;
  bool whiten = false;
  long long steady_window = 0;  // 0: trailing 20%, at least 2000
  long long preamble = 0;       // whitener fit length, 0: 50*dim
  int block = 100;
  double p_x_soi = 0.0;         // enables the SINR trace when > 0
  bool keep_raw = true;
  bool stop_on_divergence = true;
  double divergence_factor = 1e3;
  std::vector<int> track_taps;  // tap indices recorded once per block
  std::optional<cvec> w_init;
};

struct RunTrace {
  std::vector<double> err2;        // raw |e(n)|^2
  std::vector<double> err2_block;  // block means
  std::vector<double> sinr_block_db;
  std::vector<cvec> tracked;       // effective weights of tracked taps per block
  cvec final_weights;
  cvec mean_weights_steady;        // average of effective weights over the steady window
  double steady_state_mse = 0.0;
  double d_power_steady = 0.0;     // mean |d|^2 over the steady window
  std::pair<long long, long long> steady_state_window{0, 0};
  long long iterations = 0;
  long long preamble_used = 0;
  double initial_power = 0.0;
  bool diverged = false;
};

inline RunTrace run_canceller(const std::vector<cd>& x, const std::vector<cd>& d, const RunConfig& cfg) {
  if (!(cfg.mu > 0.0)) throw InvalidArgument("step size must be positive");
  if (x.size() != d.size()) throw InvalidArgument("x and d lengths differ");
  const int D = regressor_dim(cfg.variant, cfg.M, cfg.N);
  RegressorStream rs(cfg.variant, cfg.M, cfg.N, cfg.k_tiq);
  const long long L = static_cast<long long>(x.size());
  const long long start = cfg.M - 1;

  CancellerState st = CancellerState::make(cfg.variant, cfg.M, cfg.N, cfg.mu);
  long long n = 0;
  RunTrace tr;
  if (cfg.whiten) {
    if (cfg.variant != CancellerVariant::anclms) throw InvalidArgument("whitening applies to the nonlinear canceller");
    const long long P = cfg.preamble > 0 ? cfg.preamble : 50LL * D;
    if (start + P >= L) throw InvalidArgument("sequence too short for the whitening preamble");
    cmat pre(D, P);
    for (; n < start; ++n) rs.push(x[n]);
    for (long long c = 0; c < P; ++c, ++n) pre.col(c) = rs.push(x[n]);
    st.whitener = prewhiten_fit(pre);
    tr.preamble_used = P;
  } else {
    for (; n < start; ++n) rs.push(x[n]);
  }
  if (cfg.w_init) {
    if (cfg.w_init->size() != D) throw InvalidArgument("initial weights have wrong length");
    st.weights = *cfg.w_init;
  }

  const long long iters = L - n;
  const long long sw = cfg.steady_window > 0 ? cfg.steady_window : std::max<long long>(iters / 5, 2000);
  if (iters <= sw) throw InvalidArgument("sequence too short for the steady-state window");
  const long long steady_from = iters - sw;
  tr.steady_state_window = {steady_from, iters};
  tr.iterations = iters;
  if (cfg.keep_raw) tr.err2.reserve(static_cast<std::size_t>(iters));

  cvec rw(D);
  cvec wsum = cvec::Zero(D);
  double bsum = 0.0, ssum = 0.0, dsum = 0.0;
  int bcount = 0;
  const cmat* phi = st.whitener ? &st.whitener->phi : nullptr;
  for (long long k = 0; k < iters; ++k, ++n) {
    const cvec& r = rs.push(x[n]);
    cd e;
    if (phi) {
      rw.noalias() = (*phi) * r;
      e = detail::lms_update(st.weights, rw, d[n], st.mu);
    } else {
      e = detail::lms_update(st.weights, r, d[n], st.mu);
    }
    ++st.iteration;
    const double e2 = std::norm(e);
    if (cfg.keep_raw) tr.err2.push_back(e2);
    bsum += e2;
    if (k >= steady_from) {
      ssum += e2;
      dsum += std::norm(d[n]);
      wsum += st.weights;
    }
    if (++bcount == cfg.block || k + 1 == iters) {
      const double bm = bsum / bcount;
      if (tr.err2_block.empty()) tr.initial_power = bm;
      tr.err2_block.push_back(bm);
      if (cfg.p_x_soi > 0) tr.sinr_block_db.push_back(lin_to_db(cfg.p_x_soi / bm));
      if (!cfg.track_taps.empty()) {
        const cvec we = st.effective_weights();
        cvec t(static_cast<Eigen::Index>(cfg.track_taps.size()));
        for (std::size_t j = 0; j < cfg.track_taps.size(); ++j) t(j) = we(cfg.track_taps[j]);
        tr.tracked.push_back(t);
      }
      if (!std::isfinite(bm) || bm > cfg.divergence_factor * tr.initial_power) {
        tr.diverged = true;
        if (cfg.stop_on_divergence) break;
      }
      bsum = 0.0;
      bcount = 0;
    }
  }
  tr.final_weights = st.effective_weights();
  if (tr.diverged && cfg.stop_on_divergence) {
    tr.steady_state_mse = kInf;
    tr.mean_weights_steady = tr.final_weights;
  } else {
    tr.steady_state_mse = ssum / static_cast<double>(sw);
    tr.d_power_steady = dsum / static_cast<double>(sw);
    cvec wm = wsum / static_cast<double>(sw);
    tr.mean_weights_steady = st.whitener ? cvec(st.whitener->phi.transpose() * wm) : wm;
  }
  return tr;
}

}  // namespace fdsic
