#pragma once
// Hardware profiles, end-to-end channel synthesis, gain/noise budget and the
// rendered pre-cancellation observation d(n).

#include <array>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fdsic/core_signal.hpp"
#include "fdsic/kv.hpp"
#include "fdsic/units.hpp"

namespace fdsic {

struct TransceiverProfile {
  double p_sen_dbm = -89.0;
  double snr_req_db = 15.0;
  double noise_floor_dbm = -104.0;
  double rf_separation_db = 30.0;
  double rf_attenuation_db = 20.0;
  double irr_db = 25.0;
  double k_tiq_db = 6.0;
  double k_riq_db = 6.0;
  double pa_gain_db = 27.0;
  double pa_iip3_dbm = 20.0;
  double k_lna_db = 25.0;
  double tx_power_dbm = 25.0;
  double adc_dynamic_range_db = 7.0;
  int adc_bits = 12;
  double papr_db = 10.0;
  double k_vga_db = 0.0;

  void validate() const {
    if (adc_bits < 1) throw InvalidArgument("adc_bits must be >= 1");
    for (double v : {p_sen_dbm, snr_req_db, noise_floor_dbm, rf_separation_db,
                     rf_attenuation_db, k_tiq_db, k_riq_db, pa_gain_db, pa_iip3_dbm,
                     k_lna_db, tx_power_dbm, adc_dynamic_range_db, papr_db, k_vga_db})
      if (!std::isfinite(v)) throw InvalidArgument("profile field is not finite");
    if (std::isnan(irr_db)) throw InvalidArgument("irr_db is NaN");
  }

  double k_tiq() const { return db_to_lin(k_tiq_db); }
  double k_riq() const { return db_to_lin(k_riq_db); }
  double k_lna() const { return db_to_lin(k_lna_db); }
  double k_vga() const { return db_to_lin(k_vga_db); }
  double alpha0_sq() const { return db_to_lin(pa_gain_db); }
  double p_adc() const { return db_to_lin(adc_dynamic_range_db); }
  double p_sen() const { return db_to_lin(p_sen_dbm); }
  double snr_req() const { return db_to_lin(snr_req_db); }
  // Residual analog isolation ||f_RFE||^2.
  double isolation() const { return db_to_lin(-(rf_separation_db + rf_attenuation_db)); }
  double image_ratio() const { return std::isinf(irr_db) && irr_db > 0 ? 0.0 : db_to_lin(-irr_db); }
};

// Two hardware classes: Type 2 has weaker analog cancellation than Type 1.
inline TransceiverProfile type2_profile() { return TransceiverProfile{}; }
inline TransceiverProfile type1_profile() {
  TransceiverProfile p;
  p.rf_separation_db = 40.0;
  p.rf_attenuation_db = 30.0;
  return p;
}

inline TransceiverProfile profile_from_kv(const KeyValues& kv, TransceiverProfile base = {}) {
  const std::map<std::string, double*> fields = {
      {"p_sen_dbm", &base.p_sen_dbm},
      {"snr_req_db", &base.snr_req_db},
      {"noise_floor_dbm", &base.noise_floor_dbm},
      {"rf_separation_db", &base.rf_separation_db},
      {"rf_attenuation_db", &base.rf_attenuation_db},
      {"irr_db", &base.irr_db},
      {"k_tiq_db", &base.k_tiq_db},
      {"k_riq_db", &base.k_riq_db},
      {"pa_gain_db", &base.pa_gain_db},
      {"pa_iip3_dbm", &base.pa_iip3_dbm},
      {"k_lna_db", &base.k_lna_db},
      {"tx_power_dbm", &base.tx_power_dbm},
      {"adc_dynamic_range_db", &base.adc_dynamic_range_db},
      {"papr_db", &base.papr_db},
      {"k_vga_db", &base.k_vga_db},
  };
  for (const auto& [k, v] : kv) {
    if (k == "adc_bits") {
      base.adc_bits = static_cast<int>(parse_number(v, k));
      continue;
    }
    if (k == "name") continue;
    auto it = fields.find(k);
    if (it == fields.end()) throw ConfigError("unknown profile key: " + k);
    *it->second = parse_number(v, k);
  }
  base.validate();
  return base;
}

inline TransceiverProfile load_profile(const std::string& path) {
  return profile_from_kv(load_kv_file(path));
}

struct ChannelSet {
  cvec h, g, h_imd, g_imd;

  int M() const { return static_cast<int>(h.size()); }
  int N() const { return static_cast<int>(h_imd.size()); }
  void validate() const {
    if (g.size() != h.size() || g_imd.size() != h_imd.size())
      throw InvalidArgument("channel length mismatch");
    if (N() >= M()) throw InvalidArgument("require N < M");
    if (!h.allFinite() || !g.allFinite() || !h_imd.allFinite() || !g_imd.allFinite())
      throw InvalidArgument("channel has non-finite taps");
  }
  // Linear widely-linear weights [h; g].
  cvec alms_weights() const {
    cvec w(2 * M());
    w << h, g;
    return w;
  }
  // Nonlinear augmented weights [h; h_imd; g; g_imd].
  cvec anclms_weights() const {
    cvec w(2 * M() + 2 * N());
    w << h, h_imd, g, g_imd;
    return w;
  }
  static ChannelSet zeros(int M, int N) {
    return {cvec::Zero(M), cvec::Zero(M), cvec::Zero(N), cvec::Zero(N)};
  }
};

struct NoiseBudget {
  double sigma_v2 = 0.0;
  double sigma_q2 = 0.0;
  double k_bb = 1.0;
  double p_x_soi = 0.0;
  double alpha1 = 0.0;  // PA cubic coefficient, 1/mW units
  double sigma_x2 = 0.0;
  double f_rfe_norm2 = 0.0;

  double noise() const { return sigma_v2 + sigma_q2; }
};

// Baseband SI power ahead of the Tx chain for a given PA output power.
inline double sigma_x2_for_tx(const TransceiverProfile& p, double tx_power_dbm) {
  return db_to_lin(tx_power_dbm) / (p.alpha0_sq() * p.k_vga() * p.k_tiq());
}

// Third-order intercept: |alpha1| = (4/3) alpha0 / IIP3, compressive sign.
inline double pa_alpha1(const TransceiverProfile& p) {
  return -(4.0 / 3.0) * std::sqrt(p.alpha0_sq()) / db_to_lin(p.pa_iip3_dbm);
}

inline double quantization_noise(const TransceiverProfile& p) {
  return p.p_adc() / db_to_lin(6.02 * p.adc_bits + 4.76 - p.papr_db);
}

inline NoiseBudget compute_noise_budget(const TransceiverProfile& p, double sigma_x2,
                                        double f_rfe_norm2) {
  if (!(sigma_x2 > 0.0)) throw InvalidArgument("sigma_x2 must be positive");
  if (f_rfe_norm2 < 0.0) throw InvalidArgument("isolation must be nonnegative");
  NoiseBudget b;
  b.sigma_x2 = sigma_x2;
  b.f_rfe_norm2 = f_rfe_norm2;
  b.alpha1 = pa_alpha1(p);
  const double kt = p.k_tiq(), kv = p.k_vga();
  const double rx_in = (p.alpha0_sq() * kv * kt * sigma_x2 +
                        b.alpha1 * b.alpha1 * kv * kv * kv * kt * kt * kt * std::pow(sigma_x2, 3)) *
                           f_rfe_norm2 +
                       p.p_sen();
  b.k_bb = p.p_adc() / (p.k_lna() * p.k_riq()) / rx_in;
  const double rx_gain = b.k_bb * p.k_lna() * p.k_riq();
  b.sigma_v2 = rx_gain * p.p_sen() / p.snr_req();
  b.sigma_q2 = quantization_noise(p);
  b.p_x_soi = rx_gain * p.p_sen();
  return b;
}

inline NoiseBudget budget_for_tx(const TransceiverProfile& p, double tx_power_dbm) {
  return compute_noise_budget(p, sigma_x2_for_tx(p, tx_power_dbm), p.isolation());
}

// Exact target energies of the four end-to-end responses.
struct ChannelNorms {
  double h2, g2, h_imd2, g_imd2;
};

inline ChannelNorms channel_norms(const TransceiverProfile& p, const NoiseBudget& b) {
  const double rx_gain = b.k_bb * p.k_lna() * p.k_riq();
  const double kv = p.k_vga();
  ChannelNorms n;
  n.h2 = rx_gain * p.alpha0_sq() * kv * p.k_tiq() * b.f_rfe_norm2;
  n.h_imd2 = rx_gain * b.alpha1 * b.alpha1 * kv * kv * kv * b.f_rfe_norm2;
  n.g2 = n.h2 * p.image_ratio();
  n.g_imd2 = n.h_imd2 * p.image_ratio();
  return n;
}

namespace detail {

inline cvec convolve(const cvec& a, const cvec& b) {
  cvec c = cvec::Zero(a.size() + b.size() - 1);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) c(i + j) += a(i) * b(j);
  return c;
}

inline cvec fit_length(const cvec& v, int len) {
  cvec out = cvec::Zero(len);
  const auto n = std::min<Eigen::Index>(len, v.size());
  out.head(n) = v.head(n);
  return out;
}

// Rescales to an exact energy, keeping the shape (and an optional sign flip).
inline cvec with_energy(const cvec& shape, double energy, double sign = 1.0) {
  const double n = shape.norm();
  if (energy <= 0.0 || n == 0.0) return cvec::Zero(shape.size());
  return shape * (sign * std::sqrt(energy) / n);
}

}  // namespace detail

// Channels for the profile's own tx_power_dbm.
inline ChannelSet synthesize_channels(const TransceiverProfile& p, int M, int N, std::uint64_t seed) {
  if (M < 1) throw InvalidArgument("M must be >= 1");
  if (N < 0 || N >= M) throw InvalidArgument("require 0 <= N < M");
  const NoiseBudget b = budget_for_tx(p, p.tx_power_dbm);
  const ChannelNorms nrm = channel_norms(p, b);

  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  cvec f(3);
  const std::array<double, 3> pdp = {1.0, db_to_lin(-3.0), db_to_lin(-6.0)};
  for (int i = 0; i < 3; ++i) f(i) = draw_proper(rng, pdp[i]);

  auto direct_iq = [&] {
    const double delta = 0.05 + 0.10 * unif(rng);
    const double th = 2.0 * std::numbers::pi * unif(rng);
    cvec t(2);
    t << 1.0, std::polar(delta, th);
    return t;
  };
  auto image_iq = [&] {
    cvec t(2);
    t << draw_proper(rng, 1.0), draw_proper(rng, 0.25);
    return t;
  };
  const cvec t_d = direct_iq(), r_d = direct_iq();
  const cvec t_i = image_iq(), r_i = image_iq();

  using detail::convolve;
  const cvec h_shape = convolve(convolve(f, t_d), r_d);
  // Image path: Tx image through the direct Rx branch plus the Rx image of the
  // conjugated direct Tx path.
  cvec g_shape = convolve(convolve(f, t_i), r_d);
  const cvec g_rx = convolve(convolve(f.conjugate(), t_d.conjugate()), r_i);
  g_shape += g_rx;
  // The cubic term is formed after the Tx mixer, so it only sees Rx IQ filters.
  const cvec hi_shape = convolve(f, r_d);
  const cvec gi_shape = convolve(f.conjugate(), r_i);

  const double s1 = b.alpha1 < 0 ? -1.0 : 1.0;
  ChannelSet c;
  c.h = detail::with_energy(detail::fit_length(h_shape, M), nrm.h2);
  c.g = detail::with_energy(detail::fit_length(g_shape, M), nrm.g2);
  c.h_imd = detail::with_energy(detail::fit_length(hi_shape, N), nrm.h_imd2, s1);
  c.g_imd = detail::with_energy(detail::fit_length(gi_shape, N), nrm.g_imd2, s1);
  return c;
}

inline cd imd_sample(cd x, double k_tiq) { return std::pow(k_tiq, 1.5) * std::norm(x) * x; }

struct Observation {
  ComplexSequence d;
  ComplexSequence linear_si, image_si, imd_si, image_imd_si, thermal, quantization, soi;
  ChannelSet channels;
  NoiseBudget budget;

  std::vector<std::pair<std::string, const ComplexSequence*>> components() const {
    return {{"linear_si", &linear_si},       {"image_si", &image_si},
            {"imd_si", &imd_si},             {"image_imd_si", &image_imd_si},
            {"thermal", &thermal},           {"quantization", &quantization},
            {"soi", &soi}};
  }
};

inline Observation render_observation(const ComplexSequence& x, const ChannelSet& ch,
                                      const NoiseBudget& b, const TransceiverProfile& p,
                                      std::uint64_t seed, bool include_soi = false) {
  ch.validate();
  const int M = ch.M(), N = ch.N();
  const std::size_t L = x.size();
  if (L < static_cast<std::size_t>(M) + 1) throw InvalidArgument("sequence shorter than M+1");
  const double kt = p.k_tiq();

  Observation o;
  o.channels = ch;
  o.budget = b;
  auto blank = [&] {
    ComplexSequence s;
    s.sample_rate_hz = x.sample_rate_hz;
    s.samples.assign(L, cd{});
    return s;
  };
  o.d = blank();
  o.linear_si = blank();
  o.image_si = blank();
  o.imd_si = blank();
  o.image_imd_si = blank();
  o.thermal = blank();
  o.quantization = blank();
  o.soi = blank();

  std::vector<cd> xi(L);
  for (std::size_t n = 0; n < L; ++n) xi[n] = imd_sample(x[n], kt);
  for (std::size_t n = 0; n < L; ++n) {
    cd lin{}, img{}, imd{}, imgimd{};
    for (int i = 0; i < M && static_cast<std::size_t>(i) <= n; ++i) {
      lin += ch.h(i) * x[n - i];
      img += ch.g(i) * std::conj(x[n - i]);
    }
    for (int i = 0; i < N && static_cast<std::size_t>(i) <= n; ++i) {
      imd += ch.h_imd(i) * xi[n - i];
      imgimd += ch.g_imd(i) * std::conj(xi[n - i]);
    }
    o.linear_si[n] = lin;
    o.image_si[n] = img;
    o.imd_si[n] = imd;
    o.image_imd_si[n] = imgimd;
  }
  auto rng = make_rng(seed);
  if (b.sigma_v2 > 0) fill_proper(rng, b.sigma_v2, o.thermal.samples);
  if (b.sigma_q2 > 0) fill_proper(rng, b.sigma_q2, o.quantization.samples);
  if (include_soi && b.p_x_soi > 0) fill_proper(rng, b.p_x_soi, o.soi.samples);
  for (std::size_t n = 0; n < L; ++n)
    o.d[n] = o.linear_si[n] + o.image_si[n] + o.imd_si[n] + o.image_imd_si[n] + o.thermal[n] +
             o.quantization[n] + o.soi[n];
  return o;
}

// Lean variant for long Monte Carlo runs: returns only d(n), same signal model.
template <class Rng>
inline std::vector<cd> render_d(const std::vector<cd>& x, const ChannelSet& ch, double k_tiq,
                                double noise_var, Rng& rng) {
  const int M = ch.M(), N = ch.N();
  const std::size_t L = x.size();
  std::vector<cd> xi(L), d(L);
  for (std::size_t n = 0; n < L; ++n) xi[n] = imd_sample(x[n], k_tiq);
  std::normal_distribution<double> nd(0.0, std::sqrt(noise_var / 2.0));
  for (std::size_t n = 0; n < L; ++n) {
    cd acc{};
    for (int i = 0; i < M && static_cast<std::size_t>(i) <= n; ++i)
      acc += ch.h(i) * x[n - i] + ch.g(i) * std::conj(x[n - i]);
    for (int i = 0; i < N && static_cast<std::size_t>(i) <= n; ++i)
      acc += ch.h_imd(i) * xi[n - i] + ch.g_imd(i) * std::conj(xi[n - i]);
    if (noise_var > 0) {
      const double re = nd(rng);
      const double im = nd(rng);
      acc += cd(re, im);
    }
    d[n] = acc;
  }
  return d;
}

struct PowerBudgetRow {
  double tx_power_dbm;
  double linear_si, image_si, imd_si, image_imd_si, thermal, quantization, soi;  // dBm
};

inline const std::vector<std::string>& power_budget_columns() {
  static const std::vector<std::string> c = {"linear_si", "image_si", "imd_si", "image_imd_si",
                                             "thermal",   "quantization", "soi"};
  return c;
}

inline std::vector<double> row_values(const PowerBudgetRow& r) {
  return {r.linear_si, r.image_si, r.imd_si, r.image_imd_si, r.thermal, r.quantization, r.soi};
}

// Analytic component powers at the canceller input.
inline std::vector<PowerBudgetRow> compute_power_budget(const TransceiverProfile& p,
                                                        const std::vector<double>& tx_powers_dbm) {
  if (tx_powers_dbm.empty()) throw InvalidArgument("empty tx power grid");
  std::vector<PowerBudgetRow> rows;
  const double kt3 = std::pow(p.k_tiq(), 3);
  for (double tx : tx_powers_dbm) {
    const NoiseBudget b = budget_for_tx(p, tx);
    const ChannelNorms n = channel_norms(p, b);
    const double s2 = b.sigma_x2, m6 = 6.0 * kt3 * s2 * s2 * s2;
    rows.push_back({tx, lin_to_db(n.h2 * s2), lin_to_db(n.g2 * s2), lin_to_db(n.h_imd2 * m6),
                    lin_to_db(n.g_imd2 * m6), lin_to_db(b.sigma_v2), lin_to_db(b.sigma_q2),
                    lin_to_db(b.p_x_soi)});
  }
  return rows;
}

}  // namespace fdsic
