#pragma once
// Self-interference waveform sources and their moment statistics.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fdsic/units.hpp"

namespace fdsic {

struct ComplexSequence {
  std::vector<cd> samples;
  double sample_rate_hz = 1.0;

  std::size_t size() const { return samples.size(); }
  const cd& operator[](std::size_t i) const { return samples[i]; }
  cd& operator[](std::size_t i) { return samples[i]; }

  void validate() const {
    if (samples.empty()) throw InvalidArgument("sequence is empty");
    if (!(sample_rate_hz > 0.0)) throw InvalidArgument("sample rate must be positive");
    for (const auto& s : samples)
      if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
        throw InvalidArgument("sequence contains non-finite samples");
  }
};

enum class Constellation { QPSK, QAM16, QAM64 };

inline Constellation parse_constellation(const std::string& s) {
  if (s == "QPSK" || s == "qpsk") return Constellation::QPSK;
  if (s == "16QAM" || s == "16qam") return Constellation::QAM16;
  if (s == "64QAM" || s == "64qam") return Constellation::QAM64;
  throw InvalidArgument("unsupported constellation: " + s);
}

// WLAN-style defaults.
struct WaveformSpec {
  int K = 64;
  int K_null = 14;
  int K_cp = 16;
  int K_os = 4;
  double bandwidth_hz = 20e6;
  Constellation constellation = Constellation::QAM16;
  double target_power_dbm = 0.0;

  void validate() const {
    if (K < 1 || K_null < 0 || K_null >= K || K_cp < 0 || K_os < 1 || !(bandwidth_hz > 0))
      throw InvalidArgument("invalid waveform spec");
  }
  double symbol_duration_s() const { return (K + K_cp) / bandwidth_hz; }
  int samples_per_symbol() const { return (K + K_cp) * K_os; }
  int active_subcarriers() const { return K - K_null; }
};

struct SignalStats {
  double variance = 0.0;
  cd pseudo_variance{0.0, 0.0};
  double abs_moment4 = 0.0;
  double abs_moment6 = 0.0;
  std::size_t sample_count = 0;
};

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Draws one proper complex Gaussian sample with E|z|^2 = var.
template <class Rng>
inline cd draw_proper(Rng& rng, double var) {
  std::normal_distribution<double> nd(0.0, std::sqrt(var / 2.0));
  const double re = nd(rng);
  const double im = nd(rng);
  return {re, im};
}

template <class Rng>
inline void fill_proper(Rng& rng, double var, std::vector<cd>& out) {
  std::normal_distribution<double> nd(0.0, std::sqrt(var / 2.0));
  for (auto& z : out) {
    const double re = nd(rng);
    const double im = nd(rng);
    z = {re, im};
  }
}

inline ComplexSequence gen_proper_gaussian(long long n, double sigma_x2, std::uint64_t seed,
                                           double sample_rate_hz = 1.0) {
  if (n < 1) throw InvalidArgument("sample count must be positive");
  if (!(sigma_x2 > 0.0)) throw InvalidArgument("variance must be positive");
  ComplexSequence s;
  s.sample_rate_hz = sample_rate_hz;
  s.samples.resize(static_cast<std::size_t>(n));
  auto rng = make_rng(seed);
  fill_proper(rng, sigma_x2, s.samples);
  return s;
}

namespace detail {

// Gray-free square QAM with unit average energy; QPSK is 4-QAM.
inline std::vector<cd> constellation_points(Constellation c) {
  int m = 2;
  if (c == Constellation::QAM16) m = 4;
  if (c == Constellation::QAM64) m = 8;
  std::vector<cd> pts;
  double e = 0.0;
  for (int i = 0; i < m; ++i)
    for (int q = 0; q < m; ++q) {
      cd p(2.0 * i - (m - 1), 2.0 * q - (m - 1));
      pts.push_back(p);
      e += std::norm(p);
    }
  const double scale = 1.0 / std::sqrt(e / pts.size());
  for (auto& p : pts) p *= scale;
  return pts;
}

// Signed subcarrier indices that carry data: +-1..+-A/2, DC and band edges nulled.
inline std::vector<int> active_bins(const WaveformSpec& spec) {
  const int active = spec.active_subcarriers();
  const int pos = (active + 1) / 2;
  const int neg = active / 2;
  std::vector<int> bins;
  for (int k = 1; k <= pos; ++k) bins.push_back(k);
  for (int k = 1; k <= neg; ++k) bins.push_back(-k);
  return bins;
}

}  // namespace detail

inline ComplexSequence gen_ofdm_waveform(const WaveformSpec& spec, int num_symbols,
                                         std::uint64_t seed) {
  spec.validate();
  if (num_symbols < 1) throw InvalidArgument("num_symbols must be positive");
  const auto pts = detail::constellation_points(spec.constellation);
  const auto bins = detail::active_bins(spec);
  if (static_cast<int>(bins.size()) >= spec.K)
    throw InvalidArgument("no room for DC null");
  const int nfft = spec.K * spec.K_os;
  const int ncp = spec.K_cp * spec.K_os;

  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  Eigen::FFT<double> fft;
  std::vector<cd> freq(nfft), time(nfft);

  ComplexSequence out;
  out.sample_rate_hz = spec.bandwidth_hz * spec.K_os;
  out.samples.reserve(static_cast<std::size_t>(num_symbols) * (nfft + ncp));
  for (int s = 0; s < num_symbols; ++s) {
    std::fill(freq.begin(), freq.end(), cd{});
    for (int k : bins) freq[(k + nfft) % nfft] = pts[pick(rng)];
    fft.inv(time, freq);
    out.samples.insert(out.samples.end(), time.end() - ncp, time.end());
    out.samples.insert(out.samples.end(), time.begin(), time.end());
  }
  double p = 0.0;
  for (const auto& z : out.samples) p += std::norm(z);
  p /= static_cast<double>(out.samples.size());
  const double g = std::sqrt(db_to_lin(spec.target_power_dbm) / p);
  for (auto& z : out.samples) z *= g;
  return out;
}

inline SignalStats estimate_stats(const ComplexSequence& seq) {
  const std::size_t n = seq.size();
  if (n < 2) throw InvalidArgument("need at least two samples");
  cd mean{};
  for (const auto& z : seq.samples) mean += z;
  mean /= static_cast<double>(n);
  SignalStats st;
  st.sample_count = n;
  double m2 = 0.0, m4 = 0.0, m6 = 0.0;
  cd pv{};
  for (const auto& z0 : seq.samples) {
    const cd z = z0 - mean;
    const double a2 = std::norm(z);
    m2 += a2;
    m4 += a2 * a2;
    m6 += a2 * a2 * a2;
    pv += z * z;
  }
  const double dn = static_cast<double>(n);
  st.variance = m2 / dn;
  st.pseudo_variance = pv / dn;
  st.abs_moment4 = m4 / dn;
  st.abs_moment6 = m6 / dn;
  return st;
}

}  // namespace fdsic
