#pragma once
// Monte Carlo experiment drivers behind the fdsic command line.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fdsic/cancellers.hpp"
#include "fdsic/core_signal.hpp"
#include "fdsic/report.hpp"
#include "fdsic/theory.hpp"
#include "fdsic/transceiver.hpp"

#ifndef FDSIC_VERSION
#define FDSIC_VERSION "1.0.0"
#endif

namespace fdsic {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> n = {"power-budget", "bias",        "sinr-sweep",
                                             "attenuation-sweep", "convergence", "bounds-probe"};
  return n;
}

struct ExperimentConfig {
  std::string experiment = "sinr-sweep";
  std::string profile_path;  // empty: built-in Type 2 values
  TransceiverProfile profile = type2_profile();
  int trials = 50;
  int M = 5;
  int N = 4;
  std::optional<double> mu_frac;
  std::optional<double> mu_abs;
  std::vector<double> tx_grid;  // empty: experiment default
  std::string source = "gaussian";
  std::uint64_t seed = 1;
  std::string output_dir = "fdsic_out";
  long long iterations = 0;  // 0: experiment default / theory-sized
  long long t_samples = 200000;
  bool check = false;
  int threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (std::find(experiment_names().begin(), experiment_names().end(), experiment) == experiment_names().end())
      throw ConfigError("unknown experiment: " + experiment);
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (M < 1 || N < 0 || N >= M) throw ConfigError("require 0 <= N < M");
    if (source != "gaussian" && source != "ofdm") throw ConfigError("source must be gaussian or ofdm");
    if (mu_frac && !(*mu_frac > 0)) throw ConfigError("mu-frac must be positive");
    if (mu_abs && !(*mu_abs > 0)) throw ConfigError("mu must be positive");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
  }
};

// "a:b:step" (inclusive) or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> g;
  if (s.find(':') != std::string::npos) {
    std::vector<double> p;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ':')) p.push_back(parse_number(tok, "tx-grid"));
    if (p.size() != 3 || !(p[2] > 0) || p[1] < p[0]) throw ConfigError("tx grid must be a:b:step with step > 0");
    for (double v = p[0]; v <= p[1] + 1e-9 * p[2]; v += p[2]) g.push_back(std::round(v * 1e9) / 1e9);
  } else {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) g.push_back(parse_number(tok, "tx-grid"));
  }
  if (g.empty()) throw ConfigError("empty tx grid");
  return g;
}

// Keys mirror the long CLI options.
inline void apply_config_kv(ExperimentConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "experiment") c.experiment = v;
    else if (k == "profile") c.profile_path = v;
    else if (k == "trials") c.trials = static_cast<int>(parse_number(v, k));
    else if (k == "M") c.M = static_cast<int>(parse_number(v, k));
    else if (k == "N") c.N = static_cast<int>(parse_number(v, k));
    else if (k == "mu-frac" || k == "mu_frac") c.mu_frac = parse_number(v, k);
    else if (k == "mu") c.mu_abs = parse_number(v, k);
    else if (k == "tx-grid" || k == "tx_grid") c.tx_grid = parse_grid(v);
    else if (k == "source") c.source = v;
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_number(v, k));
    else if (k == "out" || k == "output_dir") c.output_dir = v;
    else if (k == "iterations") c.iterations = static_cast<long long>(parse_number(v, k));
    else if (k == "t-samples" || k == "t_samples") c.t_samples = static_cast<long long>(parse_number(v, k));
    else if (k == "check") c.check = v == "1" || v == "true" || v == "yes";
    else if (k == "threads") c.threads = static_cast<int>(parse_number(v, k));
    else throw ConfigError("unknown config key: " + k);
  }
}

// ------------------------------------------------------------ parallel trials

template <class T, class F>
std::vector<T> parallel_map(int n, int threads, F&& fn) {
  std::vector<T> out(static_cast<std::size_t>(n));
  int nt = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  nt = std::min(nt, n);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex m;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next++) < n;) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(m);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  return out;
}

// ------------------------------------------------------------ scenarios

struct Scenario {
  TransceiverProfile profile;
  double tx_dbm = 0.0;
  NoiseBudget budget;
  ChannelSet channels;
  int M = 5, N = 4;
  double sigma_x2 = 0.0;  // source power actually driven into the model
  std::string source = "gaussian";

  double k_tiq() const { return profile.k_tiq(); }
  TheoryInputs theory(double mu) const {
    TheoryInputs in = make_theory_inputs(profile, budget, channels, mu);
    in.sigma_x2 = sigma_x2;
    return in;
  }
};

// Channel shapes come from a stream separate from the trial seeds base+i.
inline std::uint64_t channel_seed(std::uint64_t base) { return base ^ 0x5DEECE66DULL; }

inline Scenario make_scenario(const ExperimentConfig& cfg, double tx_dbm) {
  Scenario s;
  s.profile = cfg.profile;
  s.profile.tx_power_dbm = tx_dbm;
  s.tx_dbm = tx_dbm;
  s.budget = budget_for_tx(s.profile, tx_dbm);
  s.channels = synthesize_channels(s.profile, cfg.M, cfg.N, channel_seed(cfg.seed));
  s.M = cfg.M;
  s.N = cfg.N;
  s.sigma_x2 = s.budget.sigma_x2;
  s.source = cfg.source;
  return s;
}

struct TrialData {
  std::vector<cd> x, d;
};

inline std::vector<cd> make_source(const Scenario& sc, long long L, std::uint64_t seed, std::mt19937_64& rng) {
  std::vector<cd> x(static_cast<std::size_t>(L));
  if (sc.source == "ofdm") {
    WaveformSpec ws;
    ws.target_power_dbm = lin_to_db(sc.sigma_x2);
    const int nsym = static_cast<int>((L + ws.samples_per_symbol() - 1) / ws.samples_per_symbol());
    const auto w = gen_ofdm_waveform(ws, nsym, seed * 0x9E3779B97F4A7C15ULL + 1);
    std::copy(w.samples.begin(), w.samples.begin() + L, x.begin());
  } else {
    fill_proper(rng, sc.sigma_x2, x);
  }
  return x;
}

inline TrialData make_trial(const Scenario& sc, long long L, std::uint64_t seed) {
  auto rng = make_rng(seed);
  TrialData t;
  t.x = make_source(sc, L, seed, rng);
  t.d = render_d(t.x, sc.channels, sc.k_tiq(), sc.budget.noise(), rng);
  return t;
}

// ------------------------------------------------------------ ANCLMS bound with cached moments

struct AnclmsMoments {
  cmat R, T;
  MsBound bound;
};

inline const AnclmsMoments& anclms_moments(double sigma_x2, double k_tiq, int M, int N, long long n_samples,
                                           std::uint64_t seed) {
  static std::mutex mtx;
  static std::map<std::tuple<double, double, int, int, long long, std::uint64_t>, AnclmsMoments> cache;
  const auto key = std::make_tuple(sigma_x2, k_tiq, M, N, n_samples, seed);
  std::lock_guard<std::mutex> g(mtx);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const auto x = gen_proper_gaussian(n_samples + M, sigma_x2, seed);
  const int D = regressor_dim(CancellerVariant::anclms, M, N);
  FourthMomentAccumulator acc(D);
  const long long chunk = 8192;
  RegressorStream rs(CancellerVariant::anclms, M, N, k_tiq);
  for (int i = 0; i < M - 1; ++i) rs.push(x[i]);
  long long n = M - 1;
  for (long long done = 0; done < n_samples; done += chunk) {
    const long long c = std::min(chunk, n_samples - done);
    cmat X(D, c);
    for (long long j = 0; j < c; ++j) X.col(j) = rs.push(x[n++]);
    acc.add(X);
  }
  AnclmsMoments m;
  m.R = rb_analytic(sigma_x2, k_tiq, M, N);
  m.T = acc.result();
  m.bound = anclms_ms_bound(m.R, m.T);
  return cache.emplace(key, std::move(m)).first->second;
}

inline std::uint64_t moment_seed(std::uint64_t base) { return base * 7919ULL + 17ULL; }

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// Iterations until both predicted learning curves sit within tol_db of their limit,
// stretched so the settled part covers the trailing steady window.
inline long long theory_sized_iterations(const std::vector<const std::vector<double>*>& curves, long long floor_iters,
                                         double tol_db = 0.01) {
  long long settle = 0;
  for (const auto* c : curves) settle = std::max(settle, settling_index(*c, tol_db));
  return std::max(floor_iters, static_cast<long long>(std::ceil(settle / 0.8)));
}

inline void add_common_meta(ExperimentReport& r, const ExperimentConfig& c) {
  r.add_meta("software_version", FDSIC_VERSION);
  r.add_meta("profile", c.profile_path.empty() ? "built-in type2" : c.profile_path);
  r.add_meta("trials", std::to_string(c.trials));
  r.add_meta("M", std::to_string(c.M));
  r.add_meta("N", std::to_string(c.N));
  r.add_meta("source", c.source);
  r.add_meta("base_seed", std::to_string(c.seed));
  r.add_meta("trial_seeds", "base_seed + trial_index");
  r.add_meta("channel_seed", std::to_string(channel_seed(c.seed)));
}

// Trial-mean SINR trace from block-averaged residuals.
struct MeanCurve {
  std::vector<double> err2_block;
  double steady_mse = 0.0;
  int diverged = 0;
};

inline MeanCurve average_traces(const std::vector<RunTrace>& traces) {
  MeanCurve m;
  std::size_t len = 0;
  int ok = 0;
  for (const auto& t : traces) {
    if (t.diverged) {
      ++m.diverged;
      continue;
    }
    len = std::max(len, t.err2_block.size());
    m.steady_mse += t.steady_state_mse;
    ++ok;
  }
  m.err2_block.assign(len, 0.0);
  for (const auto& t : traces)
    if (!t.diverged)
      for (std::size_t i = 0; i < t.err2_block.size(); ++i) m.err2_block[i] += t.err2_block[i] / ok;
  m.steady_mse = ok ? m.steady_mse / ok : kInf;
  return m;
}

// ------------------------------------------------------------ power budget

inline ExperimentReport run_power_budget(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = cfg.tx_grid.empty() ? parse_grid("-5:25:5") : cfg.tx_grid;
  const long long L = cfg.iterations > 0 ? cfg.iterations : 100000;
  ExperimentReport rep;
  rep.experiment = "power-budget";
  add_common_meta(rep, cfg);
  rep.add_meta("samples_per_point", std::to_string(L));

  const auto rows = compute_power_budget(cfg.profile, grid);
  Table t{"power_budget", "Tx power (dBm)", "component power (dBm)", {}};
  for (const auto& c : power_budget_columns()) t.columns.push_back("analytic_" + c);
  for (const auto& c : power_budget_columns()) t.columns.push_back("measured_" + c);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Scenario sc = make_scenario(cfg, grid[i]);
    auto rng = make_rng(cfg.seed + i);
    ComplexSequence x;
    x.samples = make_source(sc, L, cfg.seed + i, rng);
    const Observation o = render_observation(x, sc.channels, sc.budget, sc.profile, cfg.seed + 1000 + i, true);
    std::vector<double> vals = row_values(rows[i]);
    const auto comps = o.components();
    for (std::size_t j = 0; j < comps.size(); ++j) {
      double p = 0.0;
      for (const auto& z : comps[j].second->samples) p += std::norm(z);
      const double meas = lin_to_db(p / static_cast<double>(L));
      if (std::isfinite(vals[j])) worst = std::max(worst, std::abs(meas - vals[j]));
      vals.push_back(meas);
    }
    t.add_row(grid[i], vals);
  }
  rep.tables.push_back(t);
  rep.add_check("analytic_vs_measured", worst <= 0.5, "max |analytic - measured| = " + fmt(worst) + " dB (limit 0.5)");

  bool above = true, below = true, any_above = false, any_below = false, dominate = true;
  for (const auto& r : rows) {
    if (r.tx_power_dbm > 20) any_above = true, above = above && r.thermal < r.quantization;
    if (r.tx_power_dbm < 15) any_below = true, below = below && r.thermal > r.quantization;
    dominate = dominate && std::min(r.linear_si, r.image_si) > std::max(r.imd_si, r.image_imd_si);
  }
  rep.add_check("thermal_quantization_crossover", above && below && any_above && any_below,
                "thermal < quantization above 20 dBm and > below 15 dBm on the grid", false);
  rep.add_check("linear_and_image_dominate", dominate, "linear and image SI exceed both IMD components", false);
  rep.add_meta("duration_s", fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return rep;
}

// ------------------------------------------------------------ bias

inline ExperimentReport run_bias(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double tx = cfg.tx_grid.empty() ? 25.0 : cfg.tx_grid.front();
  const double f = cfg.mu_frac.value_or(0.05);
  const std::vector<double> fracs = {f, 2 * f};
  const long long L = (cfg.iterations > 0 ? cfg.iterations : 30000) + cfg.M - 1;
  const Scenario sc = make_scenario(cfg, tx);
  const int M = cfg.M, N = cfg.N;
  const auto& mom = anclms_moments(sc.sigma_x2, sc.k_tiq(), M, N, cfg.t_samples, moment_seed(cfg.seed));
  const double bound_a = alms_ms_bound(sc.sigma_x2, M), bound_b = mom.bound.value();

  ExperimentReport rep;
  rep.experiment = "bias";
  add_common_meta(rep, cfg);
  rep.add_meta("tx_power_dbm", fmt(tx));
  rep.add_meta("iterations", std::to_string(L - M + 1));
  rep.add_meta("alms_ms_bound", fmt9(bound_a));
  rep.add_meta("anclms_ms_bound", fmt9(bound_b));
  rep.add_meta("weight_error_convention", "w - w_o, trial mean");

  const cvec wa = sc.channels.alms_weights(), wb = sc.channels.anclms_weights();
  const cvec bias = alms_bias(sc.theory(0.0));
  const std::vector<int> taps = {0, 1};

  struct Out {
    std::vector<RunTrace> a, b;
  };
  const int block = 100;
  auto outs = parallel_map<Out>(cfg.trials, cfg.threads, [&](int i) {
    const TrialData td = make_trial(sc, L, cfg.seed + static_cast<std::uint64_t>(i));
    Out o;
    for (double fr : fracs) {
      RunConfig rc;
      rc.M = M;
      rc.N = N;
      rc.k_tiq = sc.k_tiq();
      rc.block = block;
      rc.keep_raw = false;
      rc.track_taps = taps;
      rc.variant = CancellerVariant::alms;
      rc.mu = fr * bound_a;
      o.a.push_back(run_canceller(td.x, td.d, rc));
      rc.variant = CancellerVariant::anclms;
      rc.mu = fr * bound_b;
      o.b.push_back(run_canceller(td.x, td.d, rc));
    }
    return o;
  });

  Table curves{"bias", "iteration", "normalized |trial-mean weight error|", {}};
  std::vector<std::vector<double>> cols;
  auto tap_curve = [&](bool alms, std::size_t fi, int tap) {
    const cvec& wo = alms ? wa : wb;
    std::size_t nb = 0;
    for (const auto& o : outs) nb = std::max(nb, (alms ? o.a : o.b)[fi].tracked.size());
    std::vector<cd> acc(nb);
    std::vector<int> cnt(nb, 0);
    for (const auto& o : outs) {
      const auto& tr = (alms ? o.a : o.b)[fi];
      if (tr.diverged) continue;
      for (std::size_t k = 0; k < tr.tracked.size(); ++k) acc[k] += tr.tracked[k](tap) - wo(tap), ++cnt[k];
    }
    std::vector<double> v(nb);
    for (std::size_t k = 0; k < nb; ++k) v[k] = cnt[k] ? std::abs(acc[k] / double(cnt[k])) / std::abs(wo(tap)) : std::nan("");
    return v;
  };
  std::size_t nb = 0;
  for (std::size_t fi = 0; fi < fracs.size(); ++fi)
    for (bool alms : {true, false})
      for (int tap : taps) {
        curves.columns.push_back(std::string(alms ? "alms" : "anclms") + "_mu" + fmt(fracs[fi]) + "_h" +
                                 std::to_string(tap + 1));
        cols.push_back(tap_curve(alms, fi, tap));
        nb = std::max(nb, cols.back().size());
      }
  for (int tap : taps) {
    curves.columns.push_back("theory_alms_h" + std::to_string(tap + 1));
    cols.push_back(std::vector<double>(nb, std::abs(bias(tap)) / std::abs(wa(tap))));
  }
  for (std::size_t k = 0; k < nb; ++k) {
    std::vector<double> row;
    for (const auto& c : cols) row.push_back(k < c.size() ? c[k] : std::nan(""));
    curves.add_row(static_cast<double>((k + 1) * block), row);
  }
  rep.tables.push_back(curves);

  // Per-tap bias table for the first step size, from steady-window averaged weights.
  cvec ma = cvec::Zero(wa.size()), mb = cvec::Zero(wb.size());
  int na = 0, nbn = 0, div_a = 0, div_b = 0;
  for (const auto& o : outs) {
    if (!o.a[0].diverged) ma += o.a[0].mean_weights_steady, ++na; else ++div_a;
    if (!o.b[0].diverged) mb += o.b[0].mean_weights_steady, ++nbn; else ++div_b;
  }
  const cvec err_a = na ? cvec(ma / na - wa) : cvec::Constant(wa.size(), cd(kInf, 0));
  const cvec err_b = nbn ? cvec(mb / nbn - wb) : cvec::Constant(wb.size(), cd(kInf, 0));
  Table taps_t{"taps", "ALMS tap index", "weight error", {"theory_abs", "sim_abs", "relative_error"}};
  double worst = 0.0;
  for (int half = 0; half < 2; ++half)
    for (int i = 0; i < N; ++i) {
      const int k = half * M + i;
      const double rel = std::abs(err_a(k) - bias(k)) / std::abs(bias(k));
      worst = std::max(worst, std::isfinite(rel) ? rel : kInf);
      taps_t.add_row(k, {std::abs(bias(k)), std::abs(err_a(k)), rel});
    }
  rep.tables.push_back(taps_t);
  const double ratio_b = err_b.norm() / wb.norm();
  rep.add_meta("alms_diverged_trials", std::to_string(div_a));
  rep.add_meta("anclms_diverged_trials", std::to_string(div_b));
  rep.add_check("alms_bias_per_tap", worst <= 0.10,
                "worst relative error over the " + std::to_string(2 * N) + " IMD taps = " + fmt(worst) + " (limit 0.10)");
  rep.add_check("anclms_bias_norm", ratio_b < 0.05, "||E[w-w_o]||/||w_o|| = " + fmt(ratio_b) + " (limit 0.05)");
  const auto& c1 = curves.rows.back();
  const std::size_t j0 = taps.size();  // anclms columns of the first step size
  const double tail_db = lin_to_db(std::max(c1[j0] * c1[j0], c1[j0 + 1] * c1[j0 + 1]));
  rep.add_check("anclms_taps_below_minus40db", tail_db < -40.0, "final normalized tap error " + fmt(tail_db) + " dB", false);
  rep.add_meta("duration_s", fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return rep;
}

// ------------------------------------------------------------ SINR / attenuation sweep

struct SweepPoint {
  double tx;
  double mu_a, mu_b;
  long long iterations;
  Regime regime;
  double sim_a, sim_b, th_a, th_b;          // SINR dB
  double att_a, att_b, th_att_a, th_att_b;  // attenuation dB
  int div_a, div_b;
};

inline ExperimentReport run_sinr_sweep(const ExperimentConfig& cfg, bool attenuation_primary = false) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto grid = cfg.tx_grid.empty() ? parse_grid("-5:25:5") : cfg.tx_grid;
  const double frac = cfg.mu_frac.value_or(0.1);
  const int M = cfg.M, N = cfg.N;
  std::vector<SweepPoint> pts;
  for (double tx : grid) {
    const Scenario sc = make_scenario(cfg, tx);
    const auto& mom = anclms_moments(sc.sigma_x2, sc.k_tiq(), M, N, cfg.t_samples, moment_seed(cfg.seed));
    SweepPoint p{};
    p.tx = tx;
    p.mu_a = cfg.mu_abs.value_or(frac * alms_ms_bound(sc.sigma_x2, M));
    p.mu_b = cfg.mu_abs.value_or(frac * mom.bound.value());
    const TheoryInputs ia = sc.theory(p.mu_a), ib = sc.theory(p.mu_b);
    p.regime = alms_regime(ia);
    p.th_a = alms_sinr(ia, p.regime);
    p.th_b = anclms_sinr(ib);
    if (cfg.iterations > 0) {
      p.iterations = cfg.iterations;
    } else {
      const long long cap = 2000000;
      const auto ja = alms_transient(ia, cap, p.regime).mse;
      const auto jb = anclms_transient(ib, cap).mse;
      p.iterations = theory_sized_iterations({&ja, &jb}, 30000);
    }
    const long long L = p.iterations + M - 1;
    struct Out {
      double mse_a, mse_b, dp;
      bool da, db;
    };
    auto outs = parallel_map<Out>(cfg.trials, cfg.threads, [&](int i) {
      const TrialData td = make_trial(sc, L, cfg.seed + static_cast<std::uint64_t>(i));
      RunConfig rc;
      rc.M = M;
      rc.N = N;
      rc.k_tiq = sc.k_tiq();
      rc.keep_raw = false;
      rc.block = 1000;
      rc.variant = CancellerVariant::alms;
      rc.mu = p.mu_a;
      const auto ta = run_canceller(td.x, td.d, rc);
      rc.variant = CancellerVariant::anclms;
      rc.mu = p.mu_b;
      const auto tb = run_canceller(td.x, td.d, rc);
      return Out{ta.steady_state_mse, tb.steady_state_mse, tb.diverged ? ta.d_power_steady : tb.d_power_steady,
                 ta.diverged, tb.diverged};
    });
    double sa = 0, sb = 0, dp = 0;
    int na = 0, nb = 0;
    for (const auto& o : outs) {
      if (!o.da) sa += o.mse_a, ++na; else ++p.div_a;
      if (!o.db) sb += o.mse_b, ++nb; else ++p.div_b;
      dp += o.dp;
    }
    dp /= cfg.trials;
    sa = na ? sa / na : kInf;
    sb = nb ? sb / nb : kInf;
    const double psoi = sc.budget.p_x_soi;
    p.sim_a = lin_to_db(psoi / sa);
    p.sim_b = lin_to_db(psoi / sb);
    p.att_a = lin_to_db(dp / sa);
    p.att_b = lin_to_db(dp / sb);
    const auto rows = compute_power_budget(sc.profile, {tx});
    double d_an = 0;
    for (double v : row_values(rows[0])) d_an += std::isfinite(v) ? db_to_lin(v) : 0.0;
    d_an -= db_to_lin(rows[0].soi);  // the SOI is not injected
    p.th_att_a = lin_to_db(d_an * db_to_lin(p.th_a) / psoi);
    p.th_att_b = lin_to_db(d_an * db_to_lin(p.th_b) / psoi);
    pts.push_back(p);
  }

  ExperimentReport rep;
  rep.experiment = attenuation_primary ? "attenuation-sweep" : "sinr-sweep";
  add_common_meta(rep, cfg);
  rep.add_meta("mu_frac", fmt(frac));
  Table sinr{"sinr", "Tx power (dBm)", "SINR (dB)", {"sim_alms", "theory_alms", "sim_anclms", "theory_anclms"}};
  Table att{"attenuation", "Tx power (dBm)", "digital attenuation (dB)",
            {"sim_alms", "theory_alms", "sim_anclms", "theory_anclms"}};
  Table info{"details", "Tx power (dBm)", "", {"mu_alms", "mu_anclms", "iterations", "alms_regime_high",
                                                "alms_diverged", "anclms_diverged"}};
  double worst = 0.0;
  bool order = true, strict = true, low_agree = true;
  std::string worst_at;
  for (const auto& p : pts) {
    sinr.add_row(p.tx, {p.sim_a, p.th_a, p.sim_b, p.th_b});
    att.add_row(p.tx, {p.att_a, p.th_att_a, p.att_b, p.th_att_b});
    info.add_row(p.tx, {p.mu_a, p.mu_b, double(p.iterations), p.regime == Regime::high ? 1.0 : 0.0, double(p.div_a),
                        double(p.div_b)});
    for (double d : {std::abs(p.sim_a - p.th_a), std::abs(p.sim_b - p.th_b)})
      if (!(d <= worst)) worst = std::isfinite(d) ? d : kInf, worst_at = fmt(p.tx);
    order = order && p.sim_b >= p.sim_a - 0.1;
    if (p.tx > 10) strict = strict && p.sim_b > p.sim_a;
    if (p.tx <= -5) low_agree = low_agree && std::abs(p.sim_b - p.sim_a) <= 0.2;
    rep.add_meta("iterations_at_" + fmt(p.tx) + "dBm", std::to_string(p.iterations));
  }
  if (attenuation_primary) {
    rep.tables = {att, sinr, info};
  } else {
    rep.tables = {sinr, att, info};
  }
  rep.add_check("theory_vs_simulation", worst <= 0.5, "max |sim - theory| = " + fmt(worst) + " dB at " + worst_at + " dBm (limit 0.5)");
  rep.add_check("anclms_not_below_alms", order, "ANCLMS >= ALMS - 0.1 dB at every point");
  rep.add_check("anclms_above_alms_over_10dbm", strict, "ANCLMS > ALMS for Tx > 10 dBm");
  rep.add_check("low_power_agreement", low_agree, "|ANCLMS - ALMS| <= 0.2 dB at -5 dBm");
  const auto& last = pts.back();
  rep.add_check("gap_at_top_power", last.sim_b - last.sim_a > 3.0,
                "ANCLMS - ALMS at " + fmt(last.tx) + " dBm = " + fmt(last.sim_b - last.sim_a) + " dB (> 3)");
  rep.add_meta("duration_s", fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return rep;
}

// ------------------------------------------------------------ convergence and pre-whitening

inline long long iterations_to_within(const std::vector<double>& err2_block, int block, double tol_db,
                                      double* steady_db = nullptr) {
  const std::size_t nb = err2_block.size();
  if (nb == 0) return 0;
  const std::size_t from = nb - std::max<std::size_t>(1, nb / 5);
  double s = 0;
  for (std::size_t i = from; i < nb; ++i) s += err2_block[i];
  const double steady = s / static_cast<double>(nb - from);
  if (steady_db) *steady_db = lin_to_db(steady);
  for (std::size_t i = nb; i-- > 0;)
    if (lin_to_db(err2_block[i] / steady) > tol_db) return static_cast<long long>(i + 1) * block;
  return 0;
}

struct ConvergenceSummary {
  long long iters_opt = 0, iters_subopt = 0, iters_white = 0;
  double sigma2_opt = 0, sigma2_sub = 0;
  double mu_opt = 0, mu_sub = 0, mu_white = 0;
};

inline ExperimentReport run_convergence(const ExperimentConfig& cfg, ConvergenceSummary* summary = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double tx = cfg.tx_grid.empty() ? 15.0 : cfg.tx_grid.front();
  const double frac = cfg.mu_frac.value_or(0.005);
  const int M = cfg.M, N = cfg.N, D = 2 * M + 2 * N;
  const Scenario nominal = make_scenario(cfg, tx);
  const double kt = nominal.k_tiq();
  ExperimentReport rep;
  rep.experiment = "convergence";
  add_common_meta(rep, cfg);

  // Condition-number surface over (sigma_x2, k_TIQ).
  Table heat{"condition", "sigma_x2 (dBm)", "rows: k_TIQ (dB)", {}, {}, {}, true};
  std::vector<double> kgrid;
  for (double k = 0; k <= 12.0 + 1e-9; k += 0.5) kgrid.push_back(k), heat.columns.push_back("k_tiq_db=" + fmt(k));
  double cmin = kInf;
  for (double s = -30; s <= 0.0 + 1e-9; s += 0.25) {
    std::vector<double> row;
    for (double k : kgrid) {
      const double c = condition_number(db_to_lin(s), db_to_lin(k));
      row.push_back(c);
      cmin = std::min(cmin, c);
    }
    heat.add_row(s, row);
  }
  Table heat_exact = heat;
  heat_exact.name = "condition_exact";
  for (std::size_t i = 0; i < heat_exact.x.size(); ++i)
    for (std::size_t j = 0; j < kgrid.size(); ++j)
      heat_exact.rows[i][j] = condition_number_exact(db_to_lin(heat_exact.x[i]), db_to_lin(kgrid[j]));

  // Three adaptive runs: eps = 1/6 scaling, a fixed suboptimal power, and whitened at nominal power.
  Scenario opt = nominal, sub = nominal;
  opt.sigma_x2 = std::sqrt(1.0 / (6.0 * kt * kt * kt));
  sub.sigma_x2 = db_to_lin(-10.0);
  const auto& m_opt = anclms_moments(opt.sigma_x2, kt, M, N, cfg.t_samples, moment_seed(cfg.seed));
  const auto& m_sub = anclms_moments(sub.sigma_x2, kt, M, N, cfg.t_samples, moment_seed(cfg.seed));
  const double mu_opt = cfg.mu_abs.value_or(frac * m_opt.bound.value());
  const double mu_sub = cfg.mu_abs.value_or(frac * m_sub.bound.value());

  // Whitened-domain bound from a whitened Gaussian sample at the nominal power.
  double mu_white;
  {
    const long long n = cfg.t_samples;
    const auto xs = gen_proper_gaussian(n + M, nominal.sigma_x2, moment_seed(cfg.seed) + 1);
    const cmat X = regressor_block(xs.samples, CancellerVariant::anclms, M, N, kt, M - 1, n);
    const auto wt = prewhiten_fit(X.leftCols(std::min<long long>(n, 50LL * D)));
    const cmat Xw = wt.phi * X;
    mu_white = cfg.mu_abs.value_or(frac * anclms_ms_bound(sample_covariance(Xw), estimate_fourth_moment(Xw)).value());
  }

  const auto tr_opt = anclms_transient(opt.theory(mu_opt), 3000000).mse;
  const auto tr_sub = anclms_transient(sub.theory(mu_sub), 3000000).mse;
  const long long iters = cfg.iterations > 0 ? cfg.iterations : theory_sized_iterations({&tr_opt, &tr_sub}, 30000);
  const long long pre = 50LL * D;
  const int block = 100;

  struct Out {
    RunTrace o, s, w;
  };
  auto outs = parallel_map<Out>(cfg.trials, cfg.threads, [&](int i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    RunConfig rc;
    rc.variant = CancellerVariant::anclms;
    rc.M = M;
    rc.N = N;
    rc.k_tiq = kt;
    rc.block = block;
    rc.keep_raw = false;
    Out o;
    {
      const TrialData td = make_trial(opt, iters + M - 1, seed);
      rc.mu = mu_opt;
      o.o = run_canceller(td.x, td.d, rc);
    }
    {
      const TrialData td = make_trial(sub, iters + M - 1, seed);
      rc.mu = mu_sub;
      o.s = run_canceller(td.x, td.d, rc);
    }
    {
      const TrialData td = make_trial(nominal, iters + M - 1 + pre, seed);
      rc.mu = mu_white;
      rc.whiten = true;
      rc.preamble = pre;
      o.w = run_canceller(td.x, td.d, rc);
    }
    return o;
  });
  std::vector<RunTrace> vo, vs, vw;
  for (auto& o : outs) vo.push_back(std::move(o.o)), vs.push_back(std::move(o.s)), vw.push_back(std::move(o.w));
  const MeanCurve co = average_traces(vo), cs = average_traces(vs), cw = average_traces(vw);
  const double psoi = nominal.budget.p_x_soi;

  Table conv{"sinr_vs_iteration", "iteration", "SINR (dB)",
             {"sim_optimal", "theory_optimal", "sim_suboptimal", "theory_suboptimal", "sim_whitened"}};
  const std::size_t nb = std::max({co.err2_block.size(), cs.err2_block.size(), cw.err2_block.size()});
  auto at = [&](const std::vector<double>& v, std::size_t k) {
    return k < v.size() ? lin_to_db(psoi / v[k]) : std::nan("");
  };
  auto th_at = [&](const std::vector<double>& J, std::size_t k) {
    // Block mean of the predicted curve over iterations [k*block, (k+1)*block).
    const std::size_t a = k * block, b = std::min(J.size(), (k + 1) * block);
    if (a >= b) return std::nan("");
    double s = 0;
    for (std::size_t i = a; i < b; ++i) s += J[i];
    return lin_to_db(psoi * double(b - a) / s);
  };
  for (std::size_t k = 0; k < nb; ++k)
    conv.add_row(double((k + 1) * block), {at(co.err2_block, k), th_at(tr_opt, k), at(cs.err2_block, k),
                                           th_at(tr_sub, k), at(cw.err2_block, k)});

  double ss_o, ss_s, ss_w;
  ConvergenceSummary sm;
  sm.iters_opt = iterations_to_within(co.err2_block, block, 1.0, &ss_o);
  sm.iters_subopt = iterations_to_within(cs.err2_block, block, 1.0, &ss_s);
  sm.iters_white = iterations_to_within(cw.err2_block, block, 1.0, &ss_w);
  sm.sigma2_opt = opt.sigma_x2;
  sm.sigma2_sub = sub.sigma_x2;
  sm.mu_opt = mu_opt;
  sm.mu_sub = mu_sub;
  sm.mu_white = mu_white;
  if (summary) *summary = sm;

  rep.tables = {conv, heat, heat_exact};
  rep.add_meta("tx_power_dbm", fmt(tx));
  rep.add_meta("iterations", std::to_string(iters));
  rep.add_meta("whitening_preamble", std::to_string(pre));
  rep.add_meta("sigma_x2_optimal_dbm", fmt(lin_to_db(opt.sigma_x2)));
  rep.add_meta("sigma_x2_suboptimal_dbm", fmt(lin_to_db(sub.sigma_x2)));
  rep.add_meta("mu_optimal", fmt9(mu_opt));
  rep.add_meta("mu_suboptimal", fmt9(mu_sub));
  rep.add_meta("mu_whitened", fmt9(mu_white));
  rep.add_meta("iterations_to_1db_optimal", std::to_string(sm.iters_opt));
  rep.add_meta("iterations_to_1db_suboptimal", std::to_string(sm.iters_subopt));
  rep.add_meta("iterations_to_1db_whitened", std::to_string(sm.iters_white));
  rep.add_meta("steady_sinr_db_optimal", fmt(lin_to_db(psoi) - ss_o));
  rep.add_meta("steady_sinr_db_whitened", fmt(lin_to_db(psoi) - ss_w));

  const double cstar = min_condition_number().value;
  rep.add_check("condition_surface_minimum", std::abs(cmin - cstar) / cstar < 0.02,
                "grid minimum " + fmt(cmin, 6) + " vs " + fmt(cstar, 6));
  const double ratio = sm.iters_white > 0 ? double(sm.iters_opt) / double(sm.iters_white) : kInf;
  rep.add_check("whitened_faster", sm.iters_white < sm.iters_opt,
                "iterations to 1 dB: whitened " + std::to_string(sm.iters_white) + ", optimal " +
                    std::to_string(sm.iters_opt) + ", suboptimal " + std::to_string(sm.iters_subopt));
  rep.add_check("speedup_ratio", ratio >= 1.8, "optimal/whitened = " + fmt(ratio) + " (>= 1.8)");
  rep.add_check("optimal_faster_than_suboptimal", sm.iters_opt < sm.iters_subopt,
                "optimal " + std::to_string(sm.iters_opt) + " vs suboptimal " + std::to_string(sm.iters_subopt), false);
  rep.add_meta("duration_s", fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return rep;
}

// ------------------------------------------------------------ step-size bounds probe

struct ProbeCell {
  double multiplier;
  int diverged = 0, converged = 0, trials = 0;
  double median_ratio = std::nan("");
};

inline ExperimentReport run_bounds_probe(const ExperimentConfig& cfg, std::vector<ProbeCell>* alms_cells = nullptr,
                                         std::vector<ProbeCell>* anclms_cells = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double tx = cfg.tx_grid.empty() ? -5.0 : cfg.tx_grid.front();
  const long long iters = cfg.iterations > 0 ? cfg.iterations : 30000;
  const Scenario sc = make_scenario(cfg, tx);
  const int M = cfg.M, N = cfg.N;
  const auto& mom = anclms_moments(sc.sigma_x2, sc.k_tiq(), M, N, cfg.t_samples, moment_seed(cfg.seed));
  const double ba = alms_ms_bound(sc.sigma_x2, M), bb = mom.bound.value();
  const double mean_b = 2.0 / Eigen::SelfAdjointEigenSolver<cmat>(mom.R, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const TheoryInputs base = sc.theory(0.0);
  const Regime reg = alms_regime(base);

  auto theory_mse = [&](CancellerVariant v, double mu) {
    try {
      if (v == CancellerVariant::alms) {
        TheoryInputs in = base;
        in.mu = mu;
        return alms_steady_mse(in, reg);
      }
      if (mu >= bb) return std::nan("");
      return anclms_steady_mse_exact(mom.R, mom.T, mu, sc.budget.noise());
    } catch (const InvalidArgument&) {
      return std::nan("");
    }
  };
  auto probe = [&](CancellerVariant v, double mult, int trials) {
    const double mu = mult * (v == CancellerVariant::alms ? ba : bb);
    const double th = theory_mse(v, mu);
    struct R {
      bool div;
      double mse;
    };
    auto rs = parallel_map<R>(trials, cfg.threads, [&](int i) {
      const TrialData td = make_trial(sc, iters + M - 1, cfg.seed + static_cast<std::uint64_t>(i));
      RunConfig rc;
      rc.variant = v;
      rc.M = M;
      rc.N = N;
      rc.k_tiq = sc.k_tiq();
      rc.mu = mu;
      rc.keep_raw = false;
      const auto t = run_canceller(td.x, td.d, rc);
      return R{t.diverged, t.steady_state_mse};
    });
    ProbeCell c;
    c.multiplier = mult;
    c.trials = trials;
    std::vector<double> ratios;
    for (const auto& r : rs) {
      if (r.div) {
        ++c.diverged;
        continue;
      }
      ratios.push_back(r.mse / th);
      if (std::isfinite(th) && r.mse <= 2.0 * th) ++c.converged;
    }
    c.median_ratio = median(ratios);
    return c;
  };

  ExperimentReport rep;
  rep.experiment = "bounds-probe";
  add_common_meta(rep, cfg);
  rep.add_meta("tx_power_dbm", fmt(tx));
  rep.add_meta("iterations", std::to_string(iters));
  rep.add_meta("alms_ms_bound", fmt9(ba));
  rep.add_meta("alms_mean_bound", fmt9(alms_mean_bound(sc.sigma_x2)));
  rep.add_meta("anclms_ms_bound", fmt9(bb));
  rep.add_meta("anclms_ms_bound_moment_ratio", fmt9(mom.bound.from_moment_ratio));
  rep.add_meta("anclms_ms_bound_gamma", fmt9(mom.bound.from_gamma));
  rep.add_meta("anclms_mean_bound", fmt9(mean_b));
  rep.add_meta("alms_regime", to_string(reg));
  rep.add_meta("divergence_rule", "block residual power > 1e3 x first block");
  rep.add_meta("convergence_rule", "not diverged and steady MSE <= 2 x theory");

  const std::vector<double> mults = {0.5, 0.9, 1.1, 1.5};
  Table t{"bounds_probe", "step size / bound", "fraction of trials",
          {"alms_converged", "alms_diverged", "alms_median_mse_over_theory", "anclms_converged", "anclms_diverged",
           "anclms_median_mse_over_theory"}};
  std::vector<ProbeCell> ca, cb;
  for (double m : mults) {
    ca.push_back(probe(CancellerVariant::alms, m, cfg.trials));
    cb.push_back(probe(CancellerVariant::anclms, m, cfg.trials));
    const auto &a = ca.back(), &b = cb.back();
    t.add_row(m, {double(a.converged) / a.trials, double(a.diverged) / a.trials, a.median_ratio,
                  double(b.converged) / b.trials, double(b.diverged) / b.trials, b.median_ratio});
  }
  if (alms_cells) *alms_cells = ca;
  if (anclms_cells) *anclms_cells = cb;

  // Empirical edge: smallest multiplier at which most trials diverge.
  const int et = std::min(cfg.trials, 10);
  Table edge{"edge_scan", "step size / mean-square bound", "diverged fraction", {"alms", "anclms"}};
  double edge_a = std::nan(""), edge_b = std::nan("");
  for (double m = 0.3; m <= 2.5 + 1e-9; m += 0.05) {
    const auto a = probe(CancellerVariant::alms, m, et), b = probe(CancellerVariant::anclms, m, et);
    edge.add_row(m, {double(a.diverged) / et, double(b.diverged) / et});
    if (std::isnan(edge_a) && 2 * a.diverged > et) edge_a = m;
    if (std::isnan(edge_b) && 2 * b.diverged > et) edge_b = m;
  }
  rep.tables = {t, edge};
  rep.add_meta("alms_empirical_edge_multiplier", fmt(edge_a));
  rep.add_meta("anclms_empirical_edge_multiplier", fmt(edge_b));

  const int need = static_cast<int>(std::ceil(0.9 * cfg.trials));
  auto cell = [](const std::vector<ProbeCell>& v, double m) {
    for (const auto& c : v)
      if (std::abs(c.multiplier - m) < 1e-9) return c;
    return ProbeCell{};
  };
  for (auto [name, cells] : {std::pair{"alms", &ca}, std::pair{"anclms", &cb}}) {
    const auto c9 = cell(*cells, 0.9), c15 = cell(*cells, 1.5);
    rep.add_check(std::string(name) + "_converges_at_0.9", c9.converged >= need,
                  std::to_string(c9.converged) + "/" + std::to_string(c9.trials) +
                      " within 2x theory, median ratio " + fmt(c9.median_ratio) + ", diverged " +
                      std::to_string(c9.diverged));
    rep.add_check(std::string(name) + "_diverges_at_1.5", c15.diverged >= need,
                  std::to_string(c15.diverged) + "/" + std::to_string(c15.trials) + " diverged");
  }
  const double edge_mu = edge_b * bb;
  rep.add_check("anclms_edge_between_bounds", edge_mu >= bb * 0.999 && edge_mu <= mean_b * 1.05,
                "empirical edge " + fmt9(edge_mu) + " in [" + fmt9(bb) + ", " + fmt9(mean_b) + "]", false);
  rep.add_meta("duration_s", fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
  return rep;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "power-budget") return run_power_budget(cfg);
  if (cfg.experiment == "bias") return run_bias(cfg);
  if (cfg.experiment == "sinr-sweep") return run_sinr_sweep(cfg, false);
  if (cfg.experiment == "attenuation-sweep") return run_sinr_sweep(cfg, true);
  if (cfg.experiment == "convergence") return run_convergence(cfg);
  if (cfg.experiment == "bounds-probe") return run_bounds_probe(cfg);
  throw ConfigError("unknown experiment: " + cfg.experiment);
}

}  // namespace fdsic
