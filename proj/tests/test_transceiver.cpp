#include <gtest/gtest.h>

#include <sstream>

#include "fdsic/transceiver.hpp"

using namespace fdsic;

namespace {

double power(const ComplexSequence& s) {
  double p = 0;
  for (const auto& z : s.samples) p += std::norm(z);
  return p / static_cast<double>(s.size());
}

TransceiverProfile at_tx(TransceiverProfile p, double tx) {
  p.tx_power_dbm = tx;
  return p;
}

}  // namespace

TEST(Budget, QuantizationNoiseExample) {
  const auto p = type2_profile();
  EXPECT_NEAR(quantization_noise(p) / 1e-6, 1.0, 1e-3);
}

TEST(Budget, QuantizationNoiseFallsWithBits) {
  auto p = type2_profile();
  double prev = kInf;
  for (int b = 4; b <= 16; ++b) {
    p.adc_bits = b;
    const double q = quantization_noise(p);
    EXPECT_LT(q, prev);
    prev = q;
  }
}

TEST(Budget, SignalOfInterestMeetsSnrTarget) {
  const auto p = type2_profile();
  for (double tx : {-5.0, 10.0, 25.0}) {
    const auto b = budget_for_tx(p, tx);
    EXPECT_NEAR(b.p_x_soi / b.sigma_v2, p.snr_req(), 1e-9 * p.snr_req());
    EXPECT_NEAR(b.p_x_soi, p.p_sen() * p.k_lna() * b.k_bb * p.k_riq(), 1e-12 * b.p_x_soi);
  }
}

TEST(Budget, ThermalNoiseVanishesWithInfiniteSnr) {
  auto p = type2_profile();
  p.snr_req_db = 300.0;
  EXPECT_LT(budget_for_tx(p, 25.0).sigma_v2, 1e-25);
}

TEST(Budget, SourcePowerAndPaCoefficient) {
  const auto p = type2_profile();
  EXPECT_NEAR(sigma_x2_for_tx(p, 25.0), db_to_lin(25.0 - 27.0 - 6.0), 1e-12);
  EXPECT_LT(pa_alpha1(p), 0.0);
  EXPECT_NEAR(std::abs(pa_alpha1(p)), 4.0 / 3.0 * std::sqrt(p.alpha0_sq()) / 100.0, 1e-12);
  EXPECT_THROW(compute_noise_budget(p, 0.0, 1e-5), InvalidArgument);
}

TEST(Channels, ImageRejectionRatioHolds) {
  const auto p = type2_profile();
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const auto c = synthesize_channels(p, 5, 4, seed);
    EXPECT_NEAR(lin_to_db(c.h.squaredNorm() / c.g.squaredNorm()), 25.0, 0.04);
    EXPECT_NEAR(lin_to_db(c.h_imd.squaredNorm() / c.g_imd.squaredNorm()), 25.0, 0.04);
  }
}

TEST(Channels, EnergiesMatchBudget) {
  const auto p = type2_profile();
  const auto c = synthesize_channels(p, 5, 4, 3);
  const auto n = channel_norms(p, budget_for_tx(p, p.tx_power_dbm));
  EXPECT_NEAR(c.h.squaredNorm() / n.h2, 1.0, 1e-12);
  EXPECT_NEAR(c.h_imd.squaredNorm() / n.h_imd2, 1.0, 1e-12);
}

TEST(Channels, IdealImageRejectionRemovesImagePaths) {
  auto p = type2_profile();
  p.irr_db = kInf;
  const auto c = synthesize_channels(p, 5, 4, 8);
  EXPECT_EQ(c.g.squaredNorm(), 0.0);
  EXPECT_EQ(c.g_imd.squaredNorm(), 0.0);
}

TEST(Channels, DeterministicAndValidated) {
  const auto p = type2_profile();
  const auto a = synthesize_channels(p, 5, 4, 12), b = synthesize_channels(p, 5, 4, 12);
  EXPECT_EQ(a.anclms_weights(), b.anclms_weights());
  EXPECT_NE(a.h, synthesize_channels(p, 5, 4, 13).h);
  EXPECT_THROW(synthesize_channels(p, 4, 4, 1), InvalidArgument);
  EXPECT_THROW(synthesize_channels(p, 0, 0, 1), InvalidArgument);
  const auto c = synthesize_channels(p, 3, 0, 1);
  EXPECT_EQ(c.N(), 0);
}

TEST(Render, ComponentsSumToObservation) {
  const auto p = at_tx(type2_profile(), 20.0);
  const auto b = budget_for_tx(p, 20.0);
  const auto ch = synthesize_channels(p, 5, 4, 4);
  const auto x = gen_proper_gaussian(5000, b.sigma_x2, 5);
  const auto o = render_observation(x, ch, b, p, 6, true);
  double worst = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    cd s{};
    for (const auto& [name, seq] : o.components()) s += (*seq)[n];
    worst = std::max(worst, std::abs(o.d[n] - s));
  }
  EXPECT_EQ(worst, 0.0);
}

TEST(Render, ZeroChannelsAndNoiseGiveZero) {
  const auto p = type2_profile();
  NoiseBudget b;
  const auto x = gen_proper_gaussian(200, 1.0, 1);
  const auto o = render_observation(x, ChannelSet::zeros(3, 1), b, p, 2);
  for (const auto& z : o.d.samples) EXPECT_EQ(z, cd(0, 0));
}

TEST(Render, IdentityChannelReproducesInput) {
  const auto p = type2_profile();
  NoiseBudget b;
  auto ch = ChannelSet::zeros(3, 1);
  ch.h(0) = 1.0;
  const auto x = gen_proper_gaussian(200, 1.0, 1);
  const auto o = render_observation(x, ch, b, p, 2);
  EXPECT_EQ(o.d.samples, x.samples);
}

TEST(Render, ImdPowerMatchesSixthMoment) {
  const auto p = at_tx(type2_profile(), 25.0);
  const auto b = budget_for_tx(p, 25.0);
  const auto ch = synthesize_channels(p, 5, 4, 4);
  const auto x = gen_proper_gaussian(400000, b.sigma_x2, 77);
  const auto o = render_observation(x, ch, b, p, 78);
  const double expect = 6.0 * std::pow(p.k_tiq(), 3) * std::pow(b.sigma_x2, 3) * ch.h_imd.squaredNorm();
  const double ratio = power(o.imd_si) / expect;
  EXPECT_GT(ratio, 0.95);
  EXPECT_LT(ratio, 1.05);
  EXPECT_NEAR(power(o.thermal) / b.sigma_v2, 1.0, 0.02);
}

TEST(Render, RejectsShortInput) {
  const auto p = type2_profile();
  const auto ch = synthesize_channels(p, 5, 4, 1);
  const auto x = gen_proper_gaussian(5, 1.0, 1);
  EXPECT_THROW(render_observation(x, ch, budget_for_tx(p, 25), p, 1), InvalidArgument);
}

TEST(Render, LeanPathMatchesComponentsWithoutNoise) {
  const auto p = type2_profile();
  NoiseBudget b;
  const auto ch = synthesize_channels(p, 5, 4, 9);
  const auto x = gen_proper_gaussian(1000, 0.05, 3);
  const auto o = render_observation(x, ch, b, p, 1);
  auto rng = make_rng(1);
  const auto d = render_d(x.samples, ch, p.k_tiq(), 0.0, rng);
  for (std::size_t n = 0; n < d.size(); ++n) EXPECT_NEAR(std::abs(d[n] - o.d[n]), 0.0, 1e-12);
}

TEST(PowerBudget, ImdGrowsThreeDbPerDb) {
  const auto rows = compute_power_budget(type2_profile(), {0.0, 10.0});
  // Both components are referred through the same AGC gain, so compare to linear SI.
  const double d_imd = (rows[1].imd_si - rows[1].linear_si) - (rows[0].imd_si - rows[0].linear_si);
  EXPECT_NEAR(d_imd, 20.0, 1e-9);
}

TEST(PowerBudget, Type2CrossoverAndType1Dominance) {
  const auto rows = compute_power_budget(type2_profile(), {-5, 0, 5, 10, 25});
  for (const auto& r : rows) {
    if (r.tx_power_dbm < 15) EXPECT_GT(r.thermal, r.quantization);
    if (r.tx_power_dbm > 20) EXPECT_LT(r.thermal, r.quantization);
  }
  for (const auto& r : compute_power_budget(type1_profile(), {-5, 5, 15, 25})) {
    EXPECT_GT(r.linear_si, r.imd_si);
    EXPECT_GT(r.image_si, r.image_imd_si);
  }
  EXPECT_THROW(compute_power_budget(type2_profile(), {}), InvalidArgument);
}

TEST(Profile, FileMatchesBuiltIn) {
  const auto f = load_profile(std::string(FDSIC_PROFILE_DIR) + "/type2.profile");
  const auto b = type2_profile();
  EXPECT_EQ(f.p_sen_dbm, b.p_sen_dbm);
  EXPECT_EQ(f.irr_db, b.irr_db);
  EXPECT_EQ(f.adc_bits, b.adc_bits);
  EXPECT_EQ(f.rf_attenuation_db, b.rf_attenuation_db);
  const auto t1 = load_profile(std::string(FDSIC_PROFILE_DIR) + "/type1.profile");
  EXPECT_EQ(t1.rf_separation_db + t1.rf_attenuation_db, 70.0);
}

TEST(Profile, Errors) {
  std::istringstream bad("bogus_key = 3\n");
  EXPECT_THROW(profile_from_kv(parse_kv(bad, "inline")), ConfigError);
  EXPECT_THROW(load_profile("/nonexistent/profile"), ConfigError);
  std::istringstream inf("irr_db = inf\n");
  EXPECT_EQ(profile_from_kv(parse_kv(inf, "inline")).image_ratio(), 0.0);
}
