#include "pumpshaper/holograms.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace pumpshaper {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

MaskConfig small_canvas() {
  MaskConfig cfg;
  cfg.width = 256;
  cfg.height = 256;
  cfg.pitch = 16e-6;
  cfg.grating_period = 8 * cfg.pitch;
  return cfg;
}

std::vector<PumpProfile> shaped_pumps() {
  const double w = 25e-6;
  return {
      PumpProfile::normalized(w, {{-2, {0.76, -0.11}}, {0, {-0.12, 0.15}}, {2, {0.30, -0.53}}}),
      PumpProfile::normalized(w, {{0, {0.09, -0.02}}, {2, {-0.02, -0.19}}, {4, {0.57, -0.01}}, {6, {0.77, -0.21}}}),
      PumpProfile::normalized(w, {{-4, {-0.25, -0.73}}, {-2, {0.19, -0.10}}, {0, {-0.07, 0.11}}, {2, {0.14, -0.14}}, {4, {-0.54, 0.09}}}),
  };
}

TEST(MaskConfig, Validation) {
  MaskConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.grating_period / cfg.pitch, 8.0);
  cfg.grating_period = 2.0 * cfg.pitch;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.width = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ModifiedLgField, Examples) {
  const auto cfg = small_canvas();
  const double w = 0.5e-3;
  EXPECT_EQ(modified_lg_field(2, w, w, cfg), lg_field(2, w, cfg));
  EXPECT_LT((modified_lg_field(0, w, 0.1e-3, cfg) - lg_field(0, w, cfg)).norm(), 1e-15);
  EXPECT_THROW(modified_lg_field(1, 0.0, w, cfg), DomainError);

  // Same shape as the unit-normalized mode.
  const LGSpec spec(3, w);
  const Field sampled = sample_field(cfg, [&](double rho, double phi) { return lg_amplitude(spec, rho, phi); });
  EXPECT_NEAR(field_overlap(lg_field(3, w, cfg), sampled), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(kDetectionWaistRatio, 1.6);
}

TEST(MatchedWaist, CancelsIncidentEnvelope) {
  const double target = 0.4e-3;
  const double incident = 0.7e-3;
  const double w = matched_mask_waist(target, incident);
  EXPECT_NEAR(1.0 / (w * w) + 1.0 / (incident * incident), 1.0 / (target * target), 1e-6 / (target * target));
  EXPECT_NEAR(matched_mask_waist(target, incident_waist_for_ratio(target)) / target, kDetectionWaistRatio, 1e-12);
  EXPECT_EQ(matched_mask_waist(target, kPlaneWave), target);
  EXPECT_THROW(matched_mask_waist(target, 0.5 * target), DomainError);
}

TEST(InverseSinc, Bisection) {
  for (double a : {0.0, 0.01, 0.3, 0.5, 0.9, 0.999, 1.0}) {
    const double x = inverse_sinc(a);
    EXPECT_GE(x, -std::numbers::pi);
    EXPECT_LE(x, 0.0);
    const double s = x == 0.0 ? 1.0 : std::sin(x) / x;
    EXPECT_NEAR(s, a, 1e-9) << a;
  }
  EXPECT_THROW(inverse_sinc(1.5), DomainError);
  EXPECT_THROW(inverse_sinc(-0.1), DomainError);
}

TEST(EncodeMask, UniformTargetIsBlazedSawtooth) {
  const auto cfg = small_canvas();
  const auto mask = encode_mask(Field::Ones(cfg.height, cfg.width), cfg);
  for (int c = 0; c < cfg.width; ++c) {
    double expected = std::fmod(-std::numbers::pi + kTwoPi * cfg.x(c) / cfg.grating_period, kTwoPi);
    if (expected < 0.0) expected += kTwoPi;
    for (int r = 0; r < cfg.height; r += 17) EXPECT_NEAR(mask.phase(r, c), expected, 1e-9);
  }
}

TEST(EncodeMask, ZeroAmplitudeIsFlat) {
  const auto cfg = small_canvas();
  Field target = Field::Ones(cfg.height, cfg.width);
  target.leftCols(cfg.width / 2).setZero();
  const auto mask = encode_mask(target, cfg);
  EXPECT_LT(mask.phase.leftCols(cfg.width / 2).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(encode_mask(Field::Zero(cfg.height, cfg.width), cfg), DomainError);
  EXPECT_THROW(encode_mask(Field::Ones(3, 3), cfg), DomainError);
}

TEST(EncodeMask, PropertyRangeIsHalfOpenTurn) {
  const auto cfg = small_canvas();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  Field target(cfg.height, cfg.width);
  for (Eigen::Index i = 0; i < target.size(); ++i) target(i) = {g(rng), g(rng)};
  const auto mask = encode_mask(target, cfg);
  EXPECT_GE(mask.phase.minCoeff(), 0.0);
  EXPECT_LT(mask.phase.maxCoeff(), kTwoPi);
}

TEST(DiffractionOracle, PlaneWaveRoundTrip) {
  const MaskConfig cfg;
  const Field target = lg_field(2, kDefaultMaskModeWaist, cfg);
  EXPECT_GE(round_trip_overlap(target, target, cfg), 0.98);
}

TEST(DiffractionOracle, FlatMaskHasNoFirstOrder) {
  const auto cfg = small_canvas();
  const auto r = diffraction_oracle({Eigen::MatrixXd::Zero(cfg.height, cfg.width), cfg});
  EXPECT_LT(r.first_order_power, 1e-6 * r.total_power);
}

TEST(DiffractionOracle, UnseparableOrdersAreConfigError) {
  auto cfg = small_canvas();
  cfg.grating_period = 64 * cfg.pitch;  // first order 4 bins from the zeroth
  EXPECT_THROW(diffraction_oracle({Eigen::MatrixXd::Zero(cfg.height, cfg.width), cfg}), ConfigError);
}

TEST(DiffractionOracle, ShapedPumpsRoundTrip) {
  const MaskConfig cfg;
  for (const auto& pump : shaped_pumps()) {
    const Field target = pump_mask_field(pump, cfg);
    EXPECT_GE(round_trip_overlap(target, target, cfg), 0.95);
  }
}

TEST(DiffractionOracle, PropertyLinearPhaseMovesSpotOnly) {
  const auto cfg = small_canvas();
  const double w = 0.3e-3;
  const Field base = lg_field(1, w, cfg);
  const int shift_bins = 5;
  Field tilted = base;
  for (int c = 0; c < cfg.width; ++c) tilted.col(c) *= std::polar(1.0, kTwoPi * shift_bins * c / cfg.width);

  const auto spot_column = [&](const Field& target) {
    Field f = diffraction_oracle(encode_mask(target, cfg)).first_order;
    detail::fft2(f, FFTW_FORWARD);
    double weight = 0.0, moment = 0.0;
    for (int c = 0; c < cfg.width; ++c) {
      const double p = f.col(c).squaredNorm();
      weight += p;
      moment += p * detail::signed_bin(c, cfg.width);
    }
    return moment / weight;
  };
  EXPECT_NEAR(spot_column(tilted) - spot_column(base), shift_bins, 0.05);
  EXPECT_NEAR(round_trip_overlap(tilted, tilted, cfg), round_trip_overlap(base, base, cfg), 0.01);
}

TEST(DetectionMasks, ModifiedWaistCompensatesFiniteIncidentBeam) {
  auto cfg = small_canvas();
  const double target_waist = 0.3e-3;
  const int l = 2;
  const Field ideal = lg_field(l, target_waist, cfg);
  double previous = 1.0;
  for (double scale : {6.0, 3.0, 2.0, 1.5, 1.2}) {
    cfg.incident_waist = scale * target_waist;
    const double plain = round_trip_overlap(lg_field(l, target_waist, cfg), ideal, cfg);
    EXPECT_LT(plain, previous) << scale;
    previous = plain;
    const Field matched = modified_lg_field(l, matched_mask_waist(target_waist, cfg.incident_waist), target_waist, cfg);
    EXPECT_GE(round_trip_overlap(matched, ideal, cfg), 0.99) << scale;
  }

  cfg.incident_waist = incident_waist_for_ratio(target_waist);
  for (int ll : {-2, -1, 1, 2}) {
    const Field ideal_l = lg_field(ll, target_waist, cfg);
    const double plain = round_trip_overlap(lg_field(ll, target_waist, cfg), ideal_l, cfg);
    const double modified = round_trip_overlap(detection_mask_field(ll, target_waist, cfg), ideal_l, cfg);
    EXPECT_GT(modified, plain) << ll;
    EXPECT_GE(modified, 0.99) << ll;
  }
}

}  // namespace
}  // namespace pumpshaper
