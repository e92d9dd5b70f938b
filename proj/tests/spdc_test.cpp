#include "pumpshaper/spdc.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace pumpshaper {
namespace {

CrystalConfig nominal_crystal() { return CrystalConfig::from_wavelength(15e-3, 405e-9, 1.8); }

struct NominalSetup {
  CrystalConfig crystal = nominal_crystal();
  Waists waists = optimal_waists(crystal);
  DetectionConfig det{waists.detection, -6, 6};
};

PumpProfile single(double waist, int l) { return PumpProfile(waist, {{l, cplx{1.0, 0.0}}}); }

double kaz_on_diagonal(const JointSpectrum& js, int l_pump) {
  const auto w = diagonal_weights(js, l_pump);
  return azimuthal_schmidt_number(w);
}

TEST(OptimalWaists, NominalCrystal) {
  const auto c = nominal_crystal();
  // Direct evaluation: k_p = 2 pi n / lambda, w = sqrt(L / k_p).
  const double expected = std::sqrt(15e-3 / (2.0 * std::numbers::pi * 1.8 / 405e-9));
  const auto w = optimal_waists(c);
  EXPECT_NEAR(w.pump, expected, 1e-15);
  EXPECT_NEAR(w.pump, 23.18e-6, 0.01e-6);
  EXPECT_DOUBLE_EQ(w.detection / w.pump, std::numbers::sqrt2);
  auto longer = c;
  longer.length *= 4.0;
  EXPECT_NEAR(optimal_waists(longer).pump, 2.0 * w.pump, 1e-18);
}

TEST(CrystalConfig, Validation) {
  EXPECT_THROW(CrystalConfig::from_wavelength(0.0, 405e-9), DomainError);
  EXPECT_THROW(CrystalConfig::from_wavelength(1e-3, -405e-9), DomainError);
  EXPECT_THROW(CrystalConfig::from_wavelength(1e-3, 405e-9, 1.8, PhaseMatching::gaussian, 0.0), DomainError);
  EXPECT_THROW(phase_matching_from_string("tophat"), ConfigError);
}

TEST(JointAmplitude, GaussianPumpOnlyAntiDiagonal) {
  NominalSetup s;
  const auto js = joint_amplitude(PumpProfile::gaussian(s.waists.pump), s.crystal, s.det);
  for (int ls = -6; ls <= 6; ++ls) {
    for (int li = -6; li <= 6; ++li) {
      if (ls + li != 0) {
        EXPECT_EQ(std::abs(js.at(ls, li)), 0.0);
      } else {
        EXPECT_GT(std::abs(js.at(ls, li)), 0.0);
      }
    }
  }
  EXPECT_NEAR(js.total_power(), 1.0, 1e-12);
  EXPECT_LT(js.leakage(), 1e-4);
}

TEST(JointAmplitude, LTwoPumpShiftsToUpperDiagonalAndWidens) {
  NominalSetup s;
  const auto js2 = joint_amplitude(single(s.waists.pump, 2), s.crystal, s.det);
  for (int ls = -6; ls <= 6; ++ls) {
    for (int li = -6; li <= 6; ++li) {
      if (ls != 2 - li) {
        EXPECT_EQ(std::abs(js2.at(ls, li)), 0.0);
      }
    }
  }
  const auto js0 = joint_amplitude(PumpProfile::gaussian(s.waists.pump), s.crystal, s.det);
  EXPECT_GT(kaz_on_diagonal(js2, 2), kaz_on_diagonal(js0, 0));
}

TEST(JointAmplitude, DiagonalDecreasesWithAbsL) {
  NominalSetup s;
  const auto js = joint_amplitude(PumpProfile::gaussian(s.waists.pump), s.crystal, s.det);
  const auto p = spiral_probabilities(js);
  for (int l = 0; l < 6; ++l) {
    EXPECT_GT(p(l + 6, -l + 6), p(l + 1 + 6, -l - 1 + 6));
    EXPECT_NEAR(p(l + 6, -l + 6), p(-l + 6, l + 6), 1e-14);
  }
}

TEST(JointAmplitude, PumpOutsideWindowIsDomainError) {
  NominalSetup s;
  DetectionConfig narrow{s.waists.detection, -1, 1};
  EXPECT_THROW(joint_amplitude(single(s.waists.pump, 4), s.crystal, narrow), DomainError);
  EXPECT_THROW(PumpProfile(s.waists.pump, {}), DomainError);
}

TEST(JointAmplitude, PropertyOamConservationForMixedPumps) {
  NominalSetup s;
  SpectrumModel model(s.crystal, s.det, s.waists.pump);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    CoefficientMap m;
    for (int l = -6; l <= 6; l += 1 + trial % 3) m[l] = {g(rng), g(rng)};
    const auto pump = PumpProfile::normalized(s.waists.pump, m);
    const auto js = model.spectrum(pump);
    for (int ls = -6; ls <= 6; ++ls) {
      for (int li = -6; li <= 6; ++li) {
        if (!m.contains(ls + li)) {
          EXPECT_EQ(std::abs(js.at(ls, li)), 0.0);
        }
      }
    }
  }
}

TEST(JointAmplitude, LinearityInPumpBeforeNormalization) {
  NominalSetup s;
  SpectrumModel model(s.crystal, s.det, s.waists.pump);
  const CoefficientMap a{{-2, {0.3, 0.4}}, {0, {0.1, -0.2}}};
  const CoefficientMap b{{0, {0.5, 0.0}}, {2, {-0.2, 0.7}}, {4, {0.0, 0.3}}};
  const cplx ca{0.6, -0.3}, cb{-0.2, 0.9};
  CoefficientMap sum;
  for (const auto& [l, v] : a) sum[l] += ca * v;
  for (const auto& [l, v] : b) sum[l] += cb * v;
  double n = 0.0;
  for (const auto& [l, v] : sum) n += std::norm(v);
  n = std::sqrt(n);
  CoefficientMap unit_a = a, unit_b = b;
  double na = 0.0, nb = 0.0;
  for (const auto& [l, v] : a) na += std::norm(v);
  for (const auto& [l, v] : b) nb += std::norm(v);
  const Eigen::MatrixXcd raw_a = model.raw(PumpProfile::normalized(s.waists.pump, unit_a)).amplitudes() * std::sqrt(na);
  const Eigen::MatrixXcd raw_b = model.raw(PumpProfile::normalized(s.waists.pump, unit_b)).amplitudes() * std::sqrt(nb);
  const Eigen::MatrixXcd raw_sum = model.raw(PumpProfile::normalized(s.waists.pump, sum)).amplitudes() * n;
  EXPECT_LT((raw_sum - (ca * raw_a + cb * raw_b)).norm(), 1e-12 * raw_sum.norm());
}

TEST(JointAmplitude, GlobalPhaseAndRotationCovariance) {
  NominalSetup s;
  SpectrumModel model(s.crystal, s.det, s.waists.pump);
  const auto pump = PumpProfile::normalized(s.waists.pump, {{-2, {0.76, -0.11}}, {0, {-0.12, 0.15}}, {2, {0.30, -0.53}}});
  const auto base = model.spectrum(pump);

  const cplx phase = std::polar(1.0, 0.77);
  CoefficientMap shifted;
  for (const auto& [l, a] : pump.coefficients()) shifted[l] = a * phase;
  const auto js_phase = model.spectrum(PumpProfile(s.waists.pump, shifted));
  EXPECT_LT((js_phase.amplitudes() - phase * base.amplitudes()).norm(), 1e-12);
  EXPECT_LT((spiral_probabilities(js_phase) - spiral_probabilities(base)).norm(), 1e-13);

  const double theta = 0.41;
  const auto rotated = model.spectrum(rotate_pump(pump, theta));
  for (int ls = -6; ls <= 6; ++ls) {
    for (int li = -6; li <= 6; ++li) {
      const cplx expected = base.at(ls, li) * std::polar(1.0, (ls + li) * theta);
      EXPECT_NEAR(std::abs(rotated.at(ls, li) - expected), 0.0, 1e-13);
    }
  }
}

TEST(SpiralProbabilities, Normalization) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(3, 3);
  m(0, 2) = {1.0, 0.0};
  m(2, 0) = {0.0, 1.0};
  const JointSpectrum js(-1, 1, m);
  const auto p = spiral_probabilities(js);
  EXPECT_DOUBLE_EQ(p(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(p(2, 0), 0.5);
  EXPECT_EQ(p(1, 1), 0.0);
  const auto d = spiral_probabilities_display(js);
  EXPECT_DOUBLE_EQ(d.maxCoeff(), 1.0);
  EXPECT_THROW(spiral_probabilities(JointSpectrum(-1, 1, Eigen::MatrixXcd::Zero(3, 3))), DegenerateInputError);
}

TEST(SchmidtNumber, Examples) {
  const std::vector<double> one{1.0, 0.0, 0.0};
  const std::vector<double> two{0.5, 0.5};
  EXPECT_DOUBLE_EQ(azimuthal_schmidt_number(one), 1.0);
  EXPECT_DOUBLE_EQ(azimuthal_schmidt_number(two), 2.0);
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_THROW(azimuthal_schmidt_number(zero), DomainError);
  const std::vector<double> negative{1.5, -0.5};
  EXPECT_THROW(azimuthal_schmidt_number(negative), DomainError);
}

TEST(SchmidtNumber, PropertyBoundsAndPermutationInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(1 + trial % 9);
    double s = 0.0;
    for (auto& x : w) s += (x = u(rng));
    for (auto& x : w) x /= s;
    const double k = azimuthal_schmidt_number(w);
    EXPECT_GE(k, 1.0 - 1e-12);
    EXPECT_LE(k, static_cast<double>(w.size()) + 1e-12);
    std::shuffle(w.begin(), w.end(), rng);
    EXPECT_NEAR(azimuthal_schmidt_number(w), k, 1e-12);
  }
}

TEST(SchmidtNumber, PaperRegimeAndRotationInvariance) {
  NominalSetup s;
  const auto pump = PumpProfile::gaussian(s.waists.pump);
  const auto js = joint_amplitude(pump, s.crystal, s.det);
  const double k = kaz_on_diagonal(js, 0);
  EXPECT_NEAR(k, 2.0, 0.3);
  const auto js_rot = joint_amplitude(rotate_pump(pump, 1.1), s.crystal, s.det);
  EXPECT_NEAR(kaz_on_diagonal(js_rot, 0), k, 1e-12);
}

// The semi-analytic route and the direct grid integration must agree when
// both use the Gaussian phase-matching function.
TEST(BruteForceOracle, AgreesWithSemiAnalyticRoute) {
  NominalSetup s;
  DetectionConfig det{s.waists.detection, -3, 3};
  SpectrumModel model(s.crystal, det, s.waists.pump);
  const auto pump = PumpProfile::normalized(s.waists.pump, {{-2, {0.76, -0.11}}, {0, {-0.12, 0.15}}, {2, {0.30, -0.53}}});
  const auto fast = model.raw(pump).amplitudes();
  const auto slow = brute_force_spectrum(pump, s.crystal, det, {96, 64}).amplitudes();
  EXPECT_LT((fast - slow).norm(), 1e-7 * fast.norm());
}

TEST(BruteForceOracle, AgreesForOddAndHighOrderComponents) {
  NominalSetup s;
  DetectionConfig det{s.waists.detection, -4, 4};
  SpectrumModel model(s.crystal, det, s.waists.pump);
  const auto pump = PumpProfile::normalized(s.waists.pump, {{-5, {0.2, 0.1}}, {1, {0.5, -0.3}}, {6, {0.0, 0.4}}});
  const auto fast = model.raw(pump).amplitudes();
  const auto slow = brute_force_spectrum(pump, s.crystal, det, {112, 64}).amplitudes();
  EXPECT_LT((fast - slow).norm(), 1e-7 * fast.norm());
}

TEST(SincOracle, SymmetryAndConservationZeros) {
  NominalSetup s;
  DetectionConfig det{s.waists.detection, -3, 3};
  const auto pump = PumpProfile::gaussian(s.waists.pump);
  const auto oracle = sinc_oracle(pump, s.crystal, det, {96, 64});
  const auto model = joint_amplitude(pump, s.crystal, det);
  for (int ls = -3; ls <= 3; ++ls) {
    for (int li = -3; li <= 3; ++li) {
      EXPECT_EQ(std::abs(oracle.at(ls, li)) == 0.0, std::abs(model.at(ls, li)) == 0.0);
      EXPECT_NEAR(std::abs(oracle.at(ls, li) - oracle.at(li, ls)), 0.0, 1e-12);
    }
  }
  EXPECT_NEAR(oracle.total_power(), 1.0, 1e-12);
}

TEST(SpectrumModel, SincModelMatchesSincOracle) {
  NominalSetup s;
  DetectionConfig det{s.waists.detection, -3, 3};
  auto crystal = s.crystal;
  crystal.model = PhaseMatching::sinc;
  const auto pump = PumpProfile::normalized(s.waists.pump, {{0, {0.6, 0.0}}, {2, {0.0, 0.8}}});
  const auto fast = joint_amplitude(pump, crystal, det).amplitudes();
  const auto slow = sinc_oracle(pump, crystal, det, {96, 64}).amplitudes();
  EXPECT_LT((fast - slow).norm(), 1e-6);
}

}  // namespace
}  // namespace pumpshaper
