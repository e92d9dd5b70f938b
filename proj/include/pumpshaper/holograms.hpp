#pragma once

#include <Eigen/Dense>
#include <fftw3.h>

#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "pumpshaper/errors.hpp"
#include "pumpshaper/modes.hpp"

namespace pumpshaper {

// Gaussian-to-polynomial width ratio w / w~ for detection masks.
inline constexpr double kDetectionWaistRatio = 1.6;

// Beam waist of encoded modes in the SLM plane.
inline constexpr double kDefaultMaskModeWaist = 0.75e-3;

inline constexpr double kPlaneWave = std::numeric_limits<double>::infinity();

// Fewest Fourier bins allowed between the first-order centre and the
// window edge.
inline constexpr int kMinOrderSeparationBins = 8;

struct MaskConfig {
  int width = 1024;
  int height = 1024;
  double pitch = 8e-6;
  double grating_period = 64e-6;
  double incident_waist = kPlaneWave;

  void validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("mask dimensions must be positive");
    if (!(pitch > 0.0) || !std::isfinite(pitch)) throw ConfigError("pixel pitch must be positive");
    if (!(grating_period > 2.0 * pitch) || !std::isfinite(grating_period)) {
      throw ConfigError("grating period must exceed two pixels");
    }
    if (!(incident_waist > 0.0)) throw ConfigError("incident waist must be positive");
  }

  double x(int col) const { return (col - width / 2) * pitch; }
  double y(int row) const { return (row - height / 2) * pitch; }
};

// Samples indexed (row, col) = (y, x).
using Field = Eigen::MatrixXcd;

// Phase values in [0, 2 pi).
struct PhaseMask {
  Eigen::MatrixXd phase;
  MaskConfig config;
};

template <typename Fn>
Field sample_field(const MaskConfig& cfg, Fn&& fn) {
  cfg.validate();
  Field f(cfg.height, cfg.width);
  for (int c = 0; c < cfg.width; ++c) {
    for (int r = 0; r < cfg.height; ++r) {
      const double x = cfg.x(c), y = cfg.y(r);
      f(r, c) = fn(std::hypot(x, y), std::atan2(y, x));
    }
  }
  return f;
}

// (rho/w~)^{|l|} exp(-rho^2/w^2) exp(i l phi); L^{|l|}_0 is identically one.
inline Field modified_lg_field(int l, double waist, double poly_waist, const MaskConfig& cfg) {
  if (!(waist > 0.0) || !(poly_waist > 0.0)) throw DomainError("mask waists must be positive");
  const int al = std::abs(l);
  return sample_field(cfg, [&](double rho, double phi) {
    return std::pow(rho / poly_waist, al) * std::exp(-rho * rho / (waist * waist)) * detail::azimuthal_phase(l, phi);
  });
}

inline Field lg_field(int l, double waist, const MaskConfig& cfg) { return modified_lg_field(l, waist, waist, cfg); }

// Detection mask field for a target mode of waist w~: Gaussian width
// kDetectionWaistRatio * w~.
inline Field detection_mask_field(int l, double target_waist, const MaskConfig& cfg,
                                  double ratio = kDetectionWaistRatio) {
  if (!(ratio >= 1.0)) throw DomainError("waist ratio must be at least one");
  return modified_lg_field(l, ratio * target_waist, target_waist, cfg);
}

// Mask Gaussian width that, times an incident Gaussian, leaves an envelope of
// width `target_waist`: 1/w^2 = 1/w~^2 - 1/w_in^2.
inline double matched_mask_waist(double target_waist, double incident_waist) {
  if (!(target_waist > 0.0)) throw DomainError("target waist must be positive");
  if (!(incident_waist > target_waist)) throw DomainError("incident waist must exceed the target waist");
  if (std::isinf(incident_waist)) return target_waist;
  return 1.0 / std::sqrt(1.0 / (target_waist * target_waist) - 1.0 / (incident_waist * incident_waist));
}

// Incident waist for which a fixed ratio w / w~ is exactly matched.
inline double incident_waist_for_ratio(double target_waist, double ratio = kDetectionWaistRatio) {
  if (!(ratio > 1.0)) throw DomainError("waist ratio must exceed one");
  return target_waist / std::sqrt(1.0 - 1.0 / (ratio * ratio));
}

// Pump superposition with every LG component at `mode_waist`; the pump
// rotation is already carried by the coefficients.
inline Field pump_mask_field(const PumpProfile& pump, const MaskConfig& cfg, double mode_waist = kDefaultMaskModeWaist) {
  const PumpProfile scaled(mode_waist, pump.coefficients());
  return sample_field(cfg, [&](double rho, double phi) { return scaled.field(rho, phi); });
}

inline Field incident_field(const MaskConfig& cfg) {
  const double w = cfg.incident_waist;
  if (std::isinf(w)) return Field::Ones(cfg.height, cfg.width);
  return sample_field(cfg, [&](double rho, double) { return cplx{std::exp(-rho * rho / (w * w)), 0.0}; });
}

inline constexpr double kInverseSincTolerance = 1e-10;

// x in [-pi, 0] with sin(x)/x = a, by bisection.
inline double inverse_sinc(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError("inverse_sinc argument must lie in [0, 1]");
  if (a == 1.0) return 0.0;
  if (a == 0.0) return -std::numbers::pi;
  double lo = -std::numbers::pi, hi = 0.0;
  while (hi - lo > kInverseSincTolerance) {
    const double mid = 0.5 * (lo + hi);
    (std::sin(mid) / mid < a ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Amplitude-modulated blazed grating along x:
// phase = M mod(F + 2 pi x / period, 2 pi), M = 1 + sinc^-1(A)/pi,
// F = arg(target) - pi M, A = |target| / max |target|.
inline PhaseMask encode_mask(const Field& target, const MaskConfig& cfg) {
  cfg.validate();
  if (target.rows() != cfg.height || target.cols() != cfg.width) throw DomainError("target field does not match mask size");
  const double peak = target.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) throw DomainError("target field is identically zero");
  PhaseMask mask{Eigen::MatrixXd(cfg.height, cfg.width), cfg};
  const double two_pi = 2.0 * std::numbers::pi;
  for (int c = 0; c < cfg.width; ++c) {
    const double carrier = two_pi * cfg.x(c) / cfg.grating_period;
    for (int r = 0; r < cfg.height; ++r) {
      const double a = std::min(1.0, std::abs(target(r, c)) / peak);
      const double m = 1.0 + inverse_sinc(a) / std::numbers::pi;
      const double f = std::arg(target(r, c)) - std::numbers::pi * m;
      double wrapped = std::fmod(f + carrier, two_pi);
      if (wrapped < 0.0) wrapped += two_pi;
      double v = m * wrapped;
      if (v >= two_pi) v = 0.0;
      mask.phase(r, c) = v;
    }
  }
  return mask;
}

struct DiffractionResult {
  Field first_order;  // demodulated to baseband, same sampling as the mask
  double first_order_power = 0.0;
  double total_power = 0.0;
};

namespace detail {

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

// In-place 2-D transform of a column-major (rows x cols) array. FFTW's
// row-major convention sees it as (cols x rows), which is the same transform.
inline void fft2(Field& f, int sign) {
  auto* data = reinterpret_cast<fftw_complex*>(f.data());
  const std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
      fftw_plan_dft_2d(static_cast<int>(f.cols()), static_cast<int>(f.rows()), data, data, sign, FFTW_ESTIMATE));
  if (!plan) throw NumericalError("FFTW planning failed");
  fftw_execute(plan.get());
}

// Signed frequency index of FFT bin k out of n.
inline int signed_bin(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace detail

// exp(i mask) times the incident beam, filtered in the Fourier plane by a
// disc around the first order (radius half the order spacing) and shifted
// back to baseband. Not thread-safe: FFTW planning is global.
inline DiffractionResult diffraction_oracle(const PhaseMask& mask) {
  const MaskConfig& cfg = mask.config;
  cfg.validate();
  if (mask.phase.rows() != cfg.height || mask.phase.cols() != cfg.width) throw DomainError("mask size does not match config");
  const double period_px = cfg.grating_period / cfg.pitch;
  const double centre = cfg.width / period_px;  // first-order bin along x
  const double radius = 0.5 * centre;
  if (radius < kMinOrderSeparationBins || radius > 0.5 * cfg.height) {
    throw ConfigError("first diffraction order is not separable on a " + std::to_string(cfg.width) + "x" +
                      std::to_string(cfg.height) + " grid with a " + std::to_string(period_px) + "-pixel period");
  }

  Field f = incident_field(cfg);
  for (int c = 0; c < cfg.width; ++c) {
    for (int r = 0; r < cfg.height; ++r) f(r, c) *= std::polar(1.0, mask.phase(r, c));
  }
  DiffractionResult out;
  out.total_power = f.squaredNorm();

  detail::fft2(f, FFTW_FORWARD);
  const double fy_scale = static_cast<double>(cfg.width) / cfg.height;  // height bins in width-bin units
  for (int c = 0; c < cfg.width; ++c) {
    const double dx = detail::signed_bin(c, cfg.width) - centre;
    for (int r = 0; r < cfg.height; ++r) {
      const double dy = detail::signed_bin(r, cfg.height) * fy_scale;
      if (dx * dx + dy * dy > radius * radius) f(r, c) = 0.0;
    }
  }
  detail::fft2(f, FFTW_BACKWARD);
  f /= static_cast<double>(cfg.width) * cfg.height;
  for (int c = 0; c < cfg.width; ++c) {
    const cplx demod = std::polar(1.0, -2.0 * std::numbers::pi * cfg.x(c) / cfg.grating_period);
    f.col(c) *= demod;
  }
  out.first_order_power = f.squaredNorm();
  out.first_order = std::move(f);
  return out;
}

// |<a|b>| / (|a| |b|).
inline double field_overlap(const Field& a, const Field& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("fields differ in size");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateInputError("overlap with a zero field");
  const cplx inner = (a.array().conjugate() * b.array()).sum();
  return std::abs(inner) / (na * nb);
}

// Encode `mask_field`, diffract, and compare the first order with `ideal`.
inline double round_trip_overlap(const Field& mask_field, const Field& ideal, const MaskConfig& cfg) {
  return field_overlap(diffraction_oracle(encode_mask(mask_field, cfg)).first_order, ideal);
}

}  // namespace pumpshaper
