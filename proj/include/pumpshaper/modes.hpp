#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pumpshaper/errors.hpp"
#include "pumpshaper/quadrature.hpp"

namespace pumpshaper {

using cplx = std::complex<double>;

// Largest |l| accepted in a pump superposition. Detection windows default to
// [-6, 6], so every pump index up to twice that is representable.
inline constexpr int kMaxPumpOam = 12;

// Laguerre-Gaussian mode LG_0^l. The radial index is pinned to zero.
class LGSpec {
 public:
  LGSpec(int l, double waist, int p = 0) : l_(l), waist_(waist) {
    if (p != 0) throw DomainError("only radial index p = 0 is supported, got p = " + std::to_string(p));
    if (!(waist > 0.0) || !std::isfinite(waist)) throw DomainError("LG waist must be positive and finite");
  }

  int l() const { return l_; }
  int p() const { return 0; }
  double waist() const { return waist_; }

  friend bool operator==(const LGSpec&, const LGSpec&) = default;

 private:
  int l_;
  double waist_;
};

namespace detail {

inline double factorial(int n) { return std::tgamma(static_cast<double>(n) + 1.0); }

// Normalization of (sqrt(2) rho / w)^{|l|} exp(-rho^2/w^2) over the plane.
inline double lg_norm(int l, double waist) {
  return std::sqrt(2.0 / (std::numbers::pi * factorial(std::abs(l)))) / waist;
}

inline cplx azimuthal_phase(int l, double phi) { return std::polar(1.0, static_cast<double>(l) * phi); }

}  // namespace detail

// Unit-normalized LG_0^l field at the waist plane, in 1/m.
inline cplx lg_amplitude(const LGSpec& spec, double rho, double phi) {
  if (rho < 0.0) throw DomainError("lg_amplitude: rho must be non-negative");
  const int al = std::abs(spec.l());
  const double w = spec.waist();
  const double x = std::numbers::sqrt2 * rho / w;
  const double radial = detail::lg_norm(spec.l(), w) * std::pow(x, al) * std::exp(-rho * rho / (w * w));
  return radial * detail::azimuthal_phase(spec.l(), phi);
}

// <a|b> by adaptive Gauss-Legendre in rho on [0, 6 max(w)] and an
// equispaced azimuthal rule, which is exact for the band-limited e^{i dl phi}.
inline cplx mode_inner_product(const LGSpec& a, const LGSpec& b) {
  const double outer = 6.0 * std::max(a.waist(), b.waist());
  constexpr int kAzimuthal = 64;
  const auto radial = [&](double rho) {
    cplx acc{};
    for (int k = 0; k < kAzimuthal; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / kAzimuthal;
      acc += std::conj(lg_amplitude(a, rho, phi)) * lg_amplitude(b, rho, phi);
    }
    return acc * (2.0 * std::numbers::pi / kAzimuthal) * rho;
  };
  return quad::integrate_adaptive(radial, 0.0, outer);
}

// Closed-form overlap of two p = 0 modes sharing l, used to cross-check the
// quadrature: 2 w1 w2 / (w1^2 + w2^2) raised to |l| + 1.
inline double lg_overlap_closed_form(int l, double w1, double w2) {
  return std::pow(2.0 * w1 * w2 / (w1 * w1 + w2 * w2), std::abs(l) + 1);
}

using CoefficientMap = std::map<int, cplx>;

// Pump field as a superposition of LG_0^l modes of common waist.
class PumpProfile {
 public:
  static constexpr double kNormTolerance = 1e-12;

  PumpProfile(double waist, CoefficientMap coefficients, double rotation = 0.0)
      : waist_(waist), coefficients_(std::move(coefficients)), rotation_(rotation) {
    if (!(waist_ > 0.0) || !std::isfinite(waist_)) throw DomainError("pump waist must be positive and finite");
    if (coefficients_.empty()) throw DomainError("pump superposition is empty");
    for (const auto& [l, a] : coefficients_) {
      if (std::abs(l) > kMaxPumpOam) {
        throw DomainError("pump OAM index " + std::to_string(l) + " outside truncation window");
      }
      if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) throw DomainError("pump coefficient is not finite");
    }
    if (std::abs(power() - 1.0) > kNormTolerance) {
      throw DomainError("pump coefficients must have unit total power, got " + std::to_string(power()));
    }
  }

  // Rescales the coefficients to unit power before validation.
  static PumpProfile normalized(double waist, CoefficientMap coefficients, double rotation = 0.0) {
    double p = 0.0;
    for (const auto& [l, a] : coefficients) p += std::norm(a);
    if (!(p > 0.0)) throw DegenerateInputError("pump superposition has zero power");
    const double s = 1.0 / std::sqrt(p);
    for (auto& [l, a] : coefficients) a *= s;
    return PumpProfile(waist, std::move(coefficients), rotation);
  }

  static PumpProfile gaussian(double waist) { return PumpProfile(waist, {{0, cplx{1.0, 0.0}}}); }

  double waist() const { return waist_; }
  const CoefficientMap& coefficients() const { return coefficients_; }
  double rotation() const { return rotation_; }

  cplx coefficient(int l) const {
    const auto it = coefficients_.find(l);
    return it == coefficients_.end() ? cplx{} : it->second;
  }

  double power() const {
    double p = 0.0;
    for (const auto& [l, a] : coefficients_) p += std::norm(a);
    return p;
  }

  std::vector<int> components() const {
    std::vector<int> ls;
    ls.reserve(coefficients_.size());
    for (const auto& [l, a] : coefficients_) ls.push_back(l);
    return ls;
  }

  // Real-space field at the waist plane.
  cplx field(double rho, double phi) const {
    cplx acc{};
    for (const auto& [l, a] : coefficients_) acc += a * lg_amplitude(LGSpec(l, waist_), rho, phi);
    return acc;
  }

 private:
  double waist_;
  CoefficientMap coefficients_;
  double rotation_;
};

// Rotating the pump about its axis by theta rephases each component,
// alpha_l -> alpha_l exp(i l theta). With this sign the l = +2 component, and
// hence the |1,1> term of a qutrit, advances by +2 theta.
inline PumpProfile rotate_pump(const PumpProfile& profile, double theta) {
  CoefficientMap rotated;
  for (const auto& [l, a] : profile.coefficients()) rotated.emplace(l, a * detail::azimuthal_phase(l, theta));
  return PumpProfile(profile.waist(), std::move(rotated), profile.rotation() + theta);
}

// HG_10 = (LG^{-1} + LG^{+1}) / sqrt(2).
inline std::vector<std::pair<int, cplx>> hg10_in_lg_basis() {
  const double s = std::numbers::sqrt2 / 2.0;
  return {{-1, cplx{s, 0.0}}, {1, cplx{s, 0.0}}};
}

}  // namespace pumpshaper
