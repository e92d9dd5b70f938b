#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pumpshaper/errors.hpp"
#include "pumpshaper/modes.hpp"
#include "pumpshaper/quadrature.hpp"

namespace pumpshaper {

enum class PhaseMatching { gaussian, sinc };

inline std::string to_string(PhaseMatching m) { return m == PhaseMatching::gaussian ? "gaussian" : "sinc"; }

inline PhaseMatching phase_matching_from_string(const std::string& s) {
  if (s == "gaussian") return PhaseMatching::gaussian;
  if (s == "sinc") return PhaseMatching::sinc;
  throw ConfigError("unknown phase-matching model '" + s + "' (expected gaussian or sinc)");
}

struct CrystalConfig {
  // Width constant of the Gaussian stand-in exp(-a b) for sinc(b).
  static constexpr double kDefaultGaussianFit = 0.193;
  static constexpr double kDefaultRefractiveIndex = 1.8;

  double length = 15e-3;          // m
  double pump_wavevector = 0.0;   // rad/m, inside the crystal
  PhaseMatching model = PhaseMatching::gaussian;
  double gaussian_fit = kDefaultGaussianFit;

  static CrystalConfig from_wavelength(double length, double vacuum_wavelength,
                                       double refractive_index = kDefaultRefractiveIndex,
                                       PhaseMatching model = PhaseMatching::gaussian,
                                       double gaussian_fit = kDefaultGaussianFit) {
    if (!(vacuum_wavelength > 0.0)) throw DomainError("pump wavelength must be positive");
    if (!(refractive_index > 0.0)) throw DomainError("refractive index must be positive");
    CrystalConfig c{length, 2.0 * std::numbers::pi * refractive_index / vacuum_wavelength, model, gaussian_fit};
    c.validate();
    return c;
  }

  void validate() const {
    if (!(length > 0.0)) throw DomainError("crystal length must be positive");
    if (!(pump_wavevector > 0.0)) throw DomainError("pump wavevector must be positive");
    if (!(gaussian_fit > 0.0)) throw DomainError("gaussian fit constant must be positive");
  }
};

struct DetectionConfig {
  double waist = 0.0;  // m
  int l_min = -6;
  int l_max = 6;

  void validate() const {
    if (!(waist > 0.0)) throw DomainError("detection waist must be positive");
    if (l_min > l_max) throw DomainError("detection window has l_min > l_max");
  }
  int size() const { return l_max - l_min + 1; }
};

struct Waists {
  double pump;       // w
  double detection;  // sigma
};

// w = sqrt(L / k_p) and sigma = sqrt(2) w.
inline Waists optimal_waists(const CrystalConfig& crystal) {
  crystal.validate();
  const double w = std::sqrt(crystal.length / crystal.pump_wavevector);
  return {w, std::numbers::sqrt2 * w};
}

// Two-photon OAM amplitudes c[l_s][l_i] over a square window.
class JointSpectrum {
 public:
  JointSpectrum(int l_min, int l_max, Eigen::MatrixXcd amplitudes, double leakage = 0.0)
      : l_min_(l_min), l_max_(l_max), amplitudes_(std::move(amplitudes)), leakage_(leakage) {
    if (l_min_ > l_max_) throw DomainError("joint spectrum window has l_min > l_max");
    if (amplitudes_.rows() != size() || amplitudes_.cols() != size()) {
      throw DomainError("joint spectrum matrix does not match its window");
    }
  }

  int l_min() const { return l_min_; }
  int l_max() const { return l_max_; }
  int size() const { return l_max_ - l_min_ + 1; }
  bool contains(int l) const { return l >= l_min_ && l <= l_max_; }

  cplx at(int l_s, int l_i) const {
    if (!contains(l_s) || !contains(l_i)) throw DomainError("OAM pair outside spectrum window");
    return amplitudes_(l_s - l_min_, l_i - l_min_);
  }
  const Eigen::MatrixXcd& amplitudes() const { return amplitudes_; }

  double total_power() const { return amplitudes_.cwiseAbs2().sum(); }

  // Fraction of power that falls outside the window, estimated on a wider
  // window when the spectrum was built.
  double leakage() const { return leakage_; }

  JointSpectrum normalized() const {
    const double p = total_power();
    if (!(p > 0.0)) throw DegenerateInputError("joint spectrum has zero power");
    return JointSpectrum(l_min_, l_max_, amplitudes_ / std::sqrt(p), leakage_);
  }

 private:
  int l_min_;
  int l_max_;
  Eigen::MatrixXcd amplitudes_;
  double leakage_;
};

namespace detail {

// All spectral integrals use the dimensionless momentum u = q * sigma, in
// which the detection modes have momentum waist 2.
inline constexpr double kDetectionMomentumWaist = 2.0;

inline cplx minus_i_pow(int n) {
  switch (((n % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, -1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, 1.0};
  }
}

inline double binomial(int n, int k) {
  return std::round(std::tgamma(n + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(n - k + 1.0)));
}

// Coefficient of the dimensionless phase-matching argument: b = kappa |u_-|^2,
// from L dk_z / 2 with dk_z = |q_s - q_i|^2 / (4 k_p).
inline double phase_matching_scale(const CrystalConfig& crystal, double sigma) {
  return crystal.length / (8.0 * crystal.pump_wavevector * sigma * sigma);
}

inline double phase_matching(const CrystalConfig& crystal, double b) {
  if (crystal.model == PhaseMatching::gaussian) return std::exp(-crystal.gaussian_fit * b);
  return b == 0.0 ? 1.0 : std::sin(b) / b;
}

// Monomial z_+^a conj(z_+)^b z_-^c conj(z_-)^d with a coefficient.
struct Monomial {
  int a, b, c, d;
  double coeff;
};

// conj(z^{(l)}) of z = (z_+ + sign z_-) / 2, where z^{(l)} is z^l for l >= 0
// and conj(z)^{|l|} otherwise.
inline std::vector<Monomial> conj_mode_polynomial(int l, double sign) {
  const int n = std::abs(l);
  std::vector<Monomial> out;
  out.reserve(n + 1);
  const double scale = std::pow(0.5, n);
  for (int k = 0; k <= n; ++k) {
    const double coeff = binomial(n, k) * std::pow(sign, n - k) * scale;
    if (l >= 0) {
      out.push_back({0, k, 0, n - k, coeff});  // conj(z)^n
    } else {
      out.push_back({k, 0, n - k, 0, coeff});  // z^n
    }
  }
  return out;
}

}  // namespace detail

// Evaluates the biphoton amplitude by separating sum and difference momenta.
// The detection-mode product is expanded into monomials of (z_+, z_-); the
// sum-momentum integral against the pump is a Gamma function and the
// difference-momentum integral against the phase-matching function is done by
// adaptive Gauss-Legendre. Per-component couplings are cached, so evaluating
// a new pump superposition is a weighted sum.
class SpectrumModel {
 public:
  SpectrumModel(CrystalConfig crystal, DetectionConfig detection, double pump_waist)
      : crystal_(crystal), detection_(detection), pump_waist_(pump_waist) {
    crystal_.validate();
    detection_.validate();
    if (!(pump_waist_ > 0.0)) throw DomainError("pump waist must be positive");
    kappa_ = detail::phase_matching_scale(crystal_, detection_.waist);
    pump_momentum_waist_ = 2.0 * detection_.waist / pump_waist_;
  }

  const CrystalConfig& crystal() const { return crystal_; }
  const DetectionConfig& detection() const { return detection_; }
  double pump_waist() const { return pump_waist_; }

  // Unnormalized amplitude contributed by a unit-weight pump component l_p
  // to the pair (l_s, l_p - l_s).
  cplx coupling(int l_p, int l_s) const {
    const auto key = std::make_pair(l_p, l_s);
    if (const auto it = coupling_cache_.find(key); it != coupling_cache_.end()) return it->second;
    const cplx v = compute_coupling(l_p, l_s);
    coupling_cache_.emplace(key, v);
    return v;
  }

  // Unnormalized amplitudes on the detection window.
  JointSpectrum raw(const PumpProfile& pump) const { return raw_on_window(pump, detection_.l_min, detection_.l_max); }

  // Normalized spectrum with truncation leakage estimated on a window widened
  // by six on each side.
  JointSpectrum spectrum(const PumpProfile& pump) const {
    check_pump(pump);
    const JointSpectrum inner = raw(pump);
    const double p_in = inner.total_power();
    if (!(p_in > 0.0)) throw DegenerateInputError("pump produces no pairs inside the detection window");
    const JointSpectrum outer = raw_on_window(pump, detection_.l_min - 6, detection_.l_max + 6);
    const double leakage = std::max(0.0, 1.0 - p_in / outer.total_power());
    return JointSpectrum(inner.l_min(), inner.l_max(), inner.amplitudes() / std::sqrt(p_in), leakage);
  }

  void check_pump(const PumpProfile& pump) const {
    for (const int l : pump.components()) {
      if (l < 2 * detection_.l_min || l > 2 * detection_.l_max) {
        throw DomainError("pump component l = " + std::to_string(l) + " cannot be split inside the detection window");
      }
    }
  }

 private:
  JointSpectrum raw_on_window(const PumpProfile& pump, int l_min, int l_max) const {
    if (std::abs(pump.waist() - pump_waist_) > 1e-12 * pump_waist_) {
      throw DomainError("pump waist differs from the waist this model was built for");
    }
    const int n = l_max - l_min + 1;
    Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& [l_p, alpha] : pump.coefficients()) {
      for (int l_s = l_min; l_s <= l_max; ++l_s) {
        const int l_i = l_p - l_s;
        if (l_i < l_min || l_i > l_max) continue;
        c(l_s - l_min, l_i - l_min) += alpha * coupling(l_p, l_s);
      }
    }
    return JointSpectrum(l_min, l_max, std::move(c));
  }

  // 2 pi int_0^inf chi(kappa r^2) r^{2m} exp(-r^2/8) r dr
  double difference_integral(int m) const {
    if (const auto it = difference_cache_.find(m); it != difference_cache_.end()) return it->second;
    const double gauss_width = std::sqrt(8.0);
    const double outer = gauss_width * (std::sqrt(2.0 * m + 1.0) + 6.0);
    const auto integrand = [&](double r) {
      return std::pow(r, 2 * m + 1) * std::exp(-r * r / 8.0) * detail::phase_matching(crystal_, kappa_ * r * r);
    };
    const double v = 2.0 * std::numbers::pi * quad::integrate_adaptive(integrand, 0.0, outer);
    difference_cache_.emplace(m, v);
    return v;
  }

  // 2 pi int_0^inf r^n exp(-beta r^2) r dr with beta = 1/W_p^2 + 1/8.
  double sum_integral(int n) const {
    const double beta = 1.0 / (pump_momentum_waist_ * pump_momentum_waist_) + 1.0 / 8.0;
    const double e = 0.5 * n + 1.0;
    return std::numbers::pi * std::exp(std::lgamma(e) - e * std::log(beta));
  }

  cplx compute_coupling(int l_p, int l_s) const {
    const int l_i = l_p - l_s;
    const double wd = detail::kDetectionMomentumWaist;
    const double wp = pump_momentum_waist_;
    const auto sig = detail::conj_mode_polynomial(l_s, +1.0);
    const auto idl = detail::conj_mode_polynomial(l_i, -1.0);
    double acc = 0.0;
    for (const auto& s : sig) {
      for (const auto& i : idl) {
        const int a = s.a + i.a;
        const int b = s.b + i.b;
        const int c = s.c + i.c;
        const int d = s.d + i.d;
        if (c != d) continue;           // difference-momentum angular selection
        if (l_p + a - b != 0) continue;  // sum-momentum angular selection
        acc += s.coeff * i.coeff * sum_integral(std::abs(l_p) + a + b) * difference_integral(c);
      }
    }
    // Mode normalizations, (sqrt(2)/W)^{|l|} prefactors and the 1/4 Jacobian
    // of (u_s, u_i) -> (u_+, u_-).
    const double pump_pref = detail::lg_norm(l_p, wp) * std::pow(std::numbers::sqrt2 / wp, std::abs(l_p));
    const double det_pref = detail::lg_norm(l_s, wd) * detail::lg_norm(l_i, wd) *
                            std::pow(std::numbers::sqrt2 / wd, std::abs(l_s) + std::abs(l_i));
    const cplx phase = detail::minus_i_pow(std::abs(l_p)) * std::conj(detail::minus_i_pow(std::abs(l_s))) *
                       std::conj(detail::minus_i_pow(std::abs(l_i)));
    return 0.25 * pump_pref * det_pref * acc * phase;
  }

  CrystalConfig crystal_;
  DetectionConfig detection_;
  double pump_waist_;
  double kappa_ = 0.0;
  double pump_momentum_waist_ = 0.0;
  mutable std::map<std::pair<int, int>, cplx> coupling_cache_;
  mutable std::map<int, double> difference_cache_;
};

// Normalized joint spectrum for `pump`; sum |c|^2 = 1 over the window.
inline JointSpectrum joint_amplitude(const PumpProfile& pump, const CrystalConfig& crystal, const DetectionConfig& det) {
  return SpectrumModel(crystal, det, pump.waist()).spectrum(pump);
}

// |c|^2 normalized to unit sum.
inline Eigen::MatrixXd spiral_probabilities(const JointSpectrum& js) {
  Eigen::MatrixXd p = js.amplitudes().cwiseAbs2();
  const double s = p.sum();
  if (!(s > 0.0)) throw DegenerateInputError("joint spectrum has zero power");
  return p / s;
}

// |c|^2 divided by its maximum, as plotted in spiral-spectrum figures.
inline Eigen::MatrixXd spiral_probabilities_display(const JointSpectrum& js) {
  Eigen::MatrixXd p = js.amplitudes().cwiseAbs2();
  const double m = p.maxCoeff();
  if (!(m > 0.0)) throw DegenerateInputError("joint spectrum has zero power");
  return p / m;
}

// Normalized weights along the conservation diagonal l_s + l_i = l_pump.
inline std::vector<double> diagonal_weights(const JointSpectrum& js, int l_pump = 0) {
  std::vector<double> w;
  double total = 0.0;
  for (int l_s = js.l_min(); l_s <= js.l_max(); ++l_s) {
    const int l_i = l_pump - l_s;
    if (!js.contains(l_i)) continue;
    w.push_back(std::norm(js.at(l_s, l_i)));
    total += w.back();
  }
  if (!(total > 0.0)) throw DegenerateInputError("conservation diagonal carries no power");
  for (auto& x : w) x /= total;
  return w;
}

// K_az = 1 / sum lambda^2.
inline double azimuthal_schmidt_number(std::span<const double> lambdas) {
  double sum = 0.0;
  double sq = 0.0;
  for (const double x : lambdas) {
    if (x < 0.0) throw DomainError("Schmidt weights must be non-negative");
    sum += x;
    sq += x * x;
  }
  if (!(sum > 0.0)) throw DomainError("Schmidt weights are all zero");
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("Schmidt weights must sum to one");
  return 1.0 / sq;
}

struct OracleGrid {
  int radial_nodes = 160;
  int azimuthal_points = 128;
};

namespace detail {

// Momentum-space LG mode (unitary Fourier transform of the real-space mode):
// (-i)^{|l|} times an LG mode of waist W.
inline cplx momentum_mode(int l, double waist, double ux, double uy) {
  const double r2 = ux * ux + uy * uy;
  const cplx z = l >= 0 ? cplx{ux, uy} : cplx{ux, -uy};
  const double pref = lg_norm(l, waist) * std::pow(std::numbers::sqrt2 / waist, std::abs(l));
  return minus_i_pow(std::abs(l)) * pref * std::pow(z, std::abs(l)) * std::exp(-r2 / (waist * waist));
}

}  // namespace detail

// Direct grid integration of the biphoton overlap in (r_s, r_i, phi_s - phi_i),
// independent of the monomial expansion in SpectrumModel. The overall
// rotation angle integrates to 2 pi delta(l_p, l_s + l_i) per pump component.
// Returns unnormalized amplitudes in the same units as SpectrumModel::raw.
inline JointSpectrum brute_force_spectrum(const PumpProfile& pump, const CrystalConfig& crystal,
                                          const DetectionConfig& det, OracleGrid grid = {}) {
  crystal.validate();
  det.validate();
  const double wd = detail::kDetectionMomentumWaist;
  const double wp = 2.0 * det.waist / pump.waist();
  const double kappa = detail::phase_matching_scale(crystal, det.waist);
  const int lmax_abs = std::max(std::abs(det.l_min), std::abs(det.l_max));
  const double outer = wd * (std::sqrt(static_cast<double>(lmax_abs)) + 5.0);

  for (const int l : pump.components()) {
    if (l < 2 * det.l_min || l > 2 * det.l_max) throw DomainError("pump component cannot be split inside the window");
  }

  const auto& rule = quad::gauss_legendre(static_cast<std::size_t>(grid.radial_nodes));
  const int nr = grid.radial_nodes;
  std::vector<double> r(nr), wr(nr);
  for (int k = 0; k < nr; ++k) {
    r[k] = 0.5 * outer * (rule.nodes[k] + 1.0);
    wr[k] = 0.5 * outer * rule.weights[k];
  }
  const int m = grid.azimuthal_points;
  const int n = det.size();
  Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(n, n);
  Eigen::MatrixXcd coarse = Eigen::MatrixXcd::Zero(n, n);

  std::vector<double> cos_t(m), sin_t(m);
  for (int k = 0; k < m; ++k) {
    cos_t[k] = std::cos(2.0 * std::numbers::pi * k / m);
    sin_t[k] = std::sin(2.0 * std::numbers::pi * k / m);
  }

  // conj(D_{l_s}) at every (r_s, t) and conj(D_{l_i}) on the x axis.
  std::vector<cplx> sig_modes(static_cast<std::size_t>(n) * nr * m);
  std::vector<cplx> idl_modes(static_cast<std::size_t>(n) * nr);
  for (int j = 0; j < n; ++j) {
    const int l = det.l_min + j;
    for (int ir = 0; ir < nr; ++ir) {
      idl_modes[static_cast<std::size_t>(j) * nr + ir] = std::conj(detail::momentum_mode(l, wd, r[ir], 0.0));
      for (int k = 0; k < m; ++k) {
        sig_modes[(static_cast<std::size_t>(j) * nr + ir) * m + k] =
            std::conj(detail::momentum_mode(l, wd, r[ir] * cos_t[k], r[ir] * sin_t[k]));
      }
    }
  }

  const double dt = 2.0 * std::numbers::pi / m;
  std::vector<cplx> phi_vals(m);
  for (const auto& [l_p, alpha] : pump.coefficients()) {
    for (int is = 0; is < nr; ++is) {
      for (int ii = 0; ii < nr; ++ii) {
        for (int k = 0; k < m; ++k) {
          const double sx = r[is] * cos_t[k];
          const double sy = r[is] * sin_t[k];
          const double mx = sx - r[ii];
          const double b = kappa * (mx * mx + sy * sy);
          phi_vals[k] = detail::momentum_mode(l_p, wp, sx + r[ii], sy) * detail::phase_matching(crystal, b);
        }
        const double jac = r[is] * r[ii] * wr[is] * wr[ii] * 2.0 * std::numbers::pi;
        for (int l_s = det.l_min; l_s <= det.l_max; ++l_s) {
          const int l_i = l_p - l_s;
          if (l_i < det.l_min || l_i > det.l_max) continue;
          const cplx* ds = &sig_modes[(static_cast<std::size_t>(l_s - det.l_min) * nr + is) * m];
          cplx fine{}, half{};
          for (int k = 0; k < m; ++k) {
            const cplx term = phi_vals[k] * ds[k];
            fine += term;
            if (k % 2 == 0) half += term;
          }
          const cplx w = alpha * jac * idl_modes[static_cast<std::size_t>(l_i - det.l_min) * nr + ii];
          c(l_s - det.l_min, l_i - det.l_min) += w * fine * dt;
          coarse(l_s - det.l_min, l_i - det.l_min) += w * half * (2.0 * dt);
        }
      }
    }
  }
  const double scale = std::sqrt(c.cwiseAbs2().sum());
  if (scale > 0.0 && (c - coarse).norm() > 1e-6 * scale) {
    throw NumericalError("oracle azimuthal grid is under-resolved");
  }
  return JointSpectrum(det.l_min, det.l_max, std::move(c));
}

// Exact-sinc validation oracle; slow path with the same contract as
// joint_amplitude.
inline JointSpectrum sinc_oracle(const PumpProfile& pump, CrystalConfig crystal, const DetectionConfig& det,
                                 OracleGrid grid = {}) {
  crystal.model = PhaseMatching::sinc;
  const JointSpectrum raw = brute_force_spectrum(pump, crystal, det, grid);
  if (!(raw.total_power() > 0.0)) throw DegenerateInputError("pump produces no pairs inside the detection window");
  return raw.normalized();
}

}  // namespace pumpshaper
