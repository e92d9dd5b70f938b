#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pumpshaper/errors.hpp"
#include "pumpshaper/modes.hpp"
#include "pumpshaper/spdc.hpp"

namespace pumpshaper {

// Single-photon OAM window [l_min, l_max]. Two-photon states live on the
// product space with index (l_s - l_min) * d + (l_i - l_min).
struct OamWindow {
  int l_min = -1;
  int l_max = 1;

  int dim() const { return l_max - l_min + 1; }
  bool contains(int l) const { return l >= l_min && l <= l_max; }
  int local(int l) const {
    if (!contains(l)) throw DomainError("OAM index " + std::to_string(l) + " outside window");
    return l - l_min;
  }
  int pair_index(int l_s, int l_i) const { return local(l_s) * dim() + local(l_i); }

  static OamWindow qudit(int d) {
    switch (d) {
      case 3: return {-1, 1};
      case 4: return {0, 3};
      case 5: return {-2, 2};
      default: throw DomainError("no standard window for d = " + std::to_string(d));
    }
  }

  friend bool operator==(const OamWindow&, const OamWindow&) = default;
};

inline constexpr double kStateNormTolerance = 1e-12;

class StateVector {
 public:
  StateVector(OamWindow window, Eigen::VectorXcd amplitudes) : window_(window), amps_(std::move(amplitudes)) {
    if (window_.l_min > window_.l_max) throw DomainError("state window has l_min > l_max");
    if (amps_.size() != window_.dim() * window_.dim()) throw DomainError("state size does not match window");
    if (std::abs(amps_.squaredNorm() - 1.0) > kStateNormTolerance) throw DomainError("state vector is not unit norm");
  }

  static StateVector normalized(OamWindow window, Eigen::VectorXcd amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0)) throw DegenerateInputError("state vector is zero");
    return StateVector(window, amplitudes / n);
  }

  // Normalized superposition of |l_s, l_i> terms.
  static StateVector from_terms(OamWindow window, const std::vector<std::pair<std::pair<int, int>, cplx>>& terms) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(window.dim() * window.dim());
    for (const auto& [pair, a] : terms) v(window.pair_index(pair.first, pair.second)) += a;
    return normalized(window, std::move(v));
  }

  const OamWindow& window() const { return window_; }
  const Eigen::VectorXcd& amplitudes() const { return amps_; }
  cplx at(int l_s, int l_i) const { return amps_(window_.pair_index(l_s, l_i)); }
  Eigen::MatrixXcd projector() const { return amps_ * amps_.adjoint(); }

 private:
  OamWindow window_;
  Eigen::VectorXcd amps_;
};

// (e^{i t1}|-1,-1> + |0,0> + e^{i t2}|1,1>) / sqrt(3).
inline StateVector maximally_entangled_qutrit(double phase_minus = 0.0, double phase_plus = 0.0) {
  return StateVector::from_terms({-1, 1}, {{{-1, -1}, std::polar(1.0, phase_minus)},
                                           {{0, 0}, cplx{1.0, 0.0}},
                                           {{1, 1}, std::polar(1.0, phase_plus)}});
}

// Equal-weight superposition over a list of pairs.
inline StateVector maximally_entangled(OamWindow window, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<std::pair<std::pair<int, int>, cplx>> terms;
  for (const auto& p : pairs) terms.push_back({p, cplx{1.0, 0.0}});
  return StateVector::from_terms(window, terms);
}

// Restriction of a joint spectrum to a smaller window, renormalized.
inline StateVector state_from_spectrum(const JointSpectrum& js, OamWindow window) {
  Eigen::VectorXcd v(window.dim() * window.dim());
  for (int l_s = window.l_min; l_s <= window.l_max; ++l_s) {
    for (int l_i = window.l_min; l_i <= window.l_max; ++l_i) v(window.pair_index(l_s, l_i)) = js.at(l_s, l_i);
  }
  return StateVector::normalized(window, std::move(v));
}

class DensityMatrix {
 public:
  static constexpr double kHermitianTolerance = 1e-12;
  static constexpr double kTraceTolerance = 1e-12;
  static constexpr double kEigenFloor = -1e-10;

  DensityMatrix(OamWindow window, Eigen::MatrixXcd rho) : window_(window), rho_(std::move(rho)) {
    const int n = window_.dim() * window_.dim();
    if (rho_.rows() != n || rho_.cols() != n) throw DomainError("density matrix size does not match window");
    if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > kHermitianTolerance) {
      throw DomainError("density matrix is not Hermitian");
    }
    if (std::abs(rho_.trace() - cplx{1.0, 0.0}) > kTraceTolerance) throw DomainError("density matrix trace is not one");
    if (eigenvalues().minCoeff() < kEigenFloor) throw DomainError("density matrix is not positive semidefinite");
  }

  static DensityMatrix pure(const StateVector& psi) { return DensityMatrix(psi.window(), psi.projector()); }

  static DensityMatrix maximally_mixed(OamWindow window) {
    const int n = window.dim() * window.dim();
    return DensityMatrix(window, Eigen::MatrixXcd::Identity(n, n) / static_cast<double>(n));
  }

  const OamWindow& window() const { return window_; }
  const Eigen::MatrixXcd& matrix() const { return rho_; }
  int size() const { return static_cast<int>(rho_.rows()); }

  // Ascending.
  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

 private:
  OamWindow window_;
  Eigen::MatrixXcd rho_;
};

// rho = p |psi><psi| + (1 - p) I / D with D the product-space dimension.
inline DensityMatrix apply_white_noise(const StateVector& psi, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("white-noise weight must lie in [0, 1]");
  const int n = static_cast<int>(psi.amplitudes().size());
  Eigen::MatrixXcd rho = p * psi.projector() + (1.0 - p) * Eigen::MatrixXcd::Identity(n, n) / static_cast<double>(n);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix(psi.window(), std::move(rho));
}

inline double purity(const DensityMatrix& rho) { return (rho.matrix() * rho.matrix()).trace().real(); }

namespace detail {

inline constexpr double kProjectorNormTolerance = 1e-10;

inline Eigen::VectorXcd pair_projector(const OamWindow& w, const Eigen::VectorXcd& signal, const Eigen::VectorXcd& idler) {
  if (signal.size() != w.dim() || idler.size() != w.dim()) throw DomainError("projector dimension does not match window");
  if (std::abs(signal.norm() - 1.0) > kProjectorNormTolerance || std::abs(idler.norm() - 1.0) > kProjectorNormTolerance) {
    throw DomainError("projector vectors must be unit norm");
  }
  Eigen::VectorXcd v(w.dim() * w.dim());
  for (int a = 0; a < w.dim(); ++a) {
    for (int b = 0; b < w.dim(); ++b) v(a * w.dim() + b) = signal(a) * idler(b);
  }
  return v;
}

inline double clamp_unit(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace detail

// Unit basis vector |l> inside the single-photon window.
inline Eigen::VectorXcd basis_vector(const OamWindow& w, int l) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(w.dim());
  v(w.local(l)) = 1.0;
  return v;
}

inline double born_probability(const StateVector& psi, const Eigen::VectorXcd& signal, const Eigen::VectorXcd& idler) {
  const Eigen::VectorXcd proj = detail::pair_projector(psi.window(), signal, idler);
  return detail::clamp_unit(std::norm(proj.dot(psi.amplitudes())));
}

inline double born_probability(const DensityMatrix& rho, const Eigen::VectorXcd& signal, const Eigen::VectorXcd& idler) {
  const Eigen::VectorXcd proj = detail::pair_projector(rho.window(), signal, idler);
  return detail::clamp_unit(proj.dot(rho.matrix() * proj).real());
}

struct CountRecord {
  std::string id;
  std::int64_t counts = 0;
  double exposure = 1.0;       // s
  double expected_rate = 0.0;  // Hz
  std::uint64_t seed = 0;
};

struct CountingConfig {
  double flux = 1e4;        // Hz, pair rate at unit probability
  double exposure = 1.0;    // s
  double background = 0.0;  // Hz, accidental rate added to every projector
};

// counts ~ Poisson((prob * flux + background) * exposure).
inline CountRecord simulate_counts(double prob, const CountingConfig& cfg, std::mt19937_64& rng, std::string id = {},
                                   std::uint64_t seed = 0) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("probability must lie in [0, 1]");
  if (!(cfg.flux > 0.0)) throw DomainError("flux must be positive");
  if (!(cfg.exposure > 0.0)) throw DomainError("exposure must be positive");
  if (!(cfg.background >= 0.0)) throw DomainError("background rate must be non-negative");
  const double rate = prob * cfg.flux + cfg.background;
  const double mean = rate * cfg.exposure;
  std::int64_t n = 0;
  if (mean > 0.0) n = std::poisson_distribution<std::int64_t>(mean)(rng);
  return {std::move(id), n, cfg.exposure, rate, seed};
}

// Target subspace of |l_s, l_i> pairs.
using Subspace = std::vector<std::pair<int, int>>;

inline Subspace diagonal_subspace(int l_first, int l_last) {
  Subspace s;
  for (int l = l_first; l <= l_last; ++l) s.emplace_back(l, l);
  return s;
}

inline Subspace qutrit_subspace() { return diagonal_subspace(-1, 1); }
inline Subspace ququart_subspace() { return diagonal_subspace(0, 3); }
inline Subspace ququint_subspace() { return diagonal_subspace(-2, 2); }

inline Subspace subspace_by_name(const std::string& name) {
  if (name == "S3") return qutrit_subspace();
  if (name == "S4") return ququart_subspace();
  if (name == "S5") return ququint_subspace();
  throw ConfigError("unknown subspace '" + name + "' (expected S3, S4 or S5)");
}

// Pump OAM values that feed the subspace, l_s + l_i for each pair.
inline std::vector<int> pump_components_for(const Subspace& s) {
  std::set<int> ls;
  for (const auto& [a, b] : s) ls.insert(a + b);
  return {ls.begin(), ls.end()};
}

// Exact |c|^2 on the listed pairs, renormalized within the subspace.
inline std::vector<double> subspace_probabilities(const JointSpectrum& js, const Subspace& subspace) {
  if (subspace.empty()) throw DomainError("subspace is empty");
  std::vector<double> p;
  p.reserve(subspace.size());
  double total = 0.0;
  for (const auto& [l_s, l_i] : subspace) {
    p.push_back(std::norm(js.at(l_s, l_i)));
    total += p.back();
  }
  if (!(total > 0.0)) throw DegenerateInputError("subspace carries no probability");
  for (auto& x : p) x /= total;
  return p;
}

// Shot-noise estimate: counts_i ~ Poisson(expected_counts * p_i), then
// renormalized within the subspace.
inline std::vector<double> subspace_probabilities(const JointSpectrum& js, const Subspace& subspace,
                                                  double expected_counts, std::mt19937_64& rng) {
  if (!(expected_counts > 0.0)) throw DomainError("expected counts must be positive");
  const auto exact = subspace_probabilities(js, subspace);
  std::vector<double> p(exact.size());
  double total = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) {
    const double mean = expected_counts * exact[k];
    p[k] = mean > 0.0 ? static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(rng)) : 0.0;
    total += p[k];
  }
  if (!(total > 0.0)) throw DegenerateInputError("no counts recorded in the subspace");
  for (auto& x : p) x /= total;
  return p;
}

}  // namespace pumpshaper
