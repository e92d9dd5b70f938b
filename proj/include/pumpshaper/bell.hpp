#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pumpshaper/detection.hpp"
#include "pumpshaper/errors.hpp"

namespace pumpshaper {

inline constexpr std::array<double, 2> kAliceOffsets{0.0, 0.5};
inline constexpr std::array<double, 2> kBobOffsets{0.25, -0.25};

// Measurement bases for the qutrit CGLMP test on the {-1, 0, 1} window.
// Column n of alice[a] is |n>_{A,a}; column m of bob[b] is |m>_{B,b}.
// The l = -1 and l = +1 components carry extra phases e^{i phi_minus/2} and
// e^{i phi_plus/2}, which cancel state phases on |-1,-1> and |1,1>.
struct CGLMPSettings {
  std::array<Eigen::Matrix3cd, 2> alice;
  std::array<Eigen::Matrix3cd, 2> bob;
  double phi_minus = 0.0;
  double phi_plus = 0.0;
};

inline CGLMPSettings cglmp_bases(double phi_minus = 0.0, double phi_plus = 0.0) {
  CGLMPSettings s;
  s.phi_minus = phi_minus;
  s.phi_plus = phi_plus;
  const double w = 2.0 * std::numbers::pi / 3.0;
  const double norm = 1.0 / std::sqrt(3.0);
  const std::array<cplx, 3> correction{std::polar(1.0, 0.5 * phi_minus), cplx{1.0, 0.0}, std::polar(1.0, 0.5 * phi_plus)};
  for (int x = 0; x < 2; ++x) {
    for (int n = 0; n < 3; ++n) {
      for (int j = 0; j < 3; ++j) {
        const double l = j - 1;
        s.alice[x](j, n) = norm * std::polar(1.0, w * l * (n + kAliceOffsets[x])) * correction[j];
        s.bob[x](j, n) = norm * std::polar(1.0, w * l * (-n + kBobOffsets[x])) * correction[j];
      }
    }
  }
  return s;
}

// P(A_a = n, B_b = m) stored as blocks[a][b](n, m), a and b zero-based.
struct OutcomeTable {
  std::array<std::array<Eigen::Matrix3d, 2>, 2> blocks;

  OutcomeTable() {
    for (auto& row : blocks) {
      for (auto& b : row) b.setConstant(std::nan(""));
    }
  }
};

namespace detail {

inline const OamWindow kQutritWindow{-1, 1};

template <typename ProbFn>
OutcomeTable fill_table(const CGLMPSettings& s, ProbFn&& prob) {
  OutcomeTable t;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int n = 0; n < 3; ++n) {
        for (int m = 0; m < 3; ++m) t.blocks[a][b](n, m) = prob(s.alice[a].col(n), s.bob[b].col(m));
      }
    }
  }
  return t;
}

inline void require_qutrit(const OamWindow& w) {
  if (!(w == kQutritWindow)) throw DomainError("CGLMP test needs a state on the {-1, 0, 1} window");
}

}  // namespace detail

inline OutcomeTable joint_outcome_table(const StateVector& psi, const CGLMPSettings& s) {
  detail::require_qutrit(psi.window());
  return detail::fill_table(s, [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) { return born_probability(psi, u, v); });
}

inline OutcomeTable joint_outcome_table(const DensityMatrix& rho, const CGLMPSettings& s) {
  detail::require_qutrit(rho.window());
  return detail::fill_table(s, [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& v) { return born_probability(rho, u, v); });
}

// Counts for the 36 projections, each block normalized by its own total.
inline OutcomeTable outcome_table_from_counts(const std::array<std::array<Eigen::Matrix3d, 2>, 2>& counts) {
  OutcomeTable t;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const Eigen::Matrix3d& c = counts[a][b];
      if ((c.array() < 0.0).any()) throw DomainError("negative count in Bell table");
      const double total = c.sum();
      if (!(total > 0.0)) throw DegenerateInputError("Bell setting pair has no counts");
      t.blocks[a][b] = c / total;
    }
  }
  return t;
}

inline std::string bell_projection_id(int a, int n, int b, int m) {
  return "A" + std::to_string(a + 1) + "=" + std::to_string(n) + ",B" + std::to_string(b + 1) + "=" + std::to_string(m);
}

// Poisson counts for every projection in the table.
inline std::array<std::array<Eigen::Matrix3d, 2>, 2> simulate_bell_counts(const OutcomeTable& exact,
                                                                          const CountingConfig& cfg,
                                                                          std::mt19937_64& rng) {
  std::array<std::array<Eigen::Matrix3d, 2>, 2> counts;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int n = 0; n < 3; ++n) {
        for (int m = 0; m < 3; ++m) {
          counts[a][b](n, m) = static_cast<double>(simulate_counts(exact.blocks[a][b](n, m), cfg, rng).counts);
        }
      }
    }
  }
  return counts;
}

// Each block of a complete table sums to one.
inline void validate_table(const OutcomeTable& t, double tolerance = 1e-9) {
  for (const auto& row : t.blocks) {
    for (const auto& b : row) {
      if (!b.allFinite()) throw DomainError("Bell outcome table is incomplete");
      if ((b.array() < -tolerance).any()) throw DomainError("Bell outcome table has negative entries");
      if (std::abs(b.sum() - 1.0) > tolerance) throw DomainError("Bell outcome block does not sum to one");
    }
  }
}

// P(A_a = B_b + k) = sum_j P(A_a = j, B_b = (j - k) mod 3).
inline double prob_a_equals_b_plus(const OutcomeTable& t, int a, int b, int k) {
  double s = 0.0;
  for (int j = 0; j < 3; ++j) s += t.blocks[a][b](j, ((j - k) % 3 + 3) % 3);
  return s;
}

// P(B_b = A_a + k) = P(A_a = B_b - k).
inline double prob_b_equals_a_plus(const OutcomeTable& t, int b, int a, int k) { return prob_a_equals_b_plus(t, a, b, -k); }

struct I3Terms {
  std::array<double, 4> positive{};  // P(A1=B1), P(B1=A2+1), P(A2=B2), P(B2=A1)
  std::array<double, 4> negative{};  // P(A1=B1-1), P(B1=A2), P(A2=B2-1), P(B2=A1-1)
  double value = 0.0;
};

inline I3Terms bell_i3_terms(const OutcomeTable& t) {
  validate_table(t);
  I3Terms r;
  r.positive = {prob_a_equals_b_plus(t, 0, 0, 0), prob_b_equals_a_plus(t, 0, 1, 1), prob_a_equals_b_plus(t, 1, 1, 0),
                prob_b_equals_a_plus(t, 1, 0, 0)};
  r.negative = {prob_a_equals_b_plus(t, 0, 0, -1), prob_b_equals_a_plus(t, 0, 1, 0), prob_a_equals_b_plus(t, 1, 1, -1),
                prob_b_equals_a_plus(t, 1, 0, -1)};
  for (int i = 0; i < 4; ++i) r.value += r.positive[i] - r.negative[i];
  return r;
}

inline double bell_i3(const OutcomeTable& t) { return bell_i3_terms(t).value; }

// I3 measured with settings that compensate phases phi_minus on |-1,-1> and
// phi_plus on |1,1>.
inline double i3_phase_corrected(const StateVector& psi, double phi_minus, double phi_plus) {
  return bell_i3(joint_outcome_table(psi, cglmp_bases(phi_minus, phi_plus)));
}

// (|-1,-1> + gamma |0,0> + |1,1>) / sqrt(2 + gamma^2)
inline StateVector gamma_state(double gamma) {
  return StateVector::from_terms(detail::kQutritWindow,
                                 {{{-1, -1}, cplx{1.0, 0.0}}, {{0, 0}, cplx{gamma, 0.0}}, {{1, 1}, cplx{1.0, 0.0}}});
}

struct GammaScanResult {
  double gamma = 0.0;
  double i3 = 0.0;
  std::vector<double> grid;
  std::vector<double> values;
};

inline GammaScanResult gamma_scan(double lo = 0.5, double hi = 1.2, double step = 0.005) {
  if (!(lo > 0.0) || !(hi <= 2.0) || !(lo <= hi)) throw DomainError("gamma grid must lie within (0, 2]");
  if (!(step > 0.0)) throw DomainError("gamma step must be positive");
  const CGLMPSettings s = cglmp_bases();
  GammaScanResult r;
  r.i3 = -std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (int k = 0; k < n; ++k) {
    const double g = lo + k * step;
    const double v = bell_i3(joint_outcome_table(gamma_state(g), s));
    r.grid.push_back(g);
    r.values.push_back(v);
    if (v > r.i3) {
      r.i3 = v;
      r.gamma = g;
    }
  }
  return r;
}

}  // namespace pumpshaper
