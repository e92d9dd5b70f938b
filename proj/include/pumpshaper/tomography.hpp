#pragma once

#include <Eigen/Dense>
#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pumpshaper/detection.hpp"
#include "pumpshaper/errors.hpp"

namespace pumpshaper {

inline constexpr int kQutritDim = 3;
inline constexpr int kPairDim = 9;
inline constexpr int kTomoSettings = 225;

// Eigenvectors of the eight generalized Gell-Mann matrices with degenerate
// duplicates removed: |j>, (|j> +- |k>)/sqrt2, (|j> +- i|k>)/sqrt2 for j < k.
// Index order is l = -1, 0, 1.
inline std::vector<Eigen::Vector3cd> gell_mann_eigenvectors() {
  std::vector<Eigen::Vector3cd> out;
  out.reserve(15);
  for (int j = 0; j < kQutritDim; ++j) out.push_back(Eigen::Vector3cd::Unit(j));
  const double s = 1.0 / std::numbers::sqrt2;
  const cplx i{0.0, 1.0};
  for (int j = 0; j < kQutritDim; ++j) {
    for (int k = j + 1; k < kQutritDim; ++k) {
      for (const cplx phase : {cplx{1.0, 0.0}, cplx{-1.0, 0.0}, i, -i}) {
        Eigen::Vector3cd v = Eigen::Vector3cd::Zero();
        v(j) = s;
        v(k) = s * phase;
        out.push_back(v);
      }
    }
  }
  return out;
}

// 225 pair projectors |u_a> (x) |u_b>, row-major in (a, b).
struct ProjectorSet {
  std::vector<Eigen::Vector3cd> single;
  std::vector<Eigen::VectorXcd> pairs;

  static ProjectorSet standard() {
    ProjectorSet p;
    p.single = gell_mann_eigenvectors();
    for (const auto& a : p.single) {
      for (const auto& b : p.single) {
        Eigen::VectorXcd v(kPairDim);
        for (int x = 0; x < kQutritDim; ++x) {
          for (int y = 0; y < kQutritDim; ++y) v(kQutritDim * x + y) = a(x) * b(y);
        }
        p.pairs.push_back(std::move(v));
      }
    }
    return p;
  }

  std::size_t size() const { return pairs.size(); }

  static std::string id(std::size_t k) {
    return "s" + std::to_string(k / 15) + "i" + std::to_string(k % 15);
  }
};

// Real parameter count: 9 real diagonal entries and 36 complex entries below
// the diagonal. rho depends on them only up to overall scale, leaving 80
// independent directions.
inline constexpr int kCholeskyParams = kPairDim + kPairDim * (kPairDim - 1);

namespace detail {

inline Eigen::MatrixXcd lower_factor(const Eigen::VectorXd& t) {
  if (t.size() != kCholeskyParams) throw DomainError("Cholesky parameter vector must have 81 entries");
  if (!t.allFinite()) throw DomainError("Cholesky parameters must be finite");
  Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(kPairDim, kPairDim);
  int k = 0;
  for (int d = 0; d < kPairDim; ++d) T(d, d) = t(k++);
  for (int r = 1; r < kPairDim; ++r) {
    for (int c = 0; c < r; ++c) {
      T(r, c) = {t(k), t(k + 1)};
      k += 2;
    }
  }
  return T;
}

inline Eigen::VectorXd factor_to_params(const Eigen::MatrixXcd& T) {
  Eigen::VectorXd t(kCholeskyParams);
  int k = 0;
  for (int d = 0; d < kPairDim; ++d) t(k++) = T(d, d).real();
  for (int r = 1; r < kPairDim; ++r) {
    for (int c = 0; c < r; ++c) {
      t(k++) = T(r, c).real();
      t(k++) = T(r, c).imag();
    }
  }
  return t;
}

}  // namespace detail

// rho = T^dagger T / Tr(T^dagger T) for lower-triangular T.
inline DensityMatrix density_from_cholesky(const Eigen::VectorXd& params) {
  const Eigen::MatrixXcd T = detail::lower_factor(params);
  Eigen::MatrixXcd rho = T.adjoint() * T;
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) throw DegenerateInputError("Cholesky parameters are all zero");
  rho /= tr;
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix({-1, 1}, rho);
}

// Parameters reproducing a given state: rho = L L^dagger, so T = L^dagger
// would be upper triangular; use the factorization of the index-reversed
// matrix instead, which yields a lower-triangular T with T^dagger T = rho.
inline Eigen::VectorXd cholesky_from_density(const DensityMatrix& rho, double regularization = 1e-10) {
  const int n = kPairDim;
  Eigen::MatrixXcd m = rho.matrix() + regularization * Eigen::MatrixXcd::Identity(n, n);
  const Eigen::MatrixXcd rev = m.reverse();  // J m J
  const Eigen::LLT<Eigen::MatrixXcd> llt(rev);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed");
  // rev = L L^dagger  =>  m = (J L J)(J L J)^dagger, and J L^dagger J is lower triangular.
  const Eigen::MatrixXcd L = llt.matrixL();
  const Eigen::MatrixXcd T = L.adjoint().reverse();
  return detail::factor_to_params(T);
}

inline constexpr double kProbabilityFloor = 1e-12;

struct ChiSquared {
  double value = 0.0;
  bool clamped = false;
};

// sum (m - p)^2 / p, with p floored at kProbabilityFloor.
inline ChiSquared chi_squared(const std::vector<double>& measured, const std::vector<double>& predicted) {
  if (measured.size() != predicted.size()) throw DomainError("chi-squared vectors differ in length");
  ChiSquared r;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    double p = predicted[i];
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      r.clamped = true;
    }
    const double d = measured[i] - p;
    r.value += d * d / p;
  }
  return r;
}

// Born values over the projector set, normalized to unit sum.
inline std::vector<double> predicted_probabilities(const DensityMatrix& rho, const ProjectorSet& set) {
  std::vector<double> p(set.size());
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    p[i] = std::max(0.0, set.pairs[i].dot(rho.matrix() * set.pairs[i]).real());
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

inline double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ea(a.matrix());
  const Eigen::VectorXd ev = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXcd sa = ea.eigenvectors() * ev.asDiagonal() * ea.eigenvectors().adjoint();
  const Eigen::MatrixXcd inner = sa * b.matrix() * sa;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ei(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double tr = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return tr * tr;
}

struct ReconstructOptions {
  int starts = 8;  // start 0 is the maximally mixed state, the rest random
  std::uint64_t seed = 0;
  double tolerance = 1e-10;  // on successive chi-squared values
  int max_evaluations = 10000;
  std::optional<Eigen::VectorXd> warm_start;  // replaces the maximally mixed start
};

struct Reconstruction {
  DensityMatrix rho;
  Eigen::VectorXd params;
  double chi2 = 0.0;
  bool converged = false;
  bool clamped = false;
  int best_start = 0;
  int evaluations = 0;
};

namespace detail {

struct ChiSquaredObjective {
  const ProjectorSet* set;
  std::vector<double> measured;
  int evaluations = 0;
  int max_evaluations = 0;
  bool clamped = false;

  // Value and optional gradient with respect to the 81 factor parameters.
  double evaluate(const double* x, double* grad) {
    ++evaluations;
    const Eigen::Map<const Eigen::VectorXd> t(x, kCholeskyParams);
    const Eigen::MatrixXcd T = lower_factor(t);
    const std::size_t n = set->size();
    std::vector<double> raw(n);
    std::vector<Eigen::VectorXcd> u(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = T * set->pairs[i];
      raw[i] = u[i].squaredNorm();
      total += raw[i];
    }
    if (!(total > 0.0)) return std::numeric_limits<double>::infinity();
    double chi2 = 0.0;
    std::vector<double> dp(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = raw[i] / total;
      if (p < kProbabilityFloor) {
        clamped = true;
        const double d = measured[i] - kProbabilityFloor;
        chi2 += d * d / kProbabilityFloor;
        dp[i] = 0.0;
      } else {
        const double d = measured[i] - p;
        chi2 += d * d / p;
        dp[i] = 1.0 - measured[i] * measured[i] / (p * p);
      }
    }
    if (grad) {
      // p_i = raw_i / total  =>  d chi2 / d raw_k = (dp_k - sum_i dp_i p_i) / total.
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += dp[i] * raw[i] / total;
      Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(kPairDim, kPairDim);
      for (std::size_t i = 0; i < n; ++i) {
        const double w = (dp[i] - mean) / total;
        if (w != 0.0) M.noalias() += w * u[i].conjugate() * set->pairs[i].transpose();
      }
      // d raw / d Re T_ab = 2 Re(conj(u_a) v_b), d raw / d Im T_ab = -2 Im(conj(u_a) v_b).
      int k = 0;
      for (int d = 0; d < kPairDim; ++d) grad[k++] = 2.0 * M(d, d).real();
      for (int r = 1; r < kPairDim; ++r) {
        for (int c = 0; c < r; ++c) {
          grad[k++] = 2.0 * M(r, c).real();
          grad[k++] = -2.0 * M(r, c).imag();
        }
      }
    }
    return chi2;
  }

  static double f(const gsl_vector* x, void* self) {
    return static_cast<ChiSquaredObjective*>(self)->evaluate(x->data, nullptr);
  }
  static void df(const gsl_vector* x, void* self, gsl_vector* g) {
    static_cast<ChiSquaredObjective*>(self)->evaluate(x->data, g->data);
  }
  static void fdf(const gsl_vector* x, void* self, double* value, gsl_vector* g) {
    *value = static_cast<ChiSquaredObjective*>(self)->evaluate(x->data, g->data);
  }
};

struct LocalFit {
  Eigen::VectorXd params;
  double chi2 = std::numeric_limits<double>::infinity();
  bool converged = false;
  int evaluations = 0;
};

// Consecutive BFGS iterations that must each change chi-squared by less than
// the tolerance; a single small step is common on the flat valleys of
// rank-deficient states.
inline constexpr int kQuietIterations = 20;

// BFGS from `start`; converged when chi-squared has stalled below the
// tolerance or the gradient vanishes.
inline LocalFit local_fit(ChiSquaredObjective& obj, const Eigen::VectorXd& start, double tolerance) {
  struct GslState {
    gsl_multimin_fdfminimizer* m = nullptr;
    gsl_vector* x = nullptr;
    ~GslState() {
      if (m) gsl_multimin_fdfminimizer_free(m);
      if (x) gsl_vector_free(x);
    }
  } st;
  const std::size_t n = kCholeskyParams;
  gsl_multimin_function_fdf fn{&ChiSquaredObjective::f, &ChiSquaredObjective::df, &ChiSquaredObjective::fdf, n, &obj};
  st.x = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(st.x, i, start(static_cast<Eigen::Index>(i)));
  st.m = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n);
  obj.evaluations = 0;
  const double step = 0.1 * std::max(1e-3, start.norm());
  gsl_multimin_fdfminimizer_set(st.m, &fn, st.x, step, 0.1);

  LocalFit fit;
  double prev = st.m->f;
  double restart_value = std::numeric_limits<double>::infinity();
  int quiet = 0;
  while (obj.evaluations < obj.max_evaluations) {
    const int status = gsl_multimin_fdfminimizer_iterate(st.m);
    const double cur = st.m->f;
    if (status == GSL_ENOPROG) {
      fit.converged = gsl_multimin_test_gradient(st.m->gradient, 1e-6) == GSL_SUCCESS || cur < tolerance;
      break;
    }
    if (status != GSL_SUCCESS) break;
    quiet = std::abs(prev - cur) < tolerance ? quiet + 1 : 0;
    if (gsl_multimin_test_gradient(st.m->gradient, tolerance) == GSL_SUCCESS) {
      fit.converged = true;
      break;
    }
    if (quiet >= kQuietIterations) {
      // A stall that survives a fresh Hessian estimate is convergence.
      if (restart_value - cur < tolerance) {
        fit.converged = true;
        break;
      }
      restart_value = cur;
      quiet = 0;
      gsl_vector_memcpy(st.x, st.m->x);
      gsl_multimin_fdfminimizer_set(st.m, &fn, st.x, 0.1 * gsl_blas_dnrm2(st.x), 0.1);
    }
    prev = cur;
  }
  fit.chi2 = st.m->f;
  fit.params = Eigen::Map<const Eigen::VectorXd>(st.m->x->data, static_cast<Eigen::Index>(n));
  fit.evaluations = obj.evaluations;
  return fit;
}

inline Eigen::VectorXd maximally_mixed_params() {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(kCholeskyParams);
  t.head(kPairDim).setOnes();
  return t;
}

}  // namespace detail

// Measured frequencies from counts over the projector set.
inline std::vector<double> normalize_counts(const std::vector<double>& counts) {
  if (counts.size() != static_cast<std::size_t>(kTomoSettings)) {
    throw DomainError("tomography needs 225 count records, got " + std::to_string(counts.size()));
  }
  double total = 0.0;
  for (const double c : counts) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("counts must be finite and non-negative");
    total += c;
  }
  if (!(total > 0.0)) throw EstimationError("tomography counts are all zero");
  std::vector<double> m(counts);
  for (auto& x : m) x /= total;
  return m;
}

// Multi-start chi-squared fit over the Cholesky parameters.
inline Reconstruction reconstruct(const std::vector<double>& counts, const ReconstructOptions& opt = {}) {
  if (opt.starts < 1) throw DomainError("reconstruction needs at least one start");
  static const ProjectorSet set = ProjectorSet::standard();
  detail::ChiSquaredObjective obj{&set, normalize_counts(counts), 0, opt.max_evaluations, false};
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> g;
  detail::LocalFit best;
  int best_start = -1;
  int total_evals = 0;
  int converged_starts = 0;
  for (int s = 0; s < opt.starts; ++s) {
    Eigen::VectorXd start;
    if (s == 0) {
      start = opt.warm_start ? *opt.warm_start : detail::maximally_mixed_params();
    } else {
      start.resize(kCholeskyParams);
      for (auto& x : start) x = g(rng);
    }
    const detail::LocalFit fit = detail::local_fit(obj, start, opt.tolerance);
    total_evals += fit.evaluations;
    if (fit.converged) ++converged_starts;
    if (std::isfinite(fit.chi2) && (best_start < 0 || (fit.converged && !best.converged) ||
                                    (fit.converged == best.converged && fit.chi2 < best.chi2))) {
      best = fit;
      best_start = s;
    }
  }
  if (converged_starts == 0) {
    throw EstimationError("chi-squared fit did not converge from any of " + std::to_string(opt.starts) +
                          " starts (best chi2 = " + std::to_string(best.chi2) + ", " + std::to_string(total_evals) +
                          " evaluations)");
  }
  return {density_from_cholesky(best.params), best.params, best.chi2, best.converged, obj.clamped, best_start, total_evals};
}

inline Reconstruction reconstruct(const std::vector<CountRecord>& records, const ReconstructOptions& opt = {}) {
  std::vector<double> c;
  c.reserve(records.size());
  for (const auto& r : records) c.push_back(static_cast<double>(r.counts));
  return reconstruct(c, opt);
}

// Poisson counts for the 225 settings at `total` expected counts overall.
inline std::vector<CountRecord> simulate_tomography_counts(const DensityMatrix& rho, double total, std::mt19937_64& rng,
                                                           std::uint64_t seed = 0) {
  if (!(total > 0.0)) throw DomainError("expected total counts must be positive");
  static const ProjectorSet set = ProjectorSet::standard();
  const auto p = predicted_probabilities(rho, set);
  std::vector<CountRecord> out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.push_back(simulate_counts(std::min(1.0, p[i]), {total, 1.0, 0.0}, rng, ProjectorSet::id(i), seed));
  }
  return out;
}

struct PureEstimate {
  double eigenvalue = 0.0;
  StateVector state;
  bool ambiguous = false;
};

// Dominant eigenpair, with the reference component made real-positive. Falls
// back to the largest component when the reference is below 1e-6.
inline PureEstimate closest_pure_state(const DensityMatrix& rho, std::pair<int, int> reference = {0, 0}) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.matrix());
  const int n = rho.size();
  const double top = es.eigenvalues()(n - 1);
  const bool ambiguous = n > 1 && top - es.eigenvalues()(n - 2) < 1e-6;
  Eigen::VectorXcd v = es.eigenvectors().col(n - 1);
  Eigen::Index ref = rho.window().pair_index(reference.first, reference.second);
  if (std::abs(v(ref)) < 1e-6) v.cwiseAbs().maxCoeff(&ref);
  v *= std::polar(1.0, -std::arg(v(ref)));
  return {top, StateVector::normalized(rho.window(), v), ambiguous};
}

// arg(c_pair / c_reference) in (-pi, pi] for every pair of the subspace.
inline std::vector<double> extract_phases(const StateVector& psi, const Subspace& subspace,
                                          std::pair<int, int> reference = {0, 0}) {
  const cplx ref = psi.at(reference.first, reference.second);
  if (std::abs(ref) <= 1e-6) throw DomainError("reference component vanishes");
  std::vector<double> out;
  out.reserve(subspace.size());
  for (const auto& [a, b] : subspace) {
    double ph = std::arg(psi.at(a, b) / ref);
    if (ph <= -std::numbers::pi) ph += 2.0 * std::numbers::pi;
    out.push_back(ph);
  }
  return out;
}

struct BootstrapResult {
  std::vector<double> phase_std;  // per subspace pair
  double purity_std = 0.0;
  double eigenvalue_std = 0.0;
  int resamples = 0;
  int failures = 0;
};

namespace detail {

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (const double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Phases wrapped around the point estimate so the spread is not split at pi.
inline double unwrap_near(double phase, double center) {
  return center + std::remainder(phase - center, 2.0 * std::numbers::pi);
}

}  // namespace detail

// Poisson resampling of every count around its observed value; each resample
// is refitted from the point estimate.
inline BootstrapResult bootstrap_errors(const std::vector<double>& counts, int n_resamples, std::mt19937_64& rng,
                                        const Subspace& subspace = qutrit_subspace(), ReconstructOptions opt = {}) {
  if (n_resamples < 2) throw DomainError("bootstrap needs at least two resamples");
  const Reconstruction point = reconstruct(counts, opt);
  const auto center = extract_phases(closest_pure_state(point.rho).state, subspace);

  ReconstructOptions refit = opt;
  refit.starts = 1;
  refit.warm_start = point.params;

  std::vector<std::vector<double>> phases(subspace.size());
  std::vector<double> purities, eigenvalues;
  BootstrapResult out;
  out.resamples = n_resamples;
  std::vector<double> resampled(counts.size());
  for (int r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      resampled[i] = counts[i] > 0.0 ? static_cast<double>(std::poisson_distribution<std::int64_t>(counts[i])(rng)) : 0.0;
    }
    try {
      const Reconstruction fit = reconstruct(resampled, refit);
      const PureEstimate pe = closest_pure_state(fit.rho);
      const auto ph = extract_phases(pe.state, subspace);
      for (std::size_t k = 0; k < ph.size(); ++k) phases[k].push_back(detail::unwrap_near(ph[k], center[k]));
      purities.push_back(purity(fit.rho));
      eigenvalues.push_back(pe.eigenvalue);
    } catch (const NumericalError&) {
      ++out.failures;
    } catch (const DomainError&) {
      ++out.failures;
    }
  }
  if (out.failures * 5 > n_resamples) {
    throw EstimationError(std::to_string(out.failures) + " of " + std::to_string(n_resamples) +
                          " bootstrap reconstructions failed");
  }
  for (const auto& p : phases) out.phase_std.push_back(detail::sample_std(p));
  out.purity_std = detail::sample_std(purities);
  out.eigenvalue_std = detail::sample_std(eigenvalues);
  return out;
}

}  // namespace pumpshaper
