#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pumpshaper/detection.hpp"
#include "pumpshaper/errors.hpp"
#include "pumpshaper/modes.hpp"
#include "pumpshaper/spdc.hpp"

namespace pumpshaper {

// Gain sequences a_k = a / (A + k + 1)^alpha, c_k = c / (k + 1)^gamma.
struct SPSAConfig {
  double a = 1.0;
  double c = 0.01;
  double alpha = 0.6;
  double gamma = 0.1;
  double stability = 0.0;  // A
  int max_iterations = 30;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(a > 0.0)) throw ConfigError("SPSA gain a must be positive");
    if (!(c > 0.0)) throw ConfigError("SPSA perturbation c must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("SPSA exponent alpha must lie in (0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("SPSA exponent gamma must lie in (0, 1]");
    if (!(stability >= 0.0)) throw ConfigError("SPSA stability offset A must be non-negative");
    if (max_iterations < 0) throw ConfigError("SPSA iteration budget must be non-negative");
  }
};

struct Gains {
  double a;
  double c;
};

inline Gains spsa_gains(int k, const SPSAConfig& cfg) {
  if (k < 0) throw DomainError("iteration index must be non-negative");
  return {cfg.a / std::pow(cfg.stability + k + 1.0, cfg.alpha), cfg.c / std::pow(k + 1.0, cfg.gamma)};
}

// Population variance (1/d) sum (p_i - mean)^2.
inline double variance_cost(std::span<const double> probs) {
  if (probs.empty()) throw DomainError("variance cost of an empty probability vector");
  double mean = 0.0;
  for (const double p : probs) {
    if (p < 0.0) throw DomainError("probabilities must be non-negative");
    mean += p;
  }
  mean /= static_cast<double>(probs.size());
  double acc = 0.0;
  for (const double p : probs) acc += (p - mean) * (p - mean);
  return acc / static_cast<double>(probs.size());
}

using CostOracle = std::function<double(const Eigen::VectorXd&)>;

struct StepResult {
  Eigen::VectorXd params;
  Eigen::VectorXd delta;
  double cost_plus = 0.0;
  double cost_minus = 0.0;
};

// Rademacher draws use one bit of the raw engine output so that traces are
// reproducible across standard libraries.
inline Eigen::VectorXd rademacher(Eigen::Index n, std::mt19937_64& rng) {
  Eigen::VectorXd d(n);
  for (Eigen::Index j = 0; j < n; ++j) d(j) = (rng() & 1u) ? 1.0 : -1.0;
  return d;
}

// One SPSA update. Calls `evaluate` exactly twice.
inline StepResult spsa_step(const Eigen::VectorXd& params, const CostOracle& evaluate, int k, const SPSAConfig& cfg,
                            std::mt19937_64& rng) {
  if (!params.allFinite()) throw DomainError("SPSA parameters must be finite");
  const Gains g = spsa_gains(k, cfg);
  StepResult r;
  r.delta = rademacher(params.size(), rng);
  r.cost_plus = evaluate(params + g.c * r.delta);
  r.cost_minus = evaluate(params - g.c * r.delta);
  const double diff = (r.cost_plus - r.cost_minus) / (2.0 * g.c);
  r.params = params - g.a * diff * r.delta.cwiseInverse();
  return r;
}

struct IterationRecord {
  int k = 0;
  Eigen::VectorXd params;  // after the update and renormalization
  double cost_plus = 0.0;
  double cost_minus = 0.0;
  double cost = 0.0;  // at the accepted parameters
};

struct OptimizationTrace {
  std::uint64_t seed = 0;
  std::vector<int> components;  // pump OAM values, parameters are (Re, Im) per entry
  Eigen::VectorXd initial_params;
  double initial_cost = 0.0;
  std::vector<IterationRecord> iterations;
  int best_iteration = -1;  // -1 when the starting point was never improved
  double wall_seconds = 0.0;

  std::vector<double> costs() const {
    std::vector<double> c;
    c.reserve(iterations.size());
    for (const auto& it : iterations) c.push_back(it.cost);
    return c;
  }
  double final_cost() const { return iterations.empty() ? initial_cost : iterations.back().cost; }
  double best_cost() const { return best_iteration < 0 ? initial_cost : iterations[best_iteration].cost; }
};

// Pump probabilities measured on the target subspace.
using LabOracle = std::function<std::vector<double>(const PumpProfile&)>;

// Virtual lab backed by a spectrum model: exact subspace probabilities, or a
// Poisson estimate at `expected_counts` when set. The model and rng must
// outlive the returned oracle.
inline LabOracle simulated_lab(const SpectrumModel& model, Subspace subspace,
                               std::optional<double> expected_counts = std::nullopt, std::mt19937_64* rng = nullptr) {
  if (expected_counts && !rng) throw DomainError("shot-noise lab requires a random generator");
  return [&model, subspace = std::move(subspace), expected_counts, rng](const PumpProfile& pump) {
    const JointSpectrum js = model.raw(pump);
    if (expected_counts) return subspace_probabilities(js, subspace, *expected_counts, *rng);
    return subspace_probabilities(js, subspace);
  };
}

// Packs alpha_l for `components` into (Re, Im) pairs.
inline Eigen::VectorXd pack_coefficients(const PumpProfile& pump, const std::vector<int>& components) {
  Eigen::VectorXd v(2 * static_cast<Eigen::Index>(components.size()));
  for (std::size_t j = 0; j < components.size(); ++j) {
    const cplx a = pump.coefficient(components[j]);
    v(2 * j) = a.real();
    v(2 * j + 1) = a.imag();
  }
  return v;
}

inline PumpProfile unpack_coefficients(const Eigen::VectorXd& v, const std::vector<int>& components, double waist,
                                       double rotation = 0.0) {
  if (v.size() != 2 * static_cast<Eigen::Index>(components.size())) throw DomainError("parameter vector size mismatch");
  CoefficientMap m;
  for (std::size_t j = 0; j < components.size(); ++j) m[components[j]] = {v(2 * j), v(2 * j + 1)};
  return PumpProfile::normalized(waist, std::move(m), rotation);
}

struct OptimizationResult {
  PumpProfile best;  // lowest accepted cost seen, including the start
  PumpProfile last;
  OptimizationTrace trace;
};

// SPSA over the real and imaginary parts of the pump coefficients that feed
// `subspace`. Parameters are renormalized to unit power after every update.
// Runs the full iteration budget; no early stopping.
inline OptimizationResult run_optimization(const PumpProfile& initial, const Subspace& subspace, const LabOracle& lab,
                                           const SPSAConfig& cfg) {
  cfg.validate();
  const std::vector<int> components = pump_components_for(subspace);
  for (const int l : initial.components()) {
    if (std::find(components.begin(), components.end(), l) == components.end()) {
      throw ConfigError("initial pump component l = " + std::to_string(l) + " does not feed the target subspace");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  const double waist = initial.waist();
  const auto cost_of = [&](const Eigen::VectorXd& v) {
    const auto p = lab(unpack_coefficients(v, components, waist, initial.rotation()));
    return variance_cost(p);
  };

  OptimizationTrace trace;
  trace.seed = cfg.seed;
  trace.components = components;
  trace.initial_params = pack_coefficients(initial, components);
  trace.initial_cost = cost_of(trace.initial_params);

  std::mt19937_64 rng(cfg.seed);
  Eigen::VectorXd theta = trace.initial_params;
  Eigen::VectorXd best = theta;
  double best_cost = trace.initial_cost;
  for (int k = 0; k < cfg.max_iterations; ++k) {
    StepResult step = spsa_step(theta, cost_of, k, cfg, rng);
    const double n = step.params.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("SPSA update produced a degenerate pump");
    theta = step.params / n;
    IterationRecord rec{k, theta, step.cost_plus, step.cost_minus, cost_of(theta)};
    if (rec.cost < best_cost) {
      best_cost = rec.cost;
      best = theta;
      trace.best_iteration = k;
    }
    trace.iterations.push_back(std::move(rec));
  }
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {unpack_coefficients(best, components, waist, initial.rotation()),
          unpack_coefficients(theta, components, waist, initial.rotation()), std::move(trace)};
}

// Least-squares slope of log(cost) against iteration index, returned as the
// decay rate r in cost ~ exp(-r k). Non-positive costs are rejected.
inline double fit_exponential_rate(std::span<const double> costs) {
  if (costs.size() < 2) throw DomainError("need at least two cost values for a rate fit");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(costs.size());
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (!(costs[k] > 0.0)) throw DomainError("exponential fit needs positive costs");
    const double x = static_cast<double>(k);
    const double y = std::log(costs[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace pumpshaper
