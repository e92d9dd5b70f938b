#pragma once

#include <stdexcept>
#include <string>

namespace pumpshaper {

// Invalid argument to a mathematical operation (bad waist, non-normalized
// projector, probability outside [0, 1], ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Input that is well-formed but carries no information (all-zero vectors,
// zero counts, vanishing normalization).
class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Inconsistent configuration: incompatible pump/subspace, undersized
// hologram grid, malformed scenario.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Quadrature or iterative method failed to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistical estimation failed (tomography with no converged start,
// too many failed bootstrap resamples).
class EstimationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace pumpshaper
