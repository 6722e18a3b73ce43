// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trrb {

/// Sparse or dense factorization could not be computed (singular/indefinite).
class FactorizationError : public std::runtime_error {
 public:
  explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

/// Parameter lies outside the admissible box.
class OutOfBoundsError : public std::invalid_argument {
 public:
  explicit OutOfBoundsError(const std::string& what) : std::invalid_argument(what) {}
};

/// A coercivity/continuity bound cannot be certified (nonpositive theta,
/// non-PSD component, ...).
class EstimateInvalidError : public std::runtime_error {
 public:
  explicit EstimateInvalidError(const std::string& what) : std::runtime_error(what) {}
};

/// A residual quadratic form came out negative beyond roundoff.
class NumericalBreakdownError : public std::runtime_error {
 public:
  explicit NumericalBreakdownError(const std::string& what) : std::runtime_error(what) {}
};

/// A reduced system is singular (degenerate basis).
class DegenerateBasisError : public std::runtime_error {
 public:
  explicit DegenerateBasisError(const std::string& what) : std::runtime_error(what) {}
};

/// The reduced objective lost strict positivity, so relative trust-region
/// quantities are undefined.
class ModelInvalidError : public std::runtime_error {
 public:
  explicit ModelInvalidError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace trrb
