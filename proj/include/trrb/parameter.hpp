// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <stdexcept>

#include "trrb/errors.hpp"
#include "trrb/types.hpp"

namespace trrb {

/// Admissible box {mu in R^P | lower <= mu <= upper}.
class ParameterSpace {
 public:
  ParameterSpace(Vector lower, Vector upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size() || lower_.size() < 1) {
      throw std::invalid_argument("ParameterSpace: bound size mismatch");
    }
    for (Index i = 0; i < lower_.size(); ++i) {
      if (!(lower_[i] <= upper_[i])) {
        throw std::invalid_argument("ParameterSpace: lower bound exceeds upper bound");
      }
    }
  }

  int dim() const { return static_cast<int>(lower_.size()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector range() const { return upper_ - lower_; }
  Vector center() const { return 0.5 * (lower_ + upper_); }

  bool contains(const Vector& mu) const {
    if (mu.size() != lower_.size()) return false;
    for (Index i = 0; i < mu.size(); ++i) {
      if (mu[i] < lower_[i] || mu[i] > upper_[i]) return false;
    }
    return true;
  }

  void require(const Vector& mu) const {
    if (!contains(mu)) {
      throw OutOfBoundsError("parameter outside the admissible set");
    }
  }

  /// Componentwise clamp onto the box (the projection P_box).
  Vector clamp(const Vector& mu) const {
    if (mu.size() != lower_.size()) {
      throw std::invalid_argument("clamp: dimension mismatch");
    }
    return mu.cwiseMax(lower_).cwiseMin(upper_);
  }

  template <typename Rng>
  Vector sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Vector mu(lower_.size());
    for (Index i = 0; i < mu.size(); ++i) {
      mu[i] = lower_[i] + u01(rng) * (upper_[i] - lower_[i]);
    }
    return mu;
  }

 private:
  Vector lower_, upper_;
};

}  // namespace trrb
