// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace trrb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Index = Eigen::Index;

namespace instrument {

/// Process-wide cost counters. `hd_ops` counts every operation that touches
/// an array of length dim V_h; online (reduced) evaluations must leave it
/// untouched, which the tests assert.
struct Counters {
  std::atomic<std::uint64_t> hd_ops{0};
  std::atomic<std::uint64_t> fom_solves{0};
  std::atomic<std::uint64_t> factorizations{0};
};

inline Counters& counters() {
  static Counters c;
  return c;
}

inline void hd_event(std::uint64_t n = 1) {
  counters().hd_ops.fetch_add(n, std::memory_order_relaxed);
}

inline void fom_solve_event() {
  counters().fom_solves.fetch_add(1, std::memory_order_relaxed);
  hd_event();
}

inline void factorization_event() {
  counters().factorizations.fetch_add(1, std::memory_order_relaxed);
  hd_event();
}

inline std::uint64_t hd_ops() {
  return counters().hd_ops.load(std::memory_order_relaxed);
}
inline std::uint64_t fom_solves() {
  return counters().fom_solves.load(std::memory_order_relaxed);
}
inline std::uint64_t factorizations() {
  return counters().factorizations.load(std::memory_order_relaxed);
}

}  // namespace instrument

}  // namespace trrb
