#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "prf/random.hpp"

namespace prf {

template <typename Scalar>
struct NmfFactors {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix U;  // m x r
  Matrix V;  // r x n
  // Frobenius reconstruction error after each update round.
  std::vector<Scalar> residuals;
};

// Lee-Seung multiplicative updates for min ||A - UV||_F with U, V >= 0,
// started from a seeded uniform (0, 1] initialization.
template <typename Derived>
NmfFactors<typename Derived::Scalar> nmf(const Eigen::MatrixBase<Derived>& A, Eigen::Index rank, int iterations,
                                         std::uint64_t seed) {
  using Scalar = typename Derived::Scalar;
  using Matrix = typename NmfFactors<Scalar>::Matrix;
  if (rank < 1) throw std::invalid_argument("nmf: rank must be >= 1");
  if ((A.array() < Scalar(0)).any()) throw std::invalid_argument("nmf: matrix has negative entries");

  Rng rng(seed);
  NmfFactors<Scalar> f;
  f.U.resize(A.rows(), rank);
  f.V.resize(rank, A.cols());
  for (Eigen::Index j = 0; j < f.U.cols(); ++j)
    for (Eigen::Index i = 0; i < f.U.rows(); ++i) f.U(i, j) = static_cast<Scalar>(1.0 - uniform01(rng));
  for (Eigen::Index j = 0; j < f.V.cols(); ++j)
    for (Eigen::Index i = 0; i < f.V.rows(); ++i) f.V(i, j) = static_cast<Scalar>(1.0 - uniform01(rng));
  f.residuals.reserve(static_cast<std::size_t>(iterations));

  const Scalar tiny = std::numeric_limits<Scalar>::min();
  for (int it = 0; it < iterations; ++it) {
    const Matrix num_v = f.U.transpose() * A;
    const Matrix den_v = (f.U.transpose() * f.U) * f.V;
    f.V.array() *= num_v.array() / (den_v.array() + tiny);

    const Matrix num_u = A * f.V.transpose();
    const Matrix den_u = f.U * (f.V * f.V.transpose());
    f.U.array() *= num_u.array() / (den_u.array() + tiny);

    f.residuals.push_back((A - f.U * f.V).norm());
  }
  return f;
}

}  // namespace prf
