#pragma once

#include <Eigen/Core>

#include "retrofit/errors.hpp"

namespace retrofit::spd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kEigenvalueFloor = 1e-12;

// Dense SPD matrix. Construction symmetrizes and floors eigenvalues at
// kEigenvalueFloor; the number of floored eigenvalues is reported through the
// optional counter so training diagnostics can surface near-singular pullback
// metrics instead of failing hard.
struct SpdMatrix {
  Mat m;

  int dim() const { return static_cast<int>(m.rows()); }
};

struct EigResult {
  Vec eigenvalues;   // ascending
  Mat eigenvectors;  // orthonormal columns, deterministic sign
};

// Cyclic Jacobi eigensolver for symmetric matrices. Sweep cap 100; throws
// EigFailure if the off-diagonal mass has not converged by then.
EigResult sym_eig(const Mat& x);

SpdMatrix make_spd(Mat x, int* floored = nullptr);

// V diag(ln lambda) V^T.
Mat spd_log(const SpdMatrix& x, int* floored = nullptr);

// || log(Y^{-1/2} X Y^{-1/2}) ||_F^2, evaluated through the symmetrized
// similarity form; never forms the nonsymmetric product X Y^{-1}.
double spd_geodesic_sq(const SpdMatrix& x, const SpdMatrix& y,
                       int* floored = nullptr);

// ln det(X Y^{-1}) via the eigenvalues of the symmetrized ratio.
double logdet_ratio(const SpdMatrix& x, const SpdMatrix& y,
                    int* floored = nullptr);

// Eigenvalues of the symmetrized ratio Y^{-1/2} X Y^{-1/2} together with the
// transform context; shared kernel for the two distances above and for the
// conformality regularizer.
struct SymRatio {
  Vec eigenvalues;    // floored, ascending
  Mat eigenvectors;   // of the symmetrized ratio M
  Mat y_inv_sqrt;     // Y^{-1/2}
};
SymRatio sym_ratio(const SpdMatrix& x, const SpdMatrix& y,
                   int* floored = nullptr);

}  // namespace retrofit::spd
