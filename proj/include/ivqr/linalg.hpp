#pragma once

#include "ivqr/common.hpp"

namespace ivqr::linalg {

// Moore-Penrose inverse by SVD, zeroing singular values below rel_tol * max.
Matrix pinv(const Matrix& a, double rel_tol = 1e-10);

// Least squares coefficients; throws Error(rank_deficient) when the design is
// numerically rank deficient (singular values below 1e-10 of the largest).
Matrix ols(const Matrix& design, const Matrix& response);

bool full_column_rank(const Matrix& a, double rel_tol = 1e-10);

Matrix toeplitz_power(Index m, double rho);

}  // namespace ivqr::linalg
