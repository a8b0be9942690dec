#include "ivqr/linalg.hpp"

#include <cmath>

namespace ivqr::linalg {

Matrix pinv(const Matrix& a, double rel_tol) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector inv = Vector::Zero(s.size());
  const double cut = s.size() ? rel_tol * s(0) : 0.0;
  for (Index k = 0; k < s.size(); ++k)
    if (s(k) > cut && s(k) > 0.0) inv(k) = 1.0 / s(k);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

bool full_column_rank(const Matrix& a, double rel_tol) {
  if (a.rows() < a.cols() || a.cols() == 0) return false;
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  return s(0) > 0.0 && s(s.size() - 1) > rel_tol * s(0);
}

Matrix ols(const Matrix& design, const Matrix& response) {
  if (!full_column_rank(design)) throw Error(ErrorCode::rank_deficient, "least squares design is rank deficient");
  return design.colPivHouseholderQr().solve(response);
}

Matrix toeplitz_power(Index m, double rho) {
  Matrix t(m, m);
  for (Index s = 0; s < m; ++s)
    for (Index u = 0; u < m; ++u) t(s, u) = std::pow(rho, static_cast<double>(std::abs(s - u)));
  return t;
}

}  // namespace ivqr::linalg
