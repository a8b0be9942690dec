#pragma once

#include "ivqr/common.hpp"

#include <span>
#include <vector>

namespace ivqr::qr {

// Weighted quantile regression with a linear gradient shift:
//
//   minimize  sum_i V_i rho_tau(Y_i - X_i' eta) - S' eta      over eta free.
//
// Equivalent LP: min tau V'u + (1 - tau) V'v - S'eta  s.t.  Y - X eta = u - v,
// u, v >= 0. The solver works on the bounded dual
//
//   max Y'd  s.t.  X'd = -S,  -(1 - tau) V_i <= d_i <= tau V_i,
//
// whose bases are p-subsets of interpolated observations.
struct QrProblem {
  Vector responses;  // n
  Matrix design;     // n x p
  Vector weights;    // n, nonnegative
  double tau = 0.5;
  Vector shift;      // p; empty means zero
};

enum class QrStatus { optimal, unbounded, degenerate_tie };

std::string_view to_string(QrStatus status);

struct QrSolution {
  QrStatus status = QrStatus::optimal;
  Vector coefficients;    // p; empty when unbounded
  double objective = 0.0; // -inf when unbounded
  Vector positive_part;   // u
  Vector negative_part;   // v
  std::vector<Index> basis;  // observations interpolated by the returned vertex
  int iterations = 0;

  bool bounded() const { return status != QrStatus::unbounded; }
};

double rho_tau(double u, double tau);

// Full objective sum V rho(Y - X eta) - S'eta.
double objective_value(const QrProblem& problem, const Vector& coefficients);

// Reusable solver for a fixed (design, weights, tau). Validation and the rank
// check happen once in the constructor; solve() may be called concurrently.
class QrKernel {
 public:
  QrKernel(Matrix design, Vector weights, double tau);

  // `warm_basis`, when valid for this design, seeds the simplex. Results do not
  // depend on the seed unless the optimum is non-unique, in which case the
  // lexicographically smallest optimal vertex is returned either way.
  QrSolution solve(const Vector& responses, const Vector& shift = Vector(),
                   std::span<const Index> warm_basis = {}) const;

  Index rows() const { return design_.rows(); }
  Index cols() const { return design_.cols(); }
  double tau() const { return tau_; }
  const Matrix& design() const { return design_; }
  const Vector& weights() const { return weights_; }

 private:
  Matrix design_;
  Vector weights_;
  double tau_;
  double weight_scale_;
};

// Validates then solves. Throws Error(rank_deficient) or Error(invalid_argument);
// unboundedness is reported through QrSolution::status.
QrSolution solve(const QrProblem& problem);

// True iff 0 lies in the subdifferential of the objective at the solution's
// coefficients, within `tol`. Checked through directional derivatives along
// every coordinate axis and along the extreme rays of the cone arrangement
// induced by the zero-residual observations, which is exact.
bool verify_optimality(const QrProblem& problem, const QrSolution& solution, double tol);

}  // namespace ivqr::qr
