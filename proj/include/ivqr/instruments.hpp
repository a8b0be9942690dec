#pragma once

#include "ivqr/dataset.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ivqr::instruments {

enum class Method { parametric, np_full, np_cluster };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

// Uniform kernel with rule-of-thumb bandwidths unless overridden. h3 and h4
// overrides apply to every cluster.
struct Recipe {
  Method method = Method::np_full;
  std::optional<double> h1, h2, h3, h4;

  void validate() const;
};

struct FirstStage {
  Vector z_coef;  // lambda_Z
  Vector w_coef;  // lambda_W
  Vector fitted;  // Zhat = (Z, W) lambda
};

// OLS of X on (Z, W); minimum-norm coefficients when (Z, W) is collinear.
FirstStage first_stage_lambda(const ClusteredDataset& data);

// Scalar instrument for one quantile index.
struct InstrumentSet {
  double tau = 0.5;
  Vector values;  // Phi_hat, length n
  Vector zhat;
  Recipe recipe;
  // Diagnostics: bandwidths and partialling coefficients actually used. For
  // the cluster recipe these have one entry per cluster.
  std::vector<double> h_ww, h_wz;
  std::vector<Vector> chi;
  Warnings warnings;
};

// q(tau) = (1 - F^{-1}(tau))^2 f(F^{-1}(tau)) for the standard normal.
double q_factor(double tau);

enum class Bandwidth { h1, h2, h3, h4 };

// Rule-of-thumb bandwidth evaluated on the given residuals. h1/h2 use the
// full sample; h3/h4 use the rows of `cluster` (required for those).
double rule_of_thumb_bandwidth(const ClusteredDataset& data, const Vector& zhat, const Vector& residuals,
                               double tau, Bandwidth which, std::optional<int> cluster = std::nullopt);

// Residuals y - X beta0 - W gamma_hat from the quantile regression of
// y - X beta0 on (W, Zhat).
Vector restricted_residuals(const ClusteredDataset& data, const Vector& zhat, double tau, double beta0);

InstrumentSet build_parametric(const ClusteredDataset& data, const Recipe& recipe, double tau = 0.5);
InstrumentSet build_nonparametric(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0);
InstrumentSet build_cluster_level(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0);

// Dispatches on recipe.method.
InstrumentSet build(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0);

// chi = Q Q^- Q^- q with Q^- the SVD generalized inverse.
Vector partial_coefficients(const Matrix& q_ww, const Vector& q_wz);

}  // namespace ivqr::instruments
