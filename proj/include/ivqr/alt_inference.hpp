#pragma once

#include "ivqr/bootstrap.hpp"

#include <string>
#include <vector>

namespace ivqr::alt {

using bootstrap::TestResult;

struct GroupEstimates {
  double tau = 0.5;
  std::vector<double> betas;  // clusters that were estimated, in cluster order
  std::vector<int> failures;  // cluster indices that failed
  std::vector<std::string> reasons;
};

// IVQR on each cluster's rows with cluster-level instruments built on the full
// sample at the null. The h overrides of `recipe` are honoured; its method is
// replaced by the cluster-level recipe.
GroupEstimates group_estimates(const ClusteredDataset& data, const instruments::Recipe& recipe, double tau,
                               double beta0, const estimation::ProfileGrid& grid);

// sqrt(J) mean(d) / sd(d), sd with denominator J - 1. Infinite when sd is 0
// and the mean is not; NaN when both are.
double group_t(const std::vector<double>& d);

// Studentized Wald statistic with the normal two-sided critical value. Uses
// the fitted contexts of `gb`; see the README for the studentization.
TestResult t_std_test(const bootstrap::GradientBootstrap& gb);
TestResult t_std_test(const ClusteredDataset& data, const bootstrap::Options& options, double beta0);

// Both throw Error(cluster_fit_failure) if any cluster failed and
// Error(non_informative) on degenerate group estimates.
TestResult im_test(const GroupEstimates& groups, double beta0, double alpha);
TestResult crs_test(const GroupEstimates& groups, double beta0, double alpha,
                    bootstrap::Mode mode = bootstrap::Mode::automatic, std::size_t draws = 300,
                    std::uint64_t seed = 0);

// Kernel estimate P_n K_h(e) V Phi X with the uniform kernel and the
// rule-of-thumb bandwidth for the (Phi, X) cross moment.
double jacobian_phi_x(const ClusteredDataset& data, const Vector& phi, const Vector& residuals, double tau);

}  // namespace ivqr::alt
