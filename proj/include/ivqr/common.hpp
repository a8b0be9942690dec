#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ivqr {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  invalid_argument,
  rank_deficient,
  unbounded,
  degenerate_instrument,
  empty_cluster,
  all_residuals_outside_bandwidth,
  grid_degenerate,
  singular_crve,
  singular_moment,
  non_informative,
  cluster_fit_failure,
  too_many_excluded_draws,
  zero_size_cluster,
  singular_system,
  isolated_node,
  parse_error,
  missing_column,
  non_finite,
  iteration_limit,
};

std::string_view to_string(ErrorCode code);

// Validation errors map to CLI exit code 2, numerical failures to 3.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Non-fatal conditions are collected and surfaced in result records.
using Warnings = std::vector<std::string>;

}  // namespace ivqr
