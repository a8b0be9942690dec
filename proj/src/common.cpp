#include "ivqr/common.hpp"

namespace ivqr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::rank_deficient: return "RankDeficient";
    case ErrorCode::unbounded: return "Unbounded";
    case ErrorCode::degenerate_instrument: return "DegenerateInstrument";
    case ErrorCode::empty_cluster: return "EmptyCluster";
    case ErrorCode::all_residuals_outside_bandwidth: return "AllResidualsOutsideBandwidth";
    case ErrorCode::grid_degenerate: return "GridDegenerate";
    case ErrorCode::singular_crve: return "SingularCrve";
    case ErrorCode::singular_moment: return "SingularMoment";
    case ErrorCode::non_informative: return "NonInformative";
    case ErrorCode::cluster_fit_failure: return "ClusterFitFailure";
    case ErrorCode::too_many_excluded_draws: return "TooManyExcludedDraws";
    case ErrorCode::zero_size_cluster: return "ZeroSizeCluster";
    case ErrorCode::singular_system: return "SingularSystem";
    case ErrorCode::isolated_node: return "IsolatedNode";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::missing_column: return "MissingColumn";
    case ErrorCode::non_finite: return "NonFinite";
    case ErrorCode::iteration_limit: return "IterationLimit";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::parse_error:
    case ErrorCode::missing_column:
    case ErrorCode::non_finite:
    case ErrorCode::zero_size_cluster:
    case ErrorCode::empty_cluster:
    case ErrorCode::grid_degenerate:
      return true;
    default:
      return false;
  }
}

}  // namespace ivqr
