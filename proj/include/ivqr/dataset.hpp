#pragma once

#include "ivqr/common.hpp"

#include <vector>

namespace ivqr {

// Clustered observations. Cluster labels are contiguous 0..J-1; rows need not
// be sorted by cluster.
struct ClusteredDataset {
  Vector y;
  Vector x;
  Matrix w;  // exogenous controls, intercept included by the caller
  Matrix z;  // excluded instruments
  std::vector<int> cluster;
  Vector v;  // per-observation weights; empty means all ones

  Index n() const { return y.size(); }
  int clusters() const;
  // Row indices of each cluster, in row order.
  std::vector<std::vector<Index>> cluster_rows() const;
  Vector weights() const { return v.size() ? v : Vector(Vector::Ones(n())); }

  // Checks shapes, finiteness and label contiguity; throws Error.
  void validate() const;

  ClusteredDataset subset(const std::vector<Index>& rows) const;
};

}  // namespace ivqr
