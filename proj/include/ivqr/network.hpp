#pragma once

#include "ivqr/common.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace ivqr::network {

// Undirected simple graph on nodes 0..n-1.
struct Network {
  Index n = 0;
  std::vector<std::pair<Index, Index>> edges;

  // Rejects self-loops and out-of-range endpoints; duplicate and reversed
  // pairs are tolerated and collapse to one edge.
  void validate() const;
  std::vector<std::vector<Index>> adjacency() const;
};

// Maximal connected components with more than `min_size` nodes, ascending
// by size (ties by smallest node id). Nodes within a component are sorted.
std::vector<std::vector<Index>> connected_components(const Network& net, std::size_t min_size = 5);

// I - D^{-1/2} A D^{-1/2} on the induced subgraph of `nodes`.
Matrix graph_laplacian(const Network& net, const std::vector<Index>& nodes);

enum class Eigens { largest, smallest };

struct KMeansResult {
  std::vector<int> labels;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding, best inertia over restarts (ties
// go to the earlier restart).
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 50, int max_iter = 100,
                    double tol = 1e-8);

struct Partition {
  std::vector<int> labels;  // -1 for nodes in dropped components
  int clusters = 0;
  std::vector<Index> sizes;
};

// Spectral split of the largest kept component into L groups; the other kept
// components follow as one cluster each, largest first.
Partition spectral_partition(const Network& net, int L, std::uint64_t seed, Eigens eigens = Eigens::largest);

}  // namespace ivqr::network
