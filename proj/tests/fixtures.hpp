#pragma once

// Small synthetic datasets shared by the tests.

#include "ivqr/dataset.hpp"

#include <random>

namespace fixture {

using ivqr::ClusteredDataset;
using ivqr::Index;
using ivqr::Matrix;
using ivqr::Vector;

// Linear IV design: X = Z + 0.5 u + e, y = beta X + W gamma + u with dw
// controls (first is the intercept) and one instrument, clusters of equal
// size assigned in blocks.
inline ClusteredDataset linear_iv(Index n, int clusters, std::uint64_t seed, double beta = 1.0, Index dw = 2) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  ClusteredDataset d;
  d.y.resize(n);
  d.x.resize(n);
  d.w.resize(n, dw);
  d.z.resize(n, 1);
  d.cluster.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    d.w(i, 0) = 1.0;
    for (Index k = 1; k < dw; ++k) d.w(i, k) = nd(gen);
    const double z = nd(gen), u = nd(gen), e = nd(gen);
    d.z(i, 0) = z;
    d.x(i) = z + 0.5 * u + 0.5 * e;
    double wg = 0.0;
    for (Index k = 1; k < dw; ++k) wg += 0.5 * d.w(i, k);
    d.y(i) = beta * d.x(i) + wg + u;
    d.cluster[static_cast<std::size_t>(i)] = static_cast<int>(i * clusters / n);
  }
  return d;
}

}  // namespace fixture
