#pragma once

#include "ivqr/bootstrap.hpp"
#include "ivqr/dataset.hpp"
#include "ivqr/network.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace ivqr::sim {

// n_j = floor(n e^{rj/J} / sum_k e^{rk/J}) for j < J, the remainder last.
// Throws Error(zero_size_cluster).
std::vector<Index> cluster_sizes(Index n, int clusters, double r);

// m draws from N(0, Sigma) with Sigma_st = rho^|s-t|.
Vector toeplitz_normal(Index m, double rho, std::mt19937_64& gen);

// Clustered design with Toeplitz within-cluster dependence and first-stage
// strength pi, 0 and 2 pi across the three thirds of the clusters.
struct Dgp1Config {
  Index n = 500;
  int clusters = 9;
  int dz = 1;
  double pi = 1.0;
  double r = 4.0;
  std::uint64_t seed = 0;

  void validate() const;
};

double dgp1_beta(double tau);

// `u`, when given, receives the latent rank variable of each row.
ClusteredDataset gen_dgp1(const Dgp1Config& config, Vector* u = nullptr);

enum class AdjacencyOp { within, as_written };

std::string_view to_string(AdjacencyOp op);
AdjacencyOp parse_adjacency_op(std::string_view text);

// Linear-in-means network model on a random geometric graph, clustered by
// spectral partitioning.
struct Dgp2Config {
  Index n = 500;
  int L = 10;
  std::uint64_t seed = 0;
  AdjacencyOp adjacency = AdjacencyOp::within;
  network::Eigens eigens = network::Eigens::largest;
  bool zero_background = false;  // forces B = 0

  void validate() const;
};

double dgp2_beta(double tau);

struct Dgp2Sample {
  ClusteredDataset data;  // nodes of kept components, in node order
  network::Network net;
  network::Partition partition;
  std::vector<Index> kept;  // node id of each data row
  Vector u;                 // rank variables, all nodes
  Vector y;                 // outcomes, all nodes
  Vector background;        // B, all nodes
  double residual = 0.0;    // sup-norm residual of the defining linear system
  int resamples = 0;
  Warnings warnings;
};

Dgp2Sample gen_dgp2(const Dgp2Config& config);

enum class Hypothesis { h0, h1 };

std::string_view to_string(Hypothesis h);

using DgpConfig = std::variant<Dgp1Config, Dgp2Config>;

// Null value of beta(tau) under the given hypothesis.
double null_value(const DgpConfig& dgp, double tau, Hypothesis h);

struct McConfig {
  int replications = 500;
  std::size_t draws = 300;
  std::vector<double> taus{0.1, 0.25, 0.5, 0.75, 0.9};
  double alpha = 0.10;
  std::vector<bootstrap::Method> methods{bootstrap::Method::t_cr, bootstrap::Method::t, bootstrap::Method::ar,
                                         bootstrap::Method::t_std, bootstrap::Method::im, bootstrap::Method::crs};
  std::vector<Hypothesis> hypotheses{Hypothesis::h0, Hypothesis::h1};
  bootstrap::Mode mode = bootstrap::Mode::sample;
  // Profile grid: true beta(tau) +- half_width.
  double grid_half_width = 1.0;
  double grid_step = 0.01;
  instruments::Recipe recipe;
  std::uint64_t seed = 0;

  void validate() const;
};

struct McCell {
  bootstrap::Method method = bootstrap::Method::t_cr;
  double tau = 0.5;
  Hypothesis hypothesis = Hypothesis::h0;
  int rejections = 0;
  int successes = 0;
  int failures = 0;
  std::map<std::string, int> failure_reasons;  // error code name -> count

  // Rejection frequency among successful replications; NaN if none.
  double rate() const;
};

struct McTable {
  std::vector<McCell> cells;  // hypothesis-major, then method, then tau

  const McCell& at(bootstrap::Method method, double tau, Hypothesis h) const;
};

// Replication r regenerates the data from rng::derive(config.seed, r).
McTable monte_carlo(const DgpConfig& dgp, const McConfig& config);

// Data of replication r, as used by monte_carlo.
ClusteredDataset replication_data(const DgpConfig& dgp, std::uint64_t master, int replication);

}  // namespace ivqr::sim
