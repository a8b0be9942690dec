#include "ivqr/network.hpp"

#include "ivqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <string>

namespace ivqr::network {

void Network::validate() const {
  if (n < 0) throw Error(ErrorCode::invalid_argument, "negative node count");
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw Error(ErrorCode::invalid_argument, "edge endpoint out of range");
    if (a == b) throw Error(ErrorCode::invalid_argument, "self-loops are not allowed");
  }
}

std::vector<std::vector<Index>> Network::adjacency() const {
  validate();
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

std::vector<std::vector<Index>> connected_components(const Network& net, std::size_t min_size) {
  const auto adj = net.adjacency();
  std::vector<char> seen(static_cast<std::size_t>(net.n), 0);
  std::vector<std::vector<Index>> comps;
  for (Index s = 0; s < net.n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    std::vector<Index> comp;
    std::queue<Index> q;
    q.push(s);
    seen[static_cast<std::size_t>(s)] = 1;
    while (!q.empty()) {
      Index u = q.front();
      q.pop();
      comp.push_back(u);
      for (Index w : adj[static_cast<std::size_t>(u)])
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          q.push(w);
        }
    }
    std::sort(comp.begin(), comp.end());
    if (comp.size() > min_size) comps.push_back(std::move(comp));
  }
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.size() < b.size(); });
  return comps;
}

Matrix graph_laplacian(const Network& net, const std::vector<Index>& nodes) {
  const auto adj = net.adjacency();
  const Index m = static_cast<Index>(nodes.size());
  std::vector<Index> pos(static_cast<std::size_t>(net.n), -1);
  for (Index k = 0; k < m; ++k) pos[static_cast<std::size_t>(nodes[static_cast<std::size_t>(k)])] = k;
  Matrix a = Matrix::Zero(m, m);
  for (Index k = 0; k < m; ++k)
    for (Index w : adj[static_cast<std::size_t>(nodes[static_cast<std::size_t>(k)])])
      if (pos[static_cast<std::size_t>(w)] >= 0) a(k, pos[static_cast<std::size_t>(w)]) = 1.0;
  Vector d = a.rowwise().sum();
  for (Index k = 0; k < m; ++k)
    if (d(k) == 0.0) throw Error(ErrorCode::isolated_node, "node " + std::to_string(nodes[static_cast<std::size_t>(k)]) + " has no neighbours");
  Vector s = d.cwiseSqrt().cwiseInverse();
  Matrix l = -(s.asDiagonal() * a * s.asDiagonal());
  l.diagonal().array() += 1.0;
  return l;
}

namespace {

double assign(const Matrix& pts, const Matrix& centers, std::vector<int>& labels) {
  double inertia = 0.0;
  for (Index i = 0; i < pts.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centers.rows(); ++c) {
      double dd = (pts.row(i) - centers.row(c)).squaredNorm();
      if (dd < bd) {
        bd = dd;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += bd;
  }
  return inertia;
}

KMeansResult lloyd(const Matrix& pts, int k, std::mt19937_64& gen, int max_iter, double tol) {
  const Index n = pts.rows();
  Matrix centers(k, pts.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // k-means++ seeding.
  Index first = static_cast<Index>(std::min<double>(static_cast<double>(n - 1), std::floor(unif(gen) * static_cast<double>(n))));
  centers.row(0) = pts.row(first);
  Vector dist(n);
  for (Index i = 0; i < n; ++i) dist(i) = (pts.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      double r = unif(gen) * total, acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += dist(i);
        if (acc >= r && dist(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(c) % n;
    }
    centers.row(c) = pts.row(pick);
    for (Index i = 0; i < n; ++i) dist(i) = std::min(dist(i), (pts.row(i) - centers.row(c)).squaredNorm());
  }

  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), 0);
  double inertia = assign(pts, centers, res.labels);
  for (res.iterations = 1; res.iterations <= max_iter; ++res.iterations) {
    Matrix sums = Matrix::Zero(k, pts.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.labels[static_cast<std::size_t>(i)]) += pts.row(i);
      ++counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Empty cluster: move its center to the point farthest from its own.
        Index far = 0;
        double fd = -1.0;
        for (Index i = 0; i < n; ++i) {
          double dd = (pts.row(i) - centers.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        centers.row(c) = pts.row(far);
      }
    }
    const double next = assign(pts, centers, res.labels);
    const bool done = inertia - next <= tol * std::max(inertia, 1e-300);
    inertia = next;
    if (done) break;
  }
  res.centers = centers;
  res.inertia = inertia;
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts, int max_iter, double tol) {
  if (k < 1 || k > points.rows()) throw Error(ErrorCode::invalid_argument, "k must lie in [1, number of points]");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    auto gen = rng::stream(seed, static_cast<std::uint64_t>(r));
    KMeansResult res = lloyd(points, k, gen, max_iter, tol);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

Partition spectral_partition(const Network& net, int L, std::uint64_t seed, Eigens eigens) {
  if (L < 1) throw Error(ErrorCode::invalid_argument, "L must be positive");
  auto comps = connected_components(net);
  if (comps.empty()) throw Error(ErrorCode::invalid_argument, "no component has more than 5 nodes");
  const std::vector<Index>& giant = comps.back();
  if (static_cast<Index>(giant.size()) <= L) throw Error(ErrorCode::invalid_argument, "largest component is not larger than L");

  Partition part;
  part.labels.assign(static_cast<std::size_t>(net.n), -1);
  std::vector<int> giant_labels(giant.size(), 0);
  if (L > 1) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(graph_laplacian(net, giant));
    if (es.info() != Eigen::Success) throw Error(ErrorCode::singular_system, "Laplacian eigensolver failed");
    // Eigenvalues come out ascending.
    Matrix emb = eigens == Eigens::smallest ? Matrix(es.eigenvectors().leftCols(L)) : Matrix(es.eigenvectors().rightCols(L));
    giant_labels = kmeans(emb, L, seed).labels;
  }
  // Relabel groups by first appearance in node order so labels do not depend
  // on the k-means center order.
  std::vector<int> remap(static_cast<std::size_t>(L), -1);
  int next = 0;
  for (std::size_t k = 0; k < giant.size(); ++k) {
    int& r = remap[static_cast<std::size_t>(giant_labels[k])];
    if (r < 0) r = next++;
    part.labels[static_cast<std::size_t>(giant[k])] = r;
  }
  part.clusters = next;
  // Remaining kept components, largest first.
  for (std::size_t c = comps.size() - 1; c-- > 0;) {
    for (Index node : comps[c]) part.labels[static_cast<std::size_t>(node)] = part.clusters;
    ++part.clusters;
  }
  part.sizes.assign(static_cast<std::size_t>(part.clusters), 0);
  for (int l : part.labels)
    if (l >= 0) ++part.sizes[static_cast<std::size_t>(l)];
  return part;
}

}  // namespace ivqr::network
