#include "ivqr/dgp.hpp"

#include "ivqr/alt_inference.hpp"
#include "ivqr/distributions.hpp"
#include "ivqr/linalg.hpp"
#include "ivqr/parallel.hpp"
#include "ivqr/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>

namespace ivqr::sim {

std::vector<Index> cluster_sizes(Index n, int clusters, double r) {
  if (clusters < 1 || n < clusters) throw Error(ErrorCode::invalid_argument, "cluster_sizes needs n >= J >= 1");
  double total = 0.0;
  for (int k = 1; k <= clusters; ++k) total += std::exp(r * k / clusters);
  std::vector<Index> sizes(static_cast<std::size_t>(clusters));
  Index used = 0;
  for (int j = 1; j < clusters; ++j) {
    const auto nj = static_cast<Index>(std::floor(static_cast<double>(n) * std::exp(r * j / clusters) / total));
    sizes[static_cast<std::size_t>(j - 1)] = nj;
    used += nj;
  }
  sizes.back() = n - used;
  for (std::size_t j = 0; j < sizes.size(); ++j)
    if (sizes[j] <= 0) throw Error(ErrorCode::zero_size_cluster, "cluster " + std::to_string(j + 1) + " is empty");
  return sizes;
}

Vector toeplitz_normal(Index m, double rho, std::mt19937_64& gen) {
  const Eigen::LLT<Matrix> llt(linalg::toeplitz_power(m, rho));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::invalid_argument, "Toeplitz covariance is not positive definite");
  std::normal_distribution<double> norm;
  Vector z(m);
  for (Index i = 0; i < m; ++i) z(i) = norm(gen);
  return llt.matrixL() * z;
}

void Dgp1Config::validate() const {
  if (clusters < 3) throw Error(ErrorCode::invalid_argument, "DGP 1 needs J >= 3");
  if (n < clusters) throw Error(ErrorCode::invalid_argument, "DGP 1 needs n >= J");
  if (dz < 1) throw Error(ErrorCode::invalid_argument, "d_z must be positive");
  if (!std::isfinite(pi) || !std::isfinite(r)) throw Error(ErrorCode::invalid_argument, "pi and r must be finite");
}

double dgp1_beta(double tau) { return 1.0 + tau; }

ClusteredDataset gen_dgp1(const Dgp1Config& config, Vector* latent) {
  config.validate();
  const auto sizes = cluster_sizes(config.n, config.clusters, config.r);
  const Index n = config.n;
  const int nclu = config.clusters;

  ClusteredDataset d;
  d.y.resize(n);
  d.x.resize(n);
  d.w.resize(n, 2);
  d.z.resize(n, config.dz);
  d.cluster.resize(static_cast<std::size_t>(n));
  if (latent) latent->resize(n);

  auto wgen = rng::stream(config.seed, "dgp1.w");
  std::normal_distribution<double> norm;
  const double su = std::sqrt(0.1);
  Index row = 0;
  for (int j = 1; j <= nclu; ++j) {
    const Index nj = sizes[static_cast<std::size_t>(j - 1)];
    const double rho = 0.2 + 0.5 * j / nclu;
    double strength = config.pi;
    if (3 * j > nclu && 3 * j <= 2 * nclu) strength = 0.0;
    else if (3 * j > 2 * nclu) strength = 2.0 * config.pi;

    const std::uint64_t cseed = rng::derive(config.seed, static_cast<std::uint64_t>(j));
    Matrix fa(nj, config.dz);
    for (int k = 0; k < config.dz; ++k) {
      auto gen = rng::stream(cseed, "dgp1.a" + std::to_string(k));
      const Vector a = toeplitz_normal(nj, rho, gen);
      for (Index i = 0; i < nj; ++i) fa(i, k) = dist::normal_cdf(a(i));
    }
    auto ugen = rng::stream(cseed, "dgp1.u");
    const Vector u = toeplitz_normal(nj, rho, ugen);

    for (Index i = 0; i < nj; ++i, ++row) {
      const double fu = dist::normal_cdf(u(i));
      double index = 0.1 + 0.5 * (fu - 0.5);
      for (int k = 0; k < config.dz; ++k) {
        index += strength * (fa(i, k) - 0.5);
        d.z(row, k) = fa(i, k) > 0.5 ? 1.0 : 0.0;
      }
      const double x = index > 0.0 ? 1.0 : 0.0;
      const double e = norm(wgen);
      d.x(row) = x;
      d.w(row, 0) = 1.0;
      d.w(row, 1) = 0.5 * e * e;
      d.y(row) = x * (1.0 + fu) + su * u(i);
      d.cluster[static_cast<std::size_t>(row)] = j - 1;
      if (latent) (*latent)(row) = u(i);
    }
  }
  return d;
}

std::string_view to_string(AdjacencyOp op) { return op == AdjacencyOp::within ? "within" : "as-written"; }

AdjacencyOp parse_adjacency_op(std::string_view text) {
  if (text == "within") return AdjacencyOp::within;
  if (text == "as-written") return AdjacencyOp::as_written;
  throw Error(ErrorCode::invalid_argument, "unknown adjacency op '" + std::string(text) + "'");
}

void Dgp2Config::validate() const {
  if (n < 50) throw Error(ErrorCode::invalid_argument, "DGP 2 needs n >= 50");
  if (L < 1) throw Error(ErrorCode::invalid_argument, "L must be positive");
}

double dgp2_beta(double tau) { return 0.4666 + 0.2 * (tau - 0.5); }

namespace {

struct Dgp2Draw {
  network::Network net;
  Matrix a_norm;
  Vector u, b, y;
  double residual = 0.0;
  bool singular = false;
};

Dgp2Draw draw_dgp2(const Dgp2Config& config, std::uint64_t seed) {
  const Index n = config.n;
  Dgp2Draw out;
  out.net.n = n;

  auto egen = rng::stream(seed, "dgp2.eta");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix eta(n, 2);
  for (Index i = 0; i < n; ++i) {
    eta(i, 0) = unif(egen);
    eta(i, 1) = unif(egen);
  }
  const double radius = std::sqrt(7.0 / (std::numbers::pi * static_cast<double>(n)));
  Matrix adj = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index k = i + 1; k < n; ++k) {
      const double dd = (eta.row(i) - eta.row(k)).norm();
      const bool linked = config.adjacency == AdjacencyOp::within ? dd <= radius : dd >= radius;
      if (linked) {
        adj(i, k) = adj(k, i) = 1.0;
        out.net.edges.emplace_back(i, k);
      }
    }
  const Vector deg = adj.rowwise().sum();
  out.a_norm = adj;
  for (Index i = 0; i < n; ++i)
    if (deg(i) > 0.0) out.a_norm.row(i) /= deg(i);

  auto bgen = rng::stream(seed, "dgp2.b");
  std::normal_distribution<double> norm;
  out.b.resize(n);
  const double sd = std::sqrt(std::log(4.0));
  for (Index i = 0; i < n; ++i) {
    const bool zero = unif(bgen) < 0.5;
    const double e = norm(bgen);
    out.b(i) = (zero || config.zero_background) ? 0.0 : std::exp(-std::log(2.0) + sd * e);
  }
  auto ugen = rng::stream(seed, "dgp2.u");
  out.u.resize(n);
  for (Index i = 0; i < n; ++i) out.u(i) = unif(ugen);

  const Vector c = out.u.array() - 0.5;
  const Vector beta = (0.4666 + 0.2 * c.array()).matrix();
  const Vector d0 = (0.7683 + 0.25 * c.array()).matrix();
  const Vector d1 = (0.0834 + 0.1 * c.array()).matrix();
  const Vector d2 = (0.1507 + 0.2 * c.array()).matrix();
  const Vector ab = out.a_norm * out.b;
  const Vector rhs = d0 + d1.cwiseProduct(out.b) + d2.cwiseProduct(ab);
  Matrix m = -(beta.asDiagonal() * out.a_norm);
  m.diagonal().array() += 1.0;
  const Eigen::PartialPivLU<Matrix> lu(m);
  if (!(lu.rcond() > 1e-12)) {
    out.singular = true;
    return out;
  }
  out.y = lu.solve(rhs);
  out.residual = (out.y - beta.cwiseProduct(out.a_norm * out.y) - rhs).lpNorm<Eigen::Infinity>();
  return out;
}

}  // namespace

Dgp2Sample gen_dgp2(const Dgp2Config& config) {
  config.validate();
  constexpr int max_attempts = 10;
  Dgp2Sample s;
  std::optional<Dgp2Draw> draw;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? config.seed : rng::derive(config.seed, static_cast<std::uint64_t>(attempt));
    Dgp2Draw d = draw_dgp2(config, seed);
    if (!d.singular) {
      draw = std::move(d);
      break;
    }
    ++s.resamples;
    s.warnings.push_back("SingularSystem: resampled with sub-seed " + std::to_string(attempt + 1));
  }
  if (!draw) throw Error(ErrorCode::singular_system, "network system singular after resampling");

  s.partition = network::spectral_partition(draw->net, config.L, rng::derive(config.seed, rng::tag("dgp2.kmeans")),
                                            config.eigens);
  for (Index i = 0; i < config.n; ++i)
    if (s.partition.labels[static_cast<std::size_t>(i)] >= 0) s.kept.push_back(i);

  const Vector x = draw->a_norm * draw->y;
  const Vector ab = draw->a_norm * draw->b;
  const Vector aab = draw->a_norm * ab;
  const auto m = static_cast<Index>(s.kept.size());
  ClusteredDataset& d = s.data;
  d.y.resize(m);
  d.x.resize(m);
  d.w.resize(m, 3);
  d.z.resize(m, 1);
  d.cluster.resize(s.kept.size());
  for (Index r = 0; r < m; ++r) {
    const Index i = s.kept[static_cast<std::size_t>(r)];
    d.y(r) = draw->y(i);
    d.x(r) = x(i);
    d.w(r, 0) = 1.0;
    d.w(r, 1) = draw->b(i);
    d.w(r, 2) = ab(i);
    d.z(r, 0) = aab(i);
    d.cluster[static_cast<std::size_t>(r)] = s.partition.labels[static_cast<std::size_t>(i)];
  }
  s.net = std::move(draw->net);
  s.u = std::move(draw->u);
  s.y = std::move(draw->y);
  s.background = std::move(draw->b);
  s.residual = draw->residual;
  return s;
}

std::string_view to_string(Hypothesis h) { return h == Hypothesis::h0 ? "H0" : "H1"; }

double null_value(const DgpConfig& dgp, double tau, Hypothesis h) {
  if (std::holds_alternative<Dgp1Config>(dgp)) return h == Hypothesis::h0 ? 1.0 + tau : 0.5 + tau;
  return h == Hypothesis::h0 ? dgp2_beta(tau) : 1.2166 + 0.2 * (tau - 0.5);
}

namespace {

double true_beta(const DgpConfig& dgp, double tau) {
  return std::holds_alternative<Dgp1Config>(dgp) ? dgp1_beta(tau) : dgp2_beta(tau);
}

struct Outcome {
  bool ok = false;
  bool reject = false;
  std::string reason;
};

bool is_bootstrap(bootstrap::Method m) {
  using bootstrap::Method;
  return m == Method::t || m == Method::t_cr || m == Method::ar || m == Method::ar_cr || m == Method::t_std;
}

}  // namespace

void McConfig::validate() const {
  if (replications < 1) throw Error(ErrorCode::invalid_argument, "replications must be positive");
  if (draws < 1) throw Error(ErrorCode::invalid_argument, "bootstrap draws must be positive");
  if (taus.empty() || methods.empty() || hypotheses.empty())
    throw Error(ErrorCode::invalid_argument, "taus, methods and hypotheses must be non-empty");
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::invalid_argument, "tau must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
  if (!(grid_half_width >= 0.0) || !(grid_step > 0.0)) throw Error(ErrorCode::invalid_argument, "invalid grid");
  recipe.validate();
}

double McCell::rate() const {
  return successes ? static_cast<double>(rejections) / successes : std::numeric_limits<double>::quiet_NaN();
}

const McCell& McTable::at(bootstrap::Method method, double tau, Hypothesis h) const {
  for (const auto& c : cells)
    if (c.method == method && c.hypothesis == h && std::abs(c.tau - tau) < 1e-12) return c;
  throw Error(ErrorCode::invalid_argument, "no such cell in the rejection table");
}

ClusteredDataset replication_data(const DgpConfig& dgp, std::uint64_t master, int replication) {
  const std::uint64_t seed = rng::derive(master, static_cast<std::uint64_t>(replication));
  if (const auto* c1 = std::get_if<Dgp1Config>(&dgp)) {
    Dgp1Config c = *c1;
    c.seed = seed;
    return gen_dgp1(c);
  }
  Dgp2Config c = std::get<Dgp2Config>(dgp);
  c.seed = seed;
  return gen_dgp2(c).data;
}

McTable monte_carlo(const DgpConfig& dgp, const McConfig& config) {
  config.validate();
  const std::size_t nt = config.taus.size(), nh = config.hypotheses.size(), nm = config.methods.size();
  const auto cell_index = [&](std::size_t h, std::size_t m, std::size_t t) { return (h * nm + m) * nt + t; };
  const std::size_t ncells = nh * nm * nt;
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<std::vector<Outcome>> outcomes(reps);

  parallel_for(reps, [&](std::size_t r) {
    auto& out = outcomes[r];
    out.assign(ncells, Outcome{});
    const std::uint64_t rseed = rng::derive(config.seed, r);
    ClusteredDataset data;
    try {
      data = replication_data(dgp, config.seed, static_cast<int>(r));
    } catch (const Error& e) {
      for (auto& o : out) o.reason = std::string(ivqr::to_string(e.code()));
      return;
    }
    for (std::size_t t = 0; t < nt; ++t) {
      const double tau = config.taus[t];
      const auto grid = estimation::ProfileGrid::centered(true_beta(dgp, tau), config.grid_half_width, config.grid_step);
      for (std::size_t h = 0; h < nh; ++h) {
        const double beta0 = null_value(dgp, tau, config.hypotheses[h]);
        bootstrap::Options opts;
        opts.taus = {tau};
        opts.alpha = config.alpha;
        opts.mode = config.mode;
        opts.draws = config.draws;
        opts.seed = rng::derive(rseed, rng::tag("bootstrap"));
        opts.grid = grid;
        opts.recipe = config.recipe;

        std::unique_ptr<bootstrap::GradientBootstrap> gb;
        std::string gb_error;
        std::optional<alt::GroupEstimates> groups;
        std::string group_error;
        for (std::size_t m = 0; m < nm; ++m) {
          const bootstrap::Method method = config.methods[m];
          Outcome& o = out[cell_index(h, m, t)];
          try {
            bootstrap::TestResult res;
            if (is_bootstrap(method)) {
              if (!gb && gb_error.empty()) {
                try {
                  gb = std::make_unique<bootstrap::GradientBootstrap>(data, opts, std::vector<double>{beta0});
                } catch (const Error& e) {
                  gb_error = std::string(ivqr::to_string(e.code()));
                }
              }
              if (!gb) {
                o.reason = gb_error;
                continue;
              }
              res = method == bootstrap::Method::t_std ? alt::t_std_test(*gb) : gb->run(method);
            } else {
              if (!groups && group_error.empty()) {
                try {
                  groups = alt::group_estimates(data, config.recipe, tau, beta0, grid);
                } catch (const Error& e) {
                  group_error = std::string(ivqr::to_string(e.code()));
                }
              }
              if (!groups) {
                o.reason = group_error;
                continue;
              }
              res = method == bootstrap::Method::im
                        ? alt::im_test(*groups, beta0, config.alpha)
                        : alt::crs_test(*groups, beta0, config.alpha, config.mode, config.draws,
                                        rng::derive(rseed, rng::tag("crs")));
            }
            o.ok = true;
            o.reject = res.reject;
          } catch (const Error& e) {
            o.reason = std::string(ivqr::to_string(e.code()));
          }
        }
      }
    }
  });

  McTable table;
  table.cells.resize(ncells);
  for (std::size_t h = 0; h < nh; ++h)
    for (std::size_t m = 0; m < nm; ++m)
      for (std::size_t t = 0; t < nt; ++t) {
        McCell& c = table.cells[cell_index(h, m, t)];
        c.method = config.methods[m];
        c.tau = config.taus[t];
        c.hypothesis = config.hypotheses[h];
        for (const auto& rep : outcomes) {
          const Outcome& o = rep[cell_index(h, m, t)];
          if (o.ok) {
            ++c.successes;
            c.rejections += o.reject ? 1 : 0;
          } else {
            ++c.failures;
            ++c.failure_reasons[o.reason];
          }
        }
      }
  return table;
}

}  // namespace ivqr::sim
