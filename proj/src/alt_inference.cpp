#include "ivqr/alt_inference.hpp"

#include "ivqr/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ivqr::alt {

GroupEstimates group_estimates(const ClusteredDataset& data, const instruments::Recipe& recipe, double tau,
                               double beta0, const estimation::ProfileGrid& grid) {
  instruments::Recipe r = recipe;
  r.method = instruments::Method::np_cluster;
  const instruments::InstrumentSet inst = instruments::build_cluster_level(data, r, tau, beta0);
  GroupEstimates out;
  out.tau = tau;
  const auto rows = data.cluster_rows();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    try {
      const ClusteredDataset sub = data.subset(rows[j]);
      instruments::InstrumentSet local = inst;
      local.values.resize(static_cast<Index>(rows[j].size()));
      local.zhat.resize(local.values.size());
      for (std::size_t k = 0; k < rows[j].size(); ++k) {
        local.values(static_cast<Index>(k)) = inst.values(rows[j][k]);
        local.zhat(static_cast<Index>(k)) = inst.zhat(rows[j][k]);
      }
      out.betas.push_back(estimation::estimate_tau(sub, local, grid).beta);
    } catch (const Error& e) {
      out.failures.push_back(static_cast<int>(j));
      out.reasons.push_back(e.what());
    }
  }
  return out;
}

double group_t(const std::vector<double>& d) {
  const auto j = static_cast<double>(d.size());
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= j;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (j - 1.0));
  if (sd == 0.0) return mean == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                    : std::copysign(std::numeric_limits<double>::infinity(), mean);
  return std::sqrt(j) * mean / sd;
}

double jacobian_phi_x(const ClusteredDataset& data, const Vector& phi, const Vector& residuals, double tau) {
  const Vector v = data.weights();
  const auto n = static_cast<double>(data.n());
  double num = 0.0, cross = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    num += v(i) * phi(i) * phi(i) * data.x(i) * data.x(i);
    cross += v(i) * phi(i) * data.x(i);
  }
  num /= n;
  cross /= n;
  const double mean = residuals.mean();
  const double s = std::sqrt((residuals.array() - mean).square().sum() / (n - 1.0));
  const double h = s * std::pow(4.5 * num / (instruments::q_factor(tau) * cross * cross), 0.2) * std::pow(n, -0.2);
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::singular_moment, "Jacobian bandwidth is degenerate");
  double jac = 0.0;
  for (Index i = 0; i < data.n(); ++i)
    if (std::abs(residuals(i) / h) <= 1.0) jac += 0.5 / h * v(i) * phi(i) * data.x(i);
  return jac / n;
}

TestResult t_std_test(const bootstrap::GradientBootstrap& gb) {
  const ClusteredDataset& data = gb.contexts().front().profile->data();
  TestResult res;
  res.method = bootstrap::Method::t_std;
  res.alpha = gb.options().alpha;
  res.taus = gb.options().taus;
  const auto n = static_cast<double>(data.n());
  double stat = 0.0;
  for (const auto& c : gb.contexts()) {
    res.beta0.push_back(c.beta0);
    const Vector e = data.y - c.fit.beta * data.x - data.w * c.fit.gamma;
    const double gamma = jacobian_phi_x(data, c.inst.values, e, c.tau);
    if (!(c.omega_hat > 1e-14) || gamma == 0.0) throw Error(ErrorCode::singular_crve, "T_STD variance is degenerate");
    stat = std::max(stat, std::sqrt(n) * std::abs(c.fit.beta - c.beta0) * std::abs(gamma) / std::sqrt(c.omega_hat));
  }
  res.statistic = stat;
  res.critical_value = dist::normal_quantile(1.0 - res.alpha / 2.0);
  res.reject = res.statistic > res.critical_value;
  res.p_value = 2.0 * (1.0 - dist::normal_cdf(res.statistic));
  res.warnings.push_back("two-sided normal critical value");
  return res;
}

TestResult t_std_test(const ClusteredDataset& data, const bootstrap::Options& options, double beta0) {
  bootstrap::GradientBootstrap gb(data, options, {beta0});
  return t_std_test(gb);
}

namespace {

void require_groups(const GroupEstimates& groups) {
  if (!groups.failures.empty()) {
    std::string msg = "cluster fit failed for cluster " + std::to_string(groups.failures.front());
    if (!groups.reasons.empty()) msg += ": " + groups.reasons.front();
    throw Error(ErrorCode::cluster_fit_failure, msg);
  }
  if (groups.betas.size() < 2) throw Error(ErrorCode::cluster_fit_failure, "need at least two cluster estimates");
}

std::vector<double> deviations(const GroupEstimates& groups, double beta0) {
  std::vector<double> d;
  for (double b : groups.betas) d.push_back(b - beta0);
  return d;
}

}  // namespace

TestResult im_test(const GroupEstimates& groups, double beta0, double alpha) {
  require_groups(groups);
  const double t = group_t(deviations(groups, beta0));
  if (std::isnan(t)) throw Error(ErrorCode::non_informative, "group estimates have zero spread");
  const double df = static_cast<double>(groups.betas.size()) - 1.0;
  TestResult res;
  res.method = bootstrap::Method::im;
  res.taus = {groups.tau};
  res.beta0 = {beta0};
  res.alpha = alpha;
  res.statistic = std::abs(t);
  res.critical_value = dist::student_t_quantile(1.0 - alpha / 2.0, df);
  res.reject = res.statistic > res.critical_value;
  res.p_value = std::isinf(t) ? 0.0 : 2.0 * (1.0 - dist::student_t_cdf(res.statistic, df));
  res.n_sign_vectors = 0;
  return res;
}

TestResult crs_test(const GroupEstimates& groups, double beta0, double alpha, bootstrap::Mode mode,
                    std::size_t draws, std::uint64_t seed) {
  require_groups(groups);
  const std::vector<double> d = deviations(groups, beta0);
  const double t = group_t(d);
  if (std::isnan(t)) throw Error(ErrorCode::non_informative, "group estimates have zero spread");
  const int j = static_cast<int>(d.size());
  const bootstrap::Mode m = bootstrap::resolve_mode(mode, j);
  const std::size_t count = bootstrap::draw_count(m, j, draws);
  std::vector<double> stats(count);
  std::vector<double> flipped(d.size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto g = bootstrap::sign_vector(j, m, k, seed);
    for (std::size_t c = 0; c < d.size(); ++c) flipped[c] = g[c] * d[c];
    const double tk = group_t(flipped);
    stats[k] = std::isnan(tk) ? 0.0 : std::abs(tk);
  }
  if (std::all_of(stats.begin(), stats.end(), [&](double s) { return s == stats.front(); }))
    throw Error(ErrorCode::non_informative, "all randomized statistics are equal");
  TestResult res;
  res.method = bootstrap::Method::crs;
  res.taus = {groups.tau};
  res.beta0 = {beta0};
  res.alpha = alpha;
  res.mode = m;
  res.statistic = std::abs(t);
  res.critical_value = bootstrap::critical_value(stats, alpha);
  res.reject = res.statistic > res.critical_value;
  std::size_t exceed = 0;
  for (double s : stats)
    if (s >= res.statistic) ++exceed;
  res.n_sign_vectors = count;
  res.p_value = m == bootstrap::Mode::enumerate ? static_cast<double>(exceed) / static_cast<double>(count)
                                                : (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(count));
  return res;
}

}  // namespace ivqr::alt
