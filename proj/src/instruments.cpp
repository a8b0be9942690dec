#include "ivqr/instruments.hpp"

#include "ivqr/distributions.hpp"
#include "ivqr/linalg.hpp"
#include "ivqr/qr_solver.hpp"

#include <cmath>
#include <string>

namespace ivqr::instruments {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::parametric: return "parametric";
    case Method::np_full: return "np-full";
    case Method::np_cluster: return "np-cluster";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "parametric") return Method::parametric;
  if (text == "np-full" || text == "nonparametric-full") return Method::np_full;
  if (text == "np-cluster" || text == "nonparametric-cluster") return Method::np_cluster;
  throw Error(ErrorCode::invalid_argument, "unknown instrument method '" + std::string(text) + "'");
}

void Recipe::validate() const {
  for (const auto& h : {h1, h2, h3, h4})
    if (h && !(*h > 0.0 && std::isfinite(*h)))
      throw Error(ErrorCode::invalid_argument, "bandwidth overrides must be positive");
}

FirstStage first_stage_lambda(const ClusteredDataset& data) {
  const Index dz = data.z.cols(), dw = data.w.cols();
  Matrix design(data.n(), dz + dw);
  design << data.z, data.w;
  // Collinear (Z, W) still has a well-defined projection; take the minimum-norm
  // coefficients so the degenerate-instrument path can report it.
  Vector coef = linalg::full_column_rank(design) ? Vector(linalg::ols(design, data.x))
                                                 : Vector(linalg::pinv(design) * data.x);
  FirstStage fs;
  fs.z_coef = coef.head(dz);
  fs.w_coef = coef.tail(dw);
  fs.fitted = design * coef;
  return fs;
}

double q_factor(double tau) {
  const double z = dist::normal_quantile(tau);
  return (1.0 - z) * (1.0 - z) * dist::normal_pdf(z);
}

namespace {

double sample_sd(const Vector& e) {
  const Index n = e.size();
  if (n < 2) return 0.0;
  const double mean = e.mean();
  return std::sqrt((e.array() - mean).square().sum() / static_cast<double>(n - 1));
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

// The bandwidth display on a set of rows: averages are over those rows and the
// rate uses their count.
double bandwidth_on(const ClusteredDataset& data, const Vector& zhat, const Vector& residuals, double tau,
                    bool ww, const std::vector<Index>& rows) {
  const Index m = static_cast<Index>(rows.size());
  const Vector v = data.weights();
  const Index dw = data.w.cols();
  Vector e(m);
  double num = 0.0;
  Matrix gram = Matrix::Zero(dw, dw);
  Vector cross = Vector::Zero(dw);
  for (Index k = 0; k < m; ++k) {
    Index i = rows[static_cast<std::size_t>(k)];
    e(k) = residuals(i);
    const auto wi = data.w.row(i).transpose();
    const double w2 = wi.squaredNorm();
    if (ww) {
      num += v(i) * w2 * w2;
      gram.noalias() += v(i) * wi * wi.transpose();
    } else {
      num += v(i) * w2 * zhat(i) * zhat(i);
      cross.noalias() += v(i) * zhat(i) * wi;
    }
  }
  const double scale = 1.0 / static_cast<double>(m);
  num *= scale;
  const double den = ww ? (gram * scale).squaredNorm() : (cross * scale).squaredNorm();
  const double s = sample_sd(e);
  return s * std::pow(4.5 * num / (q_factor(tau) * den), 0.2) * std::pow(static_cast<double>(m), -0.2);
}

struct Moments {
  Matrix q_ww;
  Vector q_wz;
  double mass_ww = 0.0;
  double mass_wz = 0.0;
};

// Kernel-weighted moment matrices over rows, with uniform kernel 1{|u|<=1}/2.
Moments kernel_moments(const ClusteredDataset& data, const Vector& zhat, const Vector& residuals, double h_ww,
                       double h_wz, const std::vector<Index>& rows) {
  const Index dw = data.w.cols();
  const Vector v = data.weights();
  Moments m{Matrix::Zero(dw, dw), Vector::Zero(dw)};
  auto kernel = [](double e, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) return 0.0;
    return std::abs(e / h) <= 1.0 ? 0.5 / h : 0.0;
  };
  for (Index i : rows) {
    const auto wi = data.w.row(i).transpose();
    const double k1 = kernel(residuals(i), h_ww) * v(i);
    const double k2 = kernel(residuals(i), h_wz) * v(i);
    if (k1 != 0.0) {
      m.q_ww.noalias() += k1 * wi * wi.transpose();
      m.mass_ww += k1;
    }
    if (k2 != 0.0) {
      m.q_wz.noalias() += (k2 * zhat(i)) * wi;
      m.mass_wz += k2;
    }
  }
  const double scale = 1.0 / static_cast<double>(rows.size());
  m.q_ww *= scale;
  m.q_wz *= scale;
  return m;
}

Vector first_stage_fitted(const ClusteredDataset& data) { return first_stage_lambda(data).fitted; }

void flag_degenerate(InstrumentSet& set) {
  const double scale = std::max(1.0, set.zhat.cwiseAbs().maxCoeff());
  if (set.values.cwiseAbs().maxCoeff() <= 1e-12 * scale)
    set.warnings.push_back("DegenerateInstrument: constructed instrument is identically zero");
}

}  // namespace

Vector partial_coefficients(const Matrix& q_ww, const Vector& q_wz) {
  const Matrix g = linalg::pinv(q_ww);
  return q_ww * g * g * q_wz;
}

double rule_of_thumb_bandwidth(const ClusteredDataset& data, const Vector& zhat, const Vector& residuals,
                               double tau, Bandwidth which, std::optional<int> cluster) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::invalid_argument, "tau must lie in (0,1)");
  const bool ww = which == Bandwidth::h1 || which == Bandwidth::h3;
  if (which == Bandwidth::h1 || which == Bandwidth::h2) return bandwidth_on(data, zhat, residuals, tau, ww, all_rows(data.n()));
  if (!cluster) throw Error(ErrorCode::invalid_argument, "cluster-level bandwidth needs a cluster index");
  const auto rows = data.cluster_rows();
  if (*cluster < 0 || *cluster >= static_cast<int>(rows.size()))
    throw Error(ErrorCode::invalid_argument, "cluster index out of range");
  const auto& r = rows[static_cast<std::size_t>(*cluster)];
  if (r.size() < 2) throw Error(ErrorCode::empty_cluster, "cluster " + std::to_string(*cluster) + " has fewer than 2 rows");
  return bandwidth_on(data, zhat, residuals, tau, ww, r);
}

Vector restricted_residuals(const ClusteredDataset& data, const Vector& zhat, double tau, double beta0) {
  const Index dw = data.w.cols();
  Matrix design(data.n(), dw + 1);
  design << data.w, zhat;
  qr::QrKernel kernel(design, data.weights(), tau);
  const Vector response = data.y - beta0 * data.x;
  qr::QrSolution sol = kernel.solve(response);
  return response - data.w * sol.coefficients.head(dw);
}

InstrumentSet build_parametric(const ClusteredDataset& data, const Recipe& recipe, double tau) {
  FirstStage fs = first_stage_lambda(data);
  Matrix pi = linalg::ols(data.w, data.z);
  InstrumentSet set;
  set.tau = tau;
  set.recipe = recipe;
  set.zhat = fs.fitted;
  set.values = (data.z - data.w * pi) * fs.z_coef;
  flag_degenerate(set);
  return set;
}

InstrumentSet build_nonparametric(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0) {
  recipe.validate();
  InstrumentSet set;
  set.tau = tau;
  set.recipe = recipe;
  set.zhat = first_stage_fitted(data);
  const Vector e = restricted_residuals(data, set.zhat, tau, beta0);
  const double h1 = recipe.h1 ? *recipe.h1 : rule_of_thumb_bandwidth(data, set.zhat, e, tau, Bandwidth::h1);
  const double h2 = recipe.h2 ? *recipe.h2 : rule_of_thumb_bandwidth(data, set.zhat, e, tau, Bandwidth::h2);
  Moments m = kernel_moments(data, set.zhat, e, h1, h2, all_rows(data.n()));
  if (m.mass_ww == 0.0 || m.mass_wz == 0.0)
    throw Error(ErrorCode::all_residuals_outside_bandwidth, "kernel window contains no residuals");
  Vector chi = partial_coefficients(m.q_ww, m.q_wz);
  set.values = set.zhat - data.w * chi;
  set.h_ww = {h1};
  set.h_wz = {h2};
  set.chi = {chi};
  flag_degenerate(set);
  return set;
}

InstrumentSet build_cluster_level(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0) {
  recipe.validate();
  const auto rows = data.cluster_rows();
  for (std::size_t j = 0; j < rows.size(); ++j)
    if (rows[j].size() < 2) throw Error(ErrorCode::empty_cluster, "cluster " + std::to_string(j) + " has fewer than 2 rows");
  InstrumentSet set;
  set.tau = tau;
  set.recipe = recipe;
  set.zhat = first_stage_fitted(data);
  const Vector e = restricted_residuals(data, set.zhat, tau, beta0);
  set.values = set.zhat;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& r = rows[j];
    if (r.size() < 10)
      set.warnings.push_back("cluster " + std::to_string(j) + " has " + std::to_string(r.size()) +
                             " rows; consider merging small clusters or the full-sample recipe");
    const double h3 = recipe.h3 ? *recipe.h3 : bandwidth_on(data, set.zhat, e, tau, true, r);
    const double h4 = recipe.h4 ? *recipe.h4 : bandwidth_on(data, set.zhat, e, tau, false, r);
    Moments m = kernel_moments(data, set.zhat, e, h3, h4, r);
    Vector chi = partial_coefficients(m.q_ww, m.q_wz);
    for (Index i : r) set.values(i) = set.zhat(i) - data.w.row(i).dot(chi);
    set.h_ww.push_back(h3);
    set.h_wz.push_back(h4);
    set.chi.push_back(chi);
  }
  flag_degenerate(set);
  return set;
}

InstrumentSet build(const ClusteredDataset& data, const Recipe& recipe, double tau, double beta0) {
  switch (recipe.method) {
    case Method::parametric: return build_parametric(data, recipe, tau);
    case Method::np_full: return build_nonparametric(data, recipe, tau, beta0);
    case Method::np_cluster: return build_cluster_level(data, recipe, tau, beta0);
  }
  throw Error(ErrorCode::invalid_argument, "unknown instrument method");
}

}  // namespace ivqr::instruments
