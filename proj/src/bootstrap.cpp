#include "ivqr/bootstrap.hpp"

#include "ivqr/parallel.hpp"
#include "ivqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ivqr::bootstrap {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::automatic: return "auto";
    case Mode::enumerate: return "enumerate";
    case Mode::sample: return "sample";
  }
  return "unknown";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::t: return "T";
    case Method::t_cr: return "T_CR";
    case Method::ar: return "AR";
    case Method::ar_cr: return "AR_CR";
    case Method::t_std: return "T_STD";
    case Method::im: return "IM";
    case Method::crs: return "CRS";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "t" || text == "T") return Method::t;
  if (text == "t-cr" || text == "T_CR") return Method::t_cr;
  if (text == "ar" || text == "AR") return Method::ar;
  if (text == "ar-cr" || text == "AR_CR") return Method::ar_cr;
  if (text == "t-std" || text == "T_STD") return Method::t_std;
  if (text == "im" || text == "IM") return Method::im;
  if (text == "crs" || text == "CRS") return Method::crs;
  throw Error(ErrorCode::invalid_argument, "unknown test method '" + std::string(text) + "'");
}

Mode parse_mode(std::string_view text) {
  if (text == "auto") return Mode::automatic;
  if (text == "enumerate") return Mode::enumerate;
  if (text == "sample") return Mode::sample;
  throw Error(ErrorCode::invalid_argument, "unknown bootstrap mode '" + std::string(text) + "'");
}

void Options::validate() const {
  if (taus.empty()) throw Error(ErrorCode::invalid_argument, "at least one quantile index is required");
  for (double t : taus)
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::invalid_argument, "tau must lie in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0,1)");
  if (mode == Mode::sample && draws == 0) throw Error(ErrorCode::invalid_argument, "draws must be positive");
  for (double a : {a1, a2, a3, ghat_scale})
    if (!(a > 0.0 && std::isfinite(a))) throw Error(ErrorCode::invalid_argument, "weights must be positive");
  grid.validate();
  recipe.validate();
}

Matrix cluster_score_sums(const ClusteredDataset& data, const Vector& phi, double b, const Vector& r, double t,
                          double tau) {
  const Index dw = data.w.cols();
  const int j_count = data.clusters();
  Matrix sums = Matrix::Zero(j_count, dw + 1);
  const bool weighted = data.v.size() != 0;
  for (Index i = 0; i < data.n(); ++i) {
    const double e = data.y(i) - data.x(i) * b - data.w.row(i).dot(r) - phi(i) * t;
    double s = tau - (e <= 0.0 ? 1.0 : 0.0);
    if (weighted) s *= data.v(i);
    const int j = data.cluster[static_cast<std::size_t>(i)];
    sums.row(j).head(dw).noalias() += s * data.w.row(i);
    sums(j, dw) += s * phi(i);
  }
  return sums;
}

Vector signed_shift(const Matrix& sums, const std::vector<signed char>& g) {
  if (static_cast<Index>(g.size()) != sums.rows()) throw Error(ErrorCode::invalid_argument, "sign vector length mismatch");
  Vector s = Vector::Zero(sums.cols());
  for (Index j = 0; j < sums.rows(); ++j) s += static_cast<double>(g[static_cast<std::size_t>(j)]) * sums.row(j).transpose();
  return s;
}

double critical_value(std::vector<double> stats, double alpha) {
  if (stats.empty()) throw Error(ErrorCode::invalid_argument, "no bootstrap statistics");
  const double n = static_cast<double>(stats.size());
  auto k = static_cast<std::size_t>(std::ceil(n * (1.0 - alpha) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, stats.size());
  std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(k - 1), stats.end());
  return stats[k - 1];
}

Mode resolve_mode(Mode mode, int clusters) {
  if (mode == Mode::automatic) return clusters <= 14 ? Mode::enumerate : Mode::sample;
  if (mode == Mode::enumerate && clusters > 20)
    throw Error(ErrorCode::invalid_argument, "enumeration limited to 2^20 sign vectors");
  return mode;
}

std::size_t draw_count(Mode mode, int clusters, std::size_t draws) {
  return mode == Mode::enumerate ? (std::size_t{1} << clusters) : draws;
}

std::vector<signed char> sign_vector(int clusters, Mode mode, std::uint64_t index, std::uint64_t seed) {
  std::vector<signed char> g(static_cast<std::size_t>(clusters), 1);
  if (mode == Mode::enumerate) {
    for (int j = 0; j < clusters; ++j)
      if ((index >> j) & 1U) g[static_cast<std::size_t>(j)] = -1;
    return g;
  }
  auto gen = rng::stream(seed, index);
  std::uint64_t bits = 0;
  for (int j = 0; j < clusters; ++j) {
    if (j % 64 == 0) bits = gen();
    if ((bits >> (j % 64)) & 1U) g[static_cast<std::size_t>(j)] = -1;
  }
  return g;
}

Matrix crve_omega(const Matrix& sums, const Matrix& sums_other, Index n, Index d_phi) {
  const Matrix a = sums.rightCols(d_phi);
  const Matrix b = sums_other.rightCols(d_phi);
  return a.transpose() * b / static_cast<double>(n);
}

Crve crve(const Matrix& sums, const Vector& g, Index n) {
  Crve out;
  out.omega = crve_omega(sums, sums, n, g.size());
  const double q = g.dot(out.omega * g);
  if (!(q > 1e-14)) throw Error(ErrorCode::singular_crve, "G' Omega G is not positive");
  out.a_cr = 1.0 / q;
  return out;
}

Vector ghat(const Matrix& e_x_phi, const Matrix& e_phi_phi, const Matrix& a1) {
  Eigen::FullPivLU<Matrix> lu(e_phi_phi);
  if (!lu.isInvertible()) throw Error(ErrorCode::singular_moment, "instrument second moment is singular");
  const Matrix inv = lu.inverse();
  const Matrix right = e_x_phi * inv * a1 * inv;  // 1 x d_phi
  const Matrix left = right * e_x_phi.transpose();  // 1 x 1
  if (!(std::abs(left(0, 0)) > 0.0)) throw Error(ErrorCode::singular_moment, "instrument is orthogonal to X");
  return (right / left(0, 0)).transpose();
}

double ghat(const ClusteredDataset& data, const Vector& phi, double a1) {
  const Vector v = data.weights();
  const double n = static_cast<double>(data.n());
  Matrix exp(1, 1), epp(1, 1), a(1, 1);
  exp(0, 0) = (data.x.array() * phi.array() * v.array()).sum() / n;
  epp(0, 0) = (phi.array().square() * v.array()).sum() / n;
  a(0, 0) = a1;
  const double scale = std::max(1.0, (phi.array().square() * v.array()).maxCoeff());
  if (!(epp(0, 0) > 1e-14 * scale)) throw Error(ErrorCode::singular_moment, "instrument second moment is zero");
  return ghat(exp, epp, a)(0);
}

Crve bootstrap_crve(const std::vector<signed char>& g, const Matrix& null_sums, const Matrix& boot_sums,
                    const Matrix& fit_sums, const Vector& gh, Index n) {
  Matrix star = boot_sums - fit_sums;
  for (Index j = 0; j < star.rows(); ++j)
    star.row(j) += static_cast<double>(g[static_cast<std::size_t>(j)]) * null_sums.row(j);
  return crve(star, gh, n);
}

namespace {

double omega_phi(const Matrix& sums, Index n) {
  const Index last = sums.cols() - 1;
  return sums.col(last).squaredNorm() / static_cast<double>(n);
}

}  // namespace

GradientBootstrap::GradientBootstrap(const ClusteredDataset& data, Options options, std::vector<double> beta0)
    : data_(data), options_(std::move(options)) {
  data_.validate();
  options_.validate();
  if (beta0.size() == 1 && options_.taus.size() > 1) beta0.assign(options_.taus.size(), beta0[0]);
  if (beta0.size() != options_.taus.size())
    throw Error(ErrorCode::invalid_argument, "need one null value per quantile index");
  clusters_ = data_.clusters();
  mode_ = resolve_mode(options_.mode, clusters_);
  draws_ = draw_count(mode_, clusters_, options_.draws);
  const Vector v = data_.weights();
  const double n = static_cast<double>(data_.n());
  const auto grid = options_.grid.points();
  for (std::size_t k = 0; k < options_.taus.size(); ++k) {
    TauContext c;
    c.tau = options_.taus[k];
    c.beta0 = beta0[k];
    c.inst = instruments::build(data_, options_.recipe, c.tau, c.beta0);
    c.profile = std::make_unique<estimation::Profile>(data_, c.inst.values, c.tau);
    c.grid = grid;
    c.fit = estimation::estimate_tau(data_, c.inst, options_.grid, options_.a1);
    c.restricted = c.profile->fit(c.beta0);
    if (c.restricted.status == qr::QrStatus::unbounded)
      throw Error(ErrorCode::unbounded, "restricted fit is unbounded");
    c.null_sums = cluster_score_sums(data_, c.inst.values, c.beta0, c.restricted.gamma, 0.0, c.tau);
    c.fit_sums = cluster_score_sums(data_, c.inst.values, c.fit.beta, c.fit.gamma, 0.0, c.tau);
    c.ghat = options_.ghat_scale * ghat(data_, c.inst.values, options_.a1);
    c.omega_hat = omega_phi(c.fit_sums, data_.n());
    c.omega_null = omega_phi(c.null_sums, data_.n());
    c.h_hat = (c.inst.values.array().square() * v.array()).sum() / n;
    ctx_.push_back(std::move(c));
  }
}

GradientBootstrap::~GradientBootstrap() = default;

estimation::SweepResult GradientBootstrap::bootstrap_beta(std::size_t k, const std::vector<signed char>& g) const {
  const TauContext& c = ctx_[k];
  const Vector s = signed_shift(c.null_sums, g);
  return c.profile->sweep(c.grid, options_.a1, s, c.restricted.basis);
}

void GradientBootstrap::ensure_wald_draws() {
  if (wald_) return;
  std::vector<WaldDraw> draws(draws_);
  parallel_for(draws_, [&](std::size_t d) {
    const auto g = sign_vector(clusters_, mode_, d, options_.seed);
    WaldDraw& out = draws[d];
    for (std::size_t k = 0; k < ctx_.size(); ++k) {
      const TauContext& c = ctx_[k];
      estimation::SweepResult s = bootstrap_beta(k, g);
      if (!s.bounded) {
        out.bounded = false;
        return;
      }
      out.boundary = out.boundary || s.boundary;
      out.beta.push_back(s.beta);
      Matrix boot = cluster_score_sums(data_, c.inst.values, s.beta, s.gamma, 0.0, c.tau);
      Matrix star = boot - c.fit_sums;
      for (Index j = 0; j < star.rows(); ++j) star.row(j) += static_cast<double>(g[static_cast<std::size_t>(j)]) * c.null_sums.row(j);
      out.omega.push_back(omega_phi(star, data_.n()));
    }
  });
  wald_ = std::move(draws);
}

void GradientBootstrap::ensure_ar_draws() {
  if (ar_) return;
  std::vector<ArDraw> draws(draws_);
  parallel_for(draws_, [&](std::size_t d) {
    const auto g = sign_vector(clusters_, mode_, d, options_.seed);
    ArDraw& out = draws[d];
    for (std::size_t k = 0; k < ctx_.size(); ++k) {
      const TauContext& c = ctx_[k];
      estimation::ProfileFit f = c.profile->fit(c.beta0, signed_shift(c.null_sums, g), c.restricted.basis);
      if (f.status == qr::QrStatus::unbounded) {
        out.bounded = false;
        return;
      }
      out.theta.push_back(f.theta(0));
    }
  });
  ar_ = std::move(draws);
}

TestResult GradientBootstrap::assemble(Method method, const std::vector<double>& base,
                                       const std::vector<double>& scale,
                                       const std::vector<std::vector<double>>& boot_base,
                                       const std::vector<char>& valid, std::size_t boundary_hits) {
  TestResult res;
  res.method = method;
  res.taus = options_.taus;
  for (const auto& c : ctx_) res.beta0.push_back(c.beta0);
  res.alpha = options_.alpha;
  res.mode = mode_;
  res.boundary_hits = boundary_hits;
  for (const auto& c : ctx_) {
    res.warnings.insert(res.warnings.end(), c.inst.warnings.begin(), c.inst.warnings.end());
    res.warnings.insert(res.warnings.end(), c.fit.warnings.begin(), c.fit.warnings.end());
  }
  if (clusters_ < 2) res.warnings.push_back("fewer than two clusters");

  // With a single quantile index the positive weights factor out of every
  // statistic, so decisions are taken on the unweighted values.
  const bool factor = ctx_.size() == 1;
  auto combine = [&](const std::vector<double>& values) {
    double out = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) out = std::max(out, factor ? values[k] : scale[k] * values[k]);
    return out;
  };
  const double stat = combine(base);
  std::vector<double> boot;
  for (std::size_t d = 0; d < boot_base.size(); ++d) {
    if (valid[d]) boot.push_back(combine(boot_base[d]));
    else ++res.excluded_draws;
  }
  if (static_cast<double>(res.excluded_draws) > 0.01 * static_cast<double>(boot_base.size()))
    throw Error(ErrorCode::too_many_excluded_draws,
                std::to_string(res.excluded_draws) + " of " + std::to_string(boot_base.size()) + " draws excluded");
  if (res.excluded_draws) res.warnings.push_back(std::to_string(res.excluded_draws) + " bootstrap draws excluded");
  if (boundary_hits) res.warnings.push_back(std::to_string(boundary_hits) + " bootstrap estimates on the grid boundary");
  if (boot.empty()) throw Error(ErrorCode::non_informative, "no valid bootstrap draws");
  if (std::all_of(boot.begin(), boot.end(), [&](double b) { return b == boot.front(); }))
    throw Error(ErrorCode::non_informative, "all bootstrap statistics are equal");
  const double cv = critical_value(boot, options_.alpha);
  std::size_t exceed = 0;
  for (double b : boot)
    if (b >= stat) ++exceed;
  const double mult = factor ? scale[0] : 1.0;
  res.statistic = mult * stat;
  res.critical_value = mult * cv;
  res.reject = stat > cv;
  res.n_sign_vectors = boot.size();
  const double count = static_cast<double>(exceed);
  res.p_value = mode_ == Mode::enumerate ? count / static_cast<double>(boot.size())
                                         : (1.0 + count) / (1.0 + static_cast<double>(boot.size()));
  return res;
}

TestResult GradientBootstrap::wald_test(bool crve_weighting) {
  ensure_wald_draws();
  std::vector<double> base, scale;
  for (const auto& c : ctx_) {
    const double delta = std::abs(c.fit.beta - c.beta0);
    if (crve_weighting) {
      if (!(c.ghat * c.ghat * c.omega_hat > 1e-14)) throw Error(ErrorCode::singular_crve, "G' Omega G is not positive");
      base.push_back(delta / std::sqrt(c.omega_hat));
      scale.push_back(1.0 / std::abs(c.ghat));
    } else {
      base.push_back(delta);
      scale.push_back(std::sqrt(options_.a2));
    }
  }
  std::vector<std::vector<double>> boot(draws_);
  std::vector<char> valid(draws_, 1);
  std::size_t boundary = 0;
  for (std::size_t d = 0; d < draws_; ++d) {
    const WaldDraw& w = (*wald_)[d];
    if (!w.bounded) {
      valid[d] = 0;
      continue;
    }
    if (w.boundary) ++boundary;
    for (std::size_t k = 0; k < ctx_.size(); ++k) {
      const double delta = std::abs(w.beta[k] - ctx_[k].fit.beta);
      if (crve_weighting) {
        if (!(ctx_[k].ghat * ctx_[k].ghat * w.omega[k] > 1e-14)) {
          valid[d] = 0;
          break;
        }
        boot[d].push_back(delta / std::sqrt(w.omega[k]));
      } else {
        boot[d].push_back(delta);
      }
    }
  }
  return assemble(crve_weighting ? Method::t_cr : Method::t, base, scale, boot, valid, boundary);
}

TestResult GradientBootstrap::ar_test(bool crve_weighting) {
  ensure_ar_draws();
  std::vector<double> base, scale;
  for (const auto& c : ctx_) {
    base.push_back(std::abs(c.restricted.theta(0)));
    if (crve_weighting) {
      const double q = c.h_hat * c.omega_null * c.h_hat;
      if (!(q > 1e-14)) throw Error(ErrorCode::singular_crve, "null-imposed CRVE is not positive");
      scale.push_back(1.0 / std::sqrt(q));
    } else {
      scale.push_back(std::sqrt(options_.a3));
    }
  }
  std::vector<std::vector<double>> boot(draws_);
  std::vector<char> valid(draws_, 1);
  for (std::size_t d = 0; d < draws_; ++d) {
    const ArDraw& a = (*ar_)[d];
    if (!a.bounded) {
      valid[d] = 0;
      continue;
    }
    for (std::size_t k = 0; k < ctx_.size(); ++k) boot[d].push_back(std::abs(a.theta[k] - ctx_[k].restricted.theta(0)));
  }
  TestResult res = assemble(crve_weighting ? Method::ar_cr : Method::ar, base, scale, boot, valid, 0);
  if (crve_weighting && clusters_ <= 1)
    res.warnings.push_back("AssumptionViolation: the null-imposed CRVE needs more clusters than instruments");
  return res;
}

TestResult GradientBootstrap::run(Method method) {
  switch (method) {
    case Method::t: return wald_test(false);
    case Method::t_cr: return wald_test(true);
    case Method::ar: return ar_test(false);
    case Method::ar_cr: return ar_test(true);
    default: throw Error(ErrorCode::invalid_argument, "method is not a gradient bootstrap test");
  }
}

TestResult wald_test(const ClusteredDataset& data, const Options& options, const std::vector<double>& beta0,
                     bool crve_weighting) {
  GradientBootstrap gb(data, options, beta0);
  return gb.wald_test(crve_weighting);
}

TestResult ar_test(const ClusteredDataset& data, const Options& options, const std::vector<double>& beta0,
                   bool crve_weighting) {
  GradientBootstrap gb(data, options, beta0);
  return gb.ar_test(crve_weighting);
}

double ConfidenceSet::length() const {
  return step * static_cast<double>(std::count(accepted.begin(), accepted.end(), 1));
}

bool ConfidenceSet::contains(double b) const {
  const double slack = 0.5 * step;
  for (const auto& [lo, hi] : intervals)
    if (b >= lo - slack && b <= hi + slack) return true;
  return false;
}

std::vector<ConfidenceSet> confidence_sets(const ClusteredDataset& data, const Options& options,
                                           const std::vector<Method>& methods, const estimation::ProfileGrid& nulls) {
  if (options.taus.size() != 1) throw Error(ErrorCode::invalid_argument, "confidence sets use one quantile index");
  nulls.validate();
  std::vector<ConfidenceSet> sets(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    sets[m].method = methods[m];
    sets[m].tau = options.taus[0];
    sets[m].alpha = options.alpha;
    sets[m].grid = nulls.points();
    sets[m].step = nulls.step;
    sets[m].accepted.assign(sets[m].grid.size(), 0);
  }
  const std::vector<double> grid = nulls.points();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    GradientBootstrap gb(data, options, {grid[k]});
    for (std::size_t m = 0; m < methods.size(); ++m) sets[m].accepted[k] = gb.run(methods[m]).reject ? 0 : 1;
  }
  for (auto& cs : sets)
    for (std::size_t k = 0; k < cs.grid.size(); ++k) {
      if (!cs.accepted[k]) continue;
      std::size_t e = k;
      while (e + 1 < cs.grid.size() && cs.accepted[e + 1]) ++e;
      cs.intervals.emplace_back(cs.grid[k], cs.grid[e]);
      k = e;
    }
  return sets;
}

ConfidenceSet confidence_set(const ClusteredDataset& data, const Options& options, Method method,
                             const estimation::ProfileGrid& nulls) {
  return confidence_sets(data, options, {method}, nulls).front();
}

}  // namespace ivqr::bootstrap
