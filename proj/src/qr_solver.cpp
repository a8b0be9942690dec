#include "ivqr/qr_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <functional>
#include <set>

namespace ivqr::qr {

namespace {

constexpr double kRankTol = 1e-10;
constexpr double kFeasTol = 1e-9;
constexpr int kDegenerateBeforeBland = 50;
constexpr std::size_t kMaxFaceStates = 1000;

// Simplex state: p basic rows plus the tracked side of every nonbasic row.
// side = +1 means the row is (or is treated as) above the fit, so its dual
// sits at the upper bound tau V_i; side = -1 is the lower bound.
struct State {
  std::vector<Index> basis;
  std::vector<signed char> side;
};

struct Vertex {
  Eigen::PartialPivLU<Matrix> lu;
  Vector eta;
  Vector residuals;
  Vector dual_basic;
};

class Simplex {
 public:
  Simplex(const Matrix& x, const Vector& v, double tau, const Vector& y, const Vector& s)
      : x_(x), v_(v), tau_(tau), y_(y), s_(s), n_(x.rows()), p_(x.cols()) {
    double yscale = 1.0;
    for (Index i = 0; i < n_; ++i) yscale = std::max(yscale, std::abs(y_(i)));
    zero_tol_ = kFeasTol * yscale;
    double vmax = v_.maxCoeff();
    dual_tol_ = 1e-11 * std::max(vmax, 1e-300) * static_cast<double>(std::max<Index>(n_, 1));
  }

  bool basis_invertible(const std::vector<Index>& basis) const {
    if (static_cast<Index>(basis.size()) != p_) return false;
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    for (Index b : basis) {
      if (b < 0 || b >= n_ || seen[static_cast<std::size_t>(b)]) return false;
      seen[static_cast<std::size_t>(b)] = 1;
    }
    Matrix xb(p_, p_);
    for (Index k = 0; k < p_; ++k) xb.row(k) = x_.row(basis[static_cast<std::size_t>(k)]);
    Eigen::JacobiSVD<Matrix> svd(xb);
    const auto& sv = svd.singularValues();
    return sv(p_ - 1) > 1e-10 * sv(0);
  }

  std::vector<Index> cold_basis() const {
    Vector eta = x_.colPivHouseholderQr().solve(y_);
    Vector r = (y_ - x_ * eta).cwiseAbs();
    std::vector<Index> order(static_cast<std::size_t>(n_));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      bool pa = v_(a) > 0, pb = v_(b) > 0;
      if (pa != pb) return pa;
      return r(a) < r(b);
    });
    // Greedy independent rows by Gram-Schmidt.
    std::vector<Index> basis;
    Matrix q(p_, p_);
    Index filled = 0;
    for (Index i : order) {
      Vector row = x_.row(i).transpose();
      double norm0 = row.norm();
      if (norm0 == 0.0) continue;
      for (Index k = 0; k < filled; ++k) row -= q.col(k).dot(row) * q.col(k);
      for (Index k = 0; k < filled; ++k) row -= q.col(k).dot(row) * q.col(k);
      double nr = row.norm();
      if (nr > 1e-8 * norm0) {
        q.col(filled++) = row / nr;
        basis.push_back(i);
        if (filled == p_) break;
      }
    }
    return basis;
  }

  Vertex evaluate(State& state) const {
    Matrix xb(p_, p_);
    Vector yb(p_);
    for (Index k = 0; k < p_; ++k) {
      Index b = state.basis[static_cast<std::size_t>(k)];
      xb.row(k) = x_.row(b);
      yb(k) = y_(b);
    }
    Vertex vx{Eigen::PartialPivLU<Matrix>(xb), Vector(), Vector(), Vector()};
    vx.eta = vx.lu.solve(yb);
    vx.residuals.noalias() = y_ - x_ * vx.eta;
    for (Index b : state.basis) vx.residuals(b) = 0.0;
    Vector q(n_);
    for (Index i = 0; i < n_; ++i) {
      double r = vx.residuals(i);
      auto& sd = state.side[static_cast<std::size_t>(i)];
      if (r > zero_tol_) sd = 1;
      else if (r < -zero_tol_) sd = -1;
      q(i) = v_(i) * (sd > 0 ? tau_ : tau_ - 1.0);
    }
    for (Index b : state.basis) q(b) = 0.0;
    Vector rhs = -s_;
    rhs.noalias() -= x_.transpose() * q;
    vx.dual_basic = vx.lu.transpose().solve(rhs);
    return vx;
  }

  double lower(Index i) const { return -(1.0 - tau_) * v_(i); }
  double upper(Index i) const { return tau_ * v_(i); }

  struct Step {
    bool unbounded = false;
    Index entering = -1;
    double length = 0.0;
    std::vector<Index> flipped;
  };

  // Long-step ratio test along direction sign * X_B^{-1} e_k, starting from
  // objective slope `slope0` (negative for an improving move).
  Step ratio_test(const State& state, const Vertex& vx, Index k, int sign, double slope0) const {
    Vector ek = Vector::Zero(p_);
    ek(k) = static_cast<double>(sign);
    Vector delta = vx.lu.solve(ek);
    Vector a = x_ * delta;
    double ascale = 0.0;
    for (Index i = 0; i < n_; ++i) ascale = std::max(ascale, std::abs(a(i)));
    const double atol = 1e-12 * std::max(ascale, 1.0);

    for (Index b : state.basis) a(b) = 0.0;

    struct Break {
      double t;
      Index row;
      double weight;
    };
    std::vector<Break> breaks;
    breaks.reserve(static_cast<std::size_t>(n_));
    for (Index i = 0; i < n_; ++i) {
      double ai = a(i);
      if (std::abs(ai) <= atol) continue;
      signed char sd = state.side[static_cast<std::size_t>(i)];
      double r = vx.residuals(i);
      if (sd > 0 && ai > 0) breaks.push_back({std::max(r, 0.0) / ai, i, v_(i) * ai});
      else if (sd < 0 && ai < 0) breaks.push_back({std::max(-r, 0.0) / -ai, i, -v_(i) * ai});
    }
    Step step;
    if (slope0 >= 0.0) {
      // Zero-slope edge: the first breakpoint ends the walk.
      if (breaks.empty()) {
        step.unbounded = true;
        return step;
      }
      auto first = std::min_element(breaks.begin(), breaks.end(), [](const Break& l, const Break& r) {
        return l.t != r.t ? l.t < r.t : l.row < r.row;
      });
      step.entering = first->row;
      step.length = first->t;
      return step;
    }
    // Min-heap by (t, row); the walk usually stops after a few breakpoints.
    auto later = [](const Break& l, const Break& r) {
      if (l.t != r.t) return l.t > r.t;
      return l.row > r.row;
    };
    std::make_heap(breaks.begin(), breaks.end(), later);

    double slope = slope0;
    auto end = breaks.end();
    while (end != breaks.begin()) {
      std::pop_heap(breaks.begin(), end, later);
      --end;
      const Break& br = *end;
      slope += br.weight;
      if (slope >= 0.0) {
        step.entering = br.row;
        step.length = br.t;
        return step;
      }
      step.flipped.push_back(br.row);
    }
    step.unbounded = true;
    return step;
  }

  void apply(State& state, Index k, int sign, const Step& step) const {
    for (Index f : step.flipped) {
      auto& sd = state.side[static_cast<std::size_t>(f)];
      sd = static_cast<signed char>(-sd);
    }
    Index leaving = state.basis[static_cast<std::size_t>(k)];
    // Moving +delta pushes the leaving row below the fit.
    state.side[static_cast<std::size_t>(leaving)] = static_cast<signed char>(sign > 0 ? -1 : 1);
    state.basis[static_cast<std::size_t>(k)] = step.entering;
  }

  // Returns false on unboundedness; otherwise `last` holds the optimal vertex.
  bool run(State& state, int& iterations, Vertex& last) const {
    int degenerate = 0;
    const int max_iter = static_cast<int>(50 * (n_ + p_) + 1000);
    for (; iterations < max_iter; ++iterations) {
      Vertex vx = evaluate(state);
      bool bland = degenerate >= kDegenerateBeforeBland;
      Index k = -1;
      double worst = dual_tol_;
      int sign = 0;
      for (Index j = 0; j < p_; ++j) {
        Index row = state.basis[static_cast<std::size_t>(j)];
        double d = vx.dual_basic(j);
        double lo = lower(row) - d, hi = d - upper(row);
        double viol = std::max(lo, hi);
        if (viol <= dual_tol_) continue;
        if (bland) {
          if (k < 0 || row < state.basis[static_cast<std::size_t>(k)]) {
            k = j;
            worst = viol;
            sign = lo > hi ? 1 : -1;
          }
        } else if (viol > worst) {
          k = j;
          worst = viol;
          sign = lo > hi ? 1 : -1;
        }
      }
      if (k < 0) {
        last = std::move(vx);
        return true;
      }
      Step step = ratio_test(state, vx, k, sign, -worst);
      if (step.unbounded) return false;
      apply(state, k, sign, step);
      degenerate = step.length <= 0.0 ? degenerate + 1 : 0;
    }
    throw Error(ErrorCode::iteration_limit, "quantile regression simplex did not converge");
  }

  // Zero-slope edges leaving the optimal vertex of `state`.
  std::vector<std::pair<Index, int>> flat_edges(const Vertex& vx, const State& state) const {
    std::vector<std::pair<Index, int>> edges;
    const double tie = 1e-9 * std::max(v_.maxCoeff(), 1e-300);
    for (Index j = 0; j < p_; ++j) {
      Index row = state.basis[static_cast<std::size_t>(j)];
      double d = vx.dual_basic(j);
      if (d - lower(row) <= tie) edges.emplace_back(j, 1);
      if (upper(row) - d <= tie) edges.emplace_back(j, -1);
    }
    return edges;
  }

  double objective(const Vertex& vx) const {
    double f = -s_.dot(vx.eta);
    for (Index i = 0; i < n_; ++i) f += v_(i) * rho_tau(vx.residuals(i), tau_);
    return f;
  }

  // Walks the optimal face through zero-slope pivots and returns the state whose
  // vertex is lexicographically smallest. `tied` reports whether more than one
  // distinct optimal vertex was seen.
  void lex_smallest(State& s0, Vertex& v0, bool& tied) const {
    tied = false;
    if (flat_edges(v0, s0).empty()) return;
    const double f0 = objective(v0);
    const double ftol = 1e-10 * std::max(1.0, std::abs(f0));
    const double eta_tol = 1e-9 * std::max(1.0, v0.eta.cwiseAbs().maxCoeff());

    auto lex_less = [&](const Vector& a, const Vector& b) {
      for (Index j = 0; j < p_; ++j) {
        if (a(j) < b(j) - eta_tol) return true;
        if (a(j) > b(j) + eta_tol) return false;
      }
      return false;
    };

    std::set<std::vector<Index>> seen;
    auto key = [](std::vector<Index> b) {
      std::sort(b.begin(), b.end());
      return b;
    };
    std::vector<State> queue{s0};
    seen.insert(key(s0.basis));
    State best = s0;
    Vertex best_vx = v0;
    for (std::size_t head = 0; head < queue.size() && seen.size() < kMaxFaceStates; ++head) {
      State cur = queue[head];
      Vertex vx = evaluate(cur);
      for (auto [j, sign] : flat_edges(vx, cur)) {
        Step step = ratio_test(cur, vx, j, sign, 0.0);
        if (step.unbounded) continue;
        State next = cur;
        apply(next, j, sign, step);
        // The entering row has a nonzero pivot, so the new basis is invertible.
        if (!seen.insert(key(next.basis)).second) continue;
        Vertex nv = evaluate(next);
        if (objective(nv) > f0 + ftol) continue;
        if ((nv.eta - v0.eta).cwiseAbs().maxCoeff() > eta_tol) tied = true;
        if (lex_less(nv.eta, best_vx.eta)) {
          best = next;
          best_vx = nv;
        }
        queue.push_back(std::move(next));
      }
    }
    s0 = std::move(best);
    v0 = std::move(best_vx);
  }

  State initial_state(std::span<const Index> warm) const {
    State state;
    state.side.assign(static_cast<std::size_t>(n_), -1);
    std::vector<Index> w(warm.begin(), warm.end());
    if (basis_invertible(w)) state.basis = std::move(w);
    else state.basis = cold_basis();
    return state;
  }

  Index p() const { return p_; }
  Index n() const { return n_; }

 private:
  const Matrix& x_;
  const Vector& v_;
  double tau_;
  const Vector& y_;
  const Vector& s_;
  Index n_, p_;
  double zero_tol_ = 0.0;
  double dual_tol_ = 0.0;
};

void validate_design(const Matrix& x, const Vector& v, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::invalid_argument, "tau must lie in (0,1)");
  const Index n = x.rows(), p = x.cols();
  if (p < 1 || n < p) throw Error(ErrorCode::invalid_argument, "need n >= p >= 1");
  if (v.size() != n) throw Error(ErrorCode::invalid_argument, "weights length must equal rows");
  if (!x.allFinite() || !v.allFinite()) throw Error(ErrorCode::non_finite, "design or weights not finite");
  Index positive = 0;
  for (Index i = 0; i < n; ++i) {
    if (v(i) < 0.0) throw Error(ErrorCode::invalid_argument, "weights must be nonnegative");
    if (v(i) > 0.0) ++positive;
  }
  if (positive < p) throw Error(ErrorCode::invalid_argument, "fewer positive weights than columns");
  Matrix xp(positive, p);
  for (Index i = 0, r = 0; i < n; ++i)
    if (v(i) > 0.0) xp.row(r++) = x.row(i);
  Eigen::HouseholderQR<Matrix> qr(xp);
  Matrix rr = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> svd(rr);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(p - 1) <= kRankTol * sv(0))
    throw Error(ErrorCode::rank_deficient, "design does not have full column rank");
}

}  // namespace

std::string_view to_string(QrStatus status) {
  switch (status) {
    case QrStatus::optimal: return "optimal";
    case QrStatus::unbounded: return "unbounded";
    case QrStatus::degenerate_tie: return "degenerate-tie";
  }
  return "unknown";
}

double rho_tau(double u, double tau) { return u * (tau - (u <= 0.0 ? 1.0 : 0.0)); }

double objective_value(const QrProblem& problem, const Vector& coefficients) {
  Vector r = problem.responses - problem.design * coefficients;
  double f = 0.0;
  for (Index i = 0; i < r.size(); ++i) f += problem.weights(i) * rho_tau(r(i), problem.tau);
  if (problem.shift.size() > 0) f -= problem.shift.dot(coefficients);
  return f;
}

QrKernel::QrKernel(Matrix design, Vector weights, double tau)
    : design_(std::move(design)), weights_(std::move(weights)), tau_(tau) {
  validate_design(design_, weights_, tau_);
  weight_scale_ = weights_.maxCoeff();
}

QrSolution QrKernel::solve(const Vector& responses, const Vector& shift,
                           std::span<const Index> warm_basis) const {
  const Index n = rows(), p = cols();
  if (responses.size() != n) throw Error(ErrorCode::invalid_argument, "responses length must equal rows");
  if (shift.size() != 0 && shift.size() != p)
    throw Error(ErrorCode::invalid_argument, "shift length must equal columns");
  if (!responses.allFinite() || !shift.allFinite())
    throw Error(ErrorCode::non_finite, "responses or shift not finite");
  const Vector s = shift.size() == 0 ? Vector::Zero(p) : shift;

  Simplex simplex(design_, weights_, tau_, responses, s);
  State state = simplex.initial_state(warm_basis);
  QrSolution out;
  if (static_cast<Index>(state.basis.size()) != p)
    throw Error(ErrorCode::rank_deficient, "no invertible basis found");
  Vertex vx;
  if (!simplex.run(state, out.iterations, vx)) {
    out.status = QrStatus::unbounded;
    out.objective = -std::numeric_limits<double>::infinity();
    out.basis = state.basis;
    return out;
  }
  bool tied = false;
  simplex.lex_smallest(state, vx, tied);
  out.status = tied ? QrStatus::degenerate_tie : QrStatus::optimal;
  out.coefficients = vx.eta;
  out.positive_part = vx.residuals.cwiseMax(0.0);
  out.negative_part = (-vx.residuals).cwiseMax(0.0);
  out.objective = simplex.objective(vx);
  out.basis = state.basis;
  return out;
}

QrSolution solve(const QrProblem& problem) {
  if (problem.design.rows() != problem.responses.size())
    throw Error(ErrorCode::invalid_argument, "responses length must equal design rows");
  QrKernel kernel(problem.design, problem.weights, problem.tau);
  return kernel.solve(problem.responses, problem.shift);
}

namespace {

// Directional derivative of the objective at eta along direction w, given the
// residual split into nonzero (accumulated in g) and zero rows.
double directional(const Vector& g, const Matrix& xz, const Vector& vz, double tau, const Vector& w) {
  double d = g.dot(w);
  Vector a = xz * w;
  for (Index i = 0; i < a.size(); ++i) d += vz(i) * rho_tau(-a(i), tau);
  return d;
}

void for_each_subset(Index n, Index k, std::size_t cap, const std::function<bool(const std::vector<Index>&)>& f) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::size_t count = 0;
  while (true) {
    if (!f(idx) || ++count >= cap) return;
    Index i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace

bool verify_optimality(const QrProblem& problem, const QrSolution& solution, double tol) {
  if (!solution.bounded() || solution.coefficients.size() != problem.design.cols()) return false;
  const Matrix& x = problem.design;
  const Index n = x.rows(), p = x.cols();
  const double tau = problem.tau;
  const Vector& eta = solution.coefficients;
  Vector r = problem.responses - x * eta;
  double yscale = std::max(1.0, problem.responses.cwiseAbs().maxCoeff());
  const double ztol = 1e-7 * yscale;

  Vector g = problem.shift.size() > 0 ? Vector(-problem.shift) : Vector(Vector::Zero(p));
  std::vector<Index> zero;
  for (Index i = 0; i < n; ++i) {
    if (problem.weights(i) == 0.0) continue;
    if (std::abs(r(i)) <= ztol) {
      zero.push_back(i);
      continue;
    }
    double psi = r(i) > 0 ? tau : tau - 1.0;
    g.noalias() -= (problem.weights(i) * psi) * x.row(i).transpose();
  }
  const Index nz = static_cast<Index>(zero.size());
  Matrix xz(nz, p);
  Vector vz(nz);
  for (Index k = 0; k < nz; ++k) {
    xz.row(k) = x.row(zero[static_cast<std::size_t>(k)]);
    vz(k) = problem.weights(zero[static_cast<std::size_t>(k)]);
  }
  const double scale = std::max(1.0, problem.weights.sum() * x.cwiseAbs().maxCoeff());
  const double dtol = tol * scale;

  auto check = [&](const Vector& w) {
    Vector u = w / w.norm();
    return directional(g, xz, vz, tau, u) >= -dtol && directional(g, xz, vz, tau, -u) >= -dtol;
  };
  for (Index j = 0; j < p; ++j)
    if (!check(Vector::Unit(p, j))) return false;

  // The directional derivative is positively homogeneous and linear on each
  // cone cut out by the hyperplanes X_i'w = 0, i in the zero set. It is
  // nonnegative everywhere iff it is nonnegative on the lineality space and on
  // every extreme ray of the arrangement; those rays are null vectors of
  // (rank - 1)-row subsets of the zero rows, restricted to the row space.
  Index rank = 0;
  Matrix row_basis;  // orthonormal basis of the row space of xz
  if (nz > 0) {
    Eigen::JacobiSVD<Matrix> svd(xz, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    for (Index j = 0; j < sv.size(); ++j)
      if (sv(j) > 1e-10 * std::max(sv(0), 1e-300)) ++rank;
    row_basis = svd.matrixV().leftCols(rank);
    Matrix null_basis = svd.matrixV().rightCols(p - rank);
    for (Index j = 0; j < null_basis.cols(); ++j)
      if (std::abs(g.dot(null_basis.col(j))) > dtol) return false;
  } else {
    return g.cwiseAbs().maxCoeff() <= dtol;
  }
  if (rank == 0) return true;
  if (rank == 1) return check(row_basis.col(0));

  bool ok = true;
  for_each_subset(nz, rank - 1, 200000, [&](const std::vector<Index>& sub) {
    Matrix a(rank - 1, rank);
    for (Index k = 0; k < rank - 1; ++k) a.row(k) = xz.row(sub[static_cast<std::size_t>(k)]) * row_basis;
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // Need exactly a one-dimensional null space inside the row space.
    if (sv(rank - 2) <= 1e-10 * std::max(sv(0), 1e-300)) return true;
    Vector w = row_basis * svd.matrixV().col(rank - 1);
    if (!check(w)) {
      ok = false;
      return false;
    }
    return true;
  });
  return ok;
}

}  // namespace ivqr::qr
