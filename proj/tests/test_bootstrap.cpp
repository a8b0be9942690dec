#include "ivqr/bootstrap.hpp"
#include "ivqr/dgp.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace ivqr;
using namespace ivqr::bootstrap;

namespace {

Options small_options(double half_width = 1.0, double step = 0.05) {
  Options o;
  o.grid = estimation::ProfileGrid::centered(1.0, half_width, step);
  return o;
}

// Direct per-observation summation of (tau - 1{e <= 0}) (W, phi) V.
Matrix direct_sums(const ClusteredDataset& d, const Vector& phi, double b, const Vector& r, double t, double tau) {
  Matrix s = Matrix::Zero(d.clusters(), d.w.cols() + 1);
  const Vector v = d.weights();
  for (Index i = 0; i < d.n(); ++i) {
    double e = d.y(i) - d.x(i) * b - d.w.row(i).dot(r) - phi(i) * t;
    double psi = (tau - (e <= 0.0 ? 1.0 : 0.0)) * v(i);
    int j = d.cluster[static_cast<std::size_t>(i)];
    for (Index k = 0; k < d.w.cols(); ++k) s(j, k) += psi * d.w(i, k);
    s(j, d.w.cols()) += psi * phi(i);
  }
  return s;
}

}  // namespace

TEST_CASE("critical value order statistic") {
  CHECK(critical_value({1, 2, 3, 4}, 0.5) == 2);
  CHECK(critical_value({5}, 0.1) == 5);
  CHECK(critical_value({5}, 0.9) == 5);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(300);
  for (auto& x : s) x = u(gen);
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  CHECK(critical_value(s, 0.10) == sorted[269]);
  // 2-element enumeration analogue: 4 draws at alpha=0.5 -> 2nd smallest.
  CHECK(critical_value({0.4, 0.1, 0.9, 0.3}, 0.5) == 0.3);
}

TEST_CASE("sign vectors") {
  auto g = sign_vector(3, Mode::enumerate, 0b101, 0);
  CHECK(g == std::vector<signed char>{-1, 1, -1});
  CHECK(sign_vector(4, Mode::enumerate, 0, 0) == std::vector<signed char>(4, 1));
  CHECK(sign_vector(10, Mode::sample, 7, 42) == sign_vector(10, Mode::sample, 7, 42));
  CHECK(resolve_mode(Mode::automatic, 14) == Mode::enumerate);
  CHECK(resolve_mode(Mode::automatic, 15) == Mode::sample);
  CHECK_THROWS_AS(resolve_mode(Mode::enumerate, 21), Error);
  CHECK(draw_count(Mode::enumerate, 9, 300) == 512);
  CHECK(draw_count(Mode::sample, 9, 300) == 300);
}

TEST_CASE("cluster score sums") {
  ClusteredDataset d = fixture::linear_iv(30, 3, 5);
  const Vector phi = d.z.col(0);
  // A huge intercept fixes the residual signs.
  const Vector low = (Vector(2) << -1e6, 0.0).finished();
  const Vector high = (Vector(2) << 1e6, 0.0).finished();
  SUBCASE("all residuals positive") {
    Matrix s = cluster_score_sums(d, phi, 1.0, low, 0.0, 0.3);
    const auto rows = d.cluster_rows();
    for (int j = 0; j < 3; ++j) {
      Vector expect = Vector::Zero(3);
      for (Index i : rows[static_cast<std::size_t>(j)]) expect += 0.3 * Vector((Vector(3) << d.w.row(i).transpose(), phi(i)).finished());
      CHECK((s.row(j).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("all residuals negative") {
    Matrix s = cluster_score_sums(d, phi, 1.0, high, 0.0, 0.3);
    Matrix pos = cluster_score_sums(d, phi, 1.0, low, 0.0, 0.3);
    CHECK((s - pos * (0.3 - 1.0) / 0.3).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("direct summation") {
    d.v = Vector::Constant(30, 0.7);
    Vector rr(2);
    rr << 0.1, 0.4;
    CHECK((cluster_score_sums(d, phi, 0.9, rr, 0.2, 0.6) - direct_sums(d, phi, 0.9, rr, 0.2, 0.6)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("signed shifts are linear in the signs") {
  Matrix sums(3, 2);
  sums << 1, 2, 3, 4, 5, 6;
  std::vector<signed char> g{1, -1, 1}, ng{-1, 1, -1};
  Vector s = signed_shift(sums, g);
  CHECK(s(0) == 3.0);
  CHECK(s(1) == 4.0);
  CHECK((signed_shift(sums, ng) + s).cwiseAbs().maxCoeff() == 0.0);
  // Antisymmetric scores cancel under all +1 signs.
  Matrix anti(2, 2);
  anti << 1, -2, -1, 2;
  CHECK(signed_shift(anti, {1, 1}).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero shift reproduces the profile fit") {
  ClusteredDataset d = fixture::linear_iv(40, 4, 2);
  estimation::Profile p(d, d.z.col(0), 0.5);
  estimation::ProfileFit a = p.fit(1.1);
  estimation::ProfileFit b = p.fit(1.1, Vector::Zero(3));
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shifted fit on a J=2 instance matches the subset oracle") {
  ClusteredDataset d = fixture::linear_iv(12, 2, 33);
  const Vector phi = d.z.col(0);
  estimation::Profile p(d, phi, 0.5);
  estimation::ProfileFit r = p.fit(1.0);
  Matrix sums = cluster_score_sums(d, phi, 1.0, r.gamma, 0.0, 0.5);
  Vector s = signed_shift(sums, {1, -1});
  estimation::ProfileFit f = p.fit(1.0, s);
  REQUIRE(f.status != qr::QrStatus::unbounded);
  Matrix design(12, 3);
  design << d.w, phi;
  const Vector resp = d.y - d.x;
  auto o = oracle::interpolating_subsets(resp, design, Vector::Ones(12), 0.5, s);
  Vector eta(3);
  eta << f.gamma, f.theta;
  CHECK(oracle::qr_objective(resp, design, Vector::Ones(12), 0.5, s, eta) == doctest::Approx(o.objective).epsilon(1e-10));
}

TEST_CASE("CRVE") {
  SUBCASE("zero scores are singular") {
    Vector g(1);
    g << 1.0;
    CHECK_THROWS_AS(crve(Matrix::Zero(3, 2), g, 10), Error);
  }
  SUBCASE("one cluster") {
    Matrix s(1, 2);
    s << 0.5, 3.0;
    Vector g(1);
    g << 1.0;
    CHECK(crve(s, g, 10).omega(0, 0) == doctest::Approx(0.9).epsilon(1e-14));
  }
  SUBCASE("two clusters by hand") {
    Matrix s(2, 2);
    s << 0.0, 1.0, 0.0, -2.0;
    Vector g(1);
    g << 2.0;
    Crve c = crve(s, g, 5);
    CHECK(c.omega(0, 0) == doctest::Approx(1.0).epsilon(1e-14));  // (1 + 4) / 5
    CHECK(c.a_cr == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("G hat") {
  SUBCASE("scalar instrument reduces to the inverse cross moment") {
    ClusteredDataset d = fixture::linear_iv(50, 5, 3);
    const Vector phi = d.z.col(0);
    const double exphi = d.x.dot(phi) / 50.0;
    CHECK(ghat(d, phi, 1.0) == doctest::Approx(1.0 / exphi).epsilon(1e-12));
    CHECK(ghat(d, phi, 3.0) == doctest::Approx(1.0 / exphi).epsilon(1e-12));
  }
  SUBCASE("A1 equal to the instrument second moment") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    Matrix b(3, 3), e(1, 3);
    for (Index i = 0; i < 3; ++i) {
      e(0, i) = nd(gen);
      for (Index j = 0; j < 3; ++j) b(i, j) = nd(gen);
    }
    Matrix epp = b * b.transpose() + Matrix::Identity(3, 3);
    // With A1 = E_PhiPhi: G' = [E E^-1 E']^-1 E E^-1.
    Matrix inv = epp.inverse();
    Matrix expect = (e * inv) / (e * inv * e.transpose())(0, 0);
    CHECK((ghat(e, epp, epp).transpose() - expect).cwiseAbs().maxCoeff() < 1e-10);
    // General A1 against dense arithmetic.
    Matrix a1 = b.transpose() * b + 0.5 * Matrix::Identity(3, 3);
    Matrix right = e * inv * a1 * inv;
    Matrix expect2 = right / (right * e.transpose())(0, 0);
    CHECK((ghat(e, epp, a1).transpose() - expect2).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("zero instrument is singular") {
    ClusteredDataset d = fixture::linear_iv(20, 2, 3);
    CHECK_THROWS_AS(ghat(d, Vector::Zero(20), 1.0), Error);
  }
}

TEST_CASE("bootstrap CRVE algebra") {
  Matrix null_sums(2, 2), fit_sums(2, 2);
  null_sums << 0.1, 1.0, 0.2, -0.5;
  fit_sums << 0.3, 0.2, -0.1, 0.4;
  Vector g1(1);
  g1 << 1.0;
  // Bootstrap parameters equal to the fit: the last two terms cancel.
  Crve same = bootstrap_crve({1, 1}, null_sums, fit_sums, fit_sums, g1, 4);
  CHECK(same.omega(0, 0) == doctest::Approx(crve(null_sums, g1, 4).omega(0, 0)).epsilon(1e-14));
  // Hand arithmetic for g = (1, -1), boot_sums = 0. Instrument column per
  // cluster: g_j null - fit = (1.0 - 0.2, 0.5 - 0.4).
  Crve h = bootstrap_crve({1, -1}, null_sums, Matrix::Zero(2, 2), fit_sums, g1, 4);
  CHECK(h.omega(0, 0) == doctest::Approx((0.64 + 0.01) / 4.0).epsilon(1e-14));
  // -g flips only the null term: (-1.2, -0.9).
  Crve m = bootstrap_crve({-1, 1}, null_sums, Matrix::Zero(2, 2), fit_sums, g1, 4);
  CHECK(m.omega(0, 0) == doctest::Approx((1.44 + 0.81) / 4.0).epsilon(1e-14));
}

TEST_CASE("restricted fit at the estimate reproduces the estimate") {
  ClusteredDataset d = fixture::linear_iv(60, 6, 7);
  Options o = small_options();
  GradientBootstrap probe(d, o, {1.0});
  const double bhat = probe.contexts()[0].fit.beta;
  GradientBootstrap gb(d, o, {bhat});
  const auto& c = gb.contexts()[0];
  CHECK((c.restricted.gamma - c.fit.gamma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bootstrap estimate with zero shift is the estimate") {
  ClusteredDataset d = fixture::linear_iv(60, 4, 8);
  Options o = small_options();
  GradientBootstrap gb(d, o, {1.0});
  const auto& c = gb.contexts()[0];
  estimation::SweepResult s = c.profile->sweep(c.grid, 1.0, Vector::Zero(3));
  CHECK(s.beta == c.fit.beta);
}

TEST_CASE("bootstrap estimate on a 5-point grid agrees with exhaustive evaluation") {
  ClusteredDataset d = fixture::linear_iv(50, 5, 9);
  Options o;
  o.grid = {0.0, 2.0, 0.5};
  GradientBootstrap gb(d, o, {1.0});
  const auto& c = gb.contexts()[0];
  const auto g = sign_vector(5, Mode::enumerate, 0b10110, 0);
  estimation::SweepResult s = gb.bootstrap_beta(0, g);
  const Vector shift = signed_shift(c.null_sums, g);
  std::vector<double> norms;
  for (double b : c.grid) norms.push_back(std::abs(c.profile->fit(b, shift).theta(0)));
  std::size_t k = estimation::profile_argmin(norms, c.grid);
  CHECK(s.beta == c.grid[k]);
}

TEST_CASE("bootstrap estimates centre near the estimate under the null") {
  sim::Dgp1Config cfg;
  cfg.seed = 77;
  ClusteredDataset d = sim::gen_dgp1(cfg);
  Options o;
  o.grid = estimation::ProfileGrid::centered(1.5, 1.0, 0.02);
  GradientBootstrap gb(d, o, {1.5});
  const auto& c = gb.contexts()[0];
  std::vector<double> b;
  for (std::uint64_t k = 0; k < 512; k += 4) b.push_back(gb.bootstrap_beta(0, sign_vector(9, Mode::enumerate, k, 0)).beta);
  std::sort(b.begin(), b.end());
  CHECK(std::abs(b[b.size() / 2] - c.fit.beta) < 0.3);
}

TEST_CASE("AR decision on J=3 matches a hand enumeration") {
  ClusteredDataset d = fixture::linear_iv(45, 3, 10);
  Options o = small_options();
  o.alpha = 0.25;
  GradientBootstrap gb(d, o, {1.3});
  TestResult r = gb.ar_test(false);
  REQUIRE(r.n_sign_vectors == 8);
  const auto& c = gb.contexts()[0];
  const double stat = std::abs(c.restricted.theta(0));
  std::vector<double> boot;
  for (std::uint64_t k = 0; k < 8; ++k) {
    const auto g = sign_vector(3, Mode::enumerate, k, 0);
    const auto f = c.profile->fit(1.3, signed_shift(c.null_sums, g));
    boot.push_back(std::abs(f.theta(0) - c.restricted.theta(0)));
  }
  std::sort(boot.begin(), boot.end());
  const double cv = boot[5];  // ceil(8 * 0.75) = 6th smallest
  CHECK(r.critical_value == doctest::Approx(cv).epsilon(1e-12));
  CHECK(r.reject == (stat > cv));
}

TEST_CASE("single-tau decisions are invariant to the positive weights") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ClusteredDataset d = fixture::linear_iv(60, 6, 100 + seed);
    for (double b0 : {0.6, 1.0, 1.4}) {
      Options o = small_options();
      GradientBootstrap base(d, o, {b0});
      Options o2 = o;
      o2.a2 = 4.0;
      o2.a3 = 0.1;
      o2.ghat_scale = 9.0;
      GradientBootstrap scaled(d, o2, {b0});
      CHECK(base.run(Method::t).reject == scaled.run(Method::t).reject);
      CHECK(base.run(Method::t_cr).reject == scaled.run(Method::t_cr).reject);
      CHECK(base.run(Method::ar).reject == scaled.run(Method::ar).reject);
      CHECK(base.run(Method::ar).reject == base.run(Method::ar_cr).reject);
      CHECK(base.run(Method::ar).p_value == base.run(Method::ar_cr).p_value);
    }
  }
}

TEST_CASE("p-value and critical value agree") {
  ClusteredDataset d = fixture::linear_iv(60, 6, 12);
  for (double b0 : {0.5, 0.9, 1.2, 1.6}) {
    GradientBootstrap gb(d, small_options(), {b0});
    for (Method m : {Method::t, Method::t_cr, Method::ar}) {
      TestResult r = gb.run(m);
      // Enumerate mode: reject iff fewer than N - k + 1 draws reach the statistic.
      const double n = static_cast<double>(r.n_sign_vectors);
      const double k = std::ceil(n * (1.0 - r.alpha) - 1e-9);
      CHECK(r.reject == (r.p_value * n <= n - k));
    }
  }
}

TEST_CASE("cluster relabeling leaves the test unchanged") {
  ClusteredDataset d = fixture::linear_iv(60, 5, 13);
  ClusteredDataset p = d;
  for (auto& c : p.cluster) c = 4 - c;
  GradientBootstrap a(d, small_options(), {1.2});
  GradientBootstrap b(p, small_options(), {1.2});
  for (Method m : {Method::t, Method::t_cr, Method::ar}) {
    TestResult ra = a.run(m), rb = b.run(m);
    CHECK(ra.statistic == doctest::Approx(rb.statistic).epsilon(1e-12));
    CHECK(ra.critical_value == doctest::Approx(rb.critical_value).epsilon(1e-12));
  }
}

TEST_CASE("multi-tau statistics take the sup") {
  ClusteredDataset d = fixture::linear_iv(80, 6, 14);
  Options o = small_options();
  o.taus = {0.4, 0.6};
  TestResult r = wald_test(d, o, {1.0}, false);
  CHECK(r.taus.size() == 2);
  CHECK(r.beta0 == std::vector<double>{1.0, 1.0});
  CHECK(r.n_sign_vectors == 64);
}

TEST_CASE("confidence set on the single point estimate accepts it") {
  ClusteredDataset d = fixture::linear_iv(60, 6, 15);
  Options o = small_options();
  GradientBootstrap gb(d, o, {1.0});
  const double bhat = gb.contexts()[0].fit.beta;
  ConfidenceSet cs = confidence_set(d, o, Method::t, estimation::ProfileGrid::single(bhat));
  REQUIRE(cs.accepted.size() == 1);
  CHECK(cs.accepted[0] == 1);
  CHECK(cs.contains(bhat));
  REQUIRE(cs.intervals.size() == 1);
  CHECK(cs.intervals[0].first == bhat);
}

TEST_CASE("confidence set endpoints lie on the null grid") {
  ClusteredDataset d = fixture::linear_iv(60, 6, 16);
  Options o = small_options();
  estimation::ProfileGrid nulls{0.0, 2.0, 0.1};
  ConfidenceSet cs = confidence_set(d, o, Method::t_cr, nulls);
  const auto pts = nulls.points();
  for (const auto& [lo, hi] : cs.intervals) {
    CHECK(std::find(pts.begin(), pts.end(), lo) != pts.end());
    CHECK(std::find(pts.begin(), pts.end(), hi) != pts.end());
  }
  CHECK(cs.length() == doctest::Approx(0.1 * static_cast<double>(std::count(cs.accepted.begin(), cs.accepted.end(), 1))));
}

TEST_CASE("options validation") {
  Options o;
  o.alpha = 1.5;
  CHECK_THROWS_AS(o.validate(), Error);
  o = Options{};
  o.a2 = 0.0;
  CHECK_THROWS_AS(o.validate(), Error);
  CHECK(parse_method("t-cr") == Method::t_cr);
  CHECK(parse_mode("sample") == Mode::sample);
}
