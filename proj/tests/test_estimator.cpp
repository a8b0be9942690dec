#include "ivqr/dgp.hpp"
#include "ivqr/estimator.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace ivqr;
using namespace ivqr::estimation;
using ivqr::instruments::InstrumentSet;

namespace {

// Dataset whose structural error is independent of X, so theta(b0) ~ 0.
ClusteredDataset exogenous(Index n, std::uint64_t seed, double b0, const Vector& g0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  ClusteredDataset d;
  d.y.resize(n);
  d.x.resize(n);
  d.w.resize(n, 2);
  d.z.resize(n, 1);
  d.cluster.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    d.w(i, 0) = 1.0;
    d.w(i, 1) = nd(gen);
    d.z(i, 0) = nd(gen);
    d.x(i) = d.z(i, 0) + 0.3 * nd(gen);
    d.y(i) = b0 * d.x(i) + d.w.row(i).dot(g0) + nd(gen);
    d.cluster[static_cast<std::size_t>(i)] = static_cast<int>(i % 4);
  }
  return d;
}

}  // namespace

TEST_CASE("grid points are generated from the index") {
  ProfileGrid g{-3.0, 1.0, 0.01};
  const auto pts = g.points();
  CHECK(pts.size() == 401);
  CHECK(pts.back() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pts[250] == -3.0 + 250 * 0.01);
  CHECK(ProfileGrid::single(2.5).points() == std::vector<double>{2.5});
  CHECK_THROWS_AS((ProfileGrid{1.0, 0.0, 0.1}.validate()), Error);
  CHECK_THROWS_AS((ProfileGrid{0.0, 1.0, 0.0}.validate()), Error);
}

TEST_CASE("profile argmin ties go to the midpoint, then the lower point") {
  const std::vector<double> grid{0.0, 1.0, 2.0, 3.0, 4.0};
  CHECK(profile_argmin({3, 1, 1, 1, 3}, grid) == 2);
  CHECK(profile_argmin({1, 1, 5, 5, 5}, grid) == 1);
  CHECK(profile_argmin({5, 1, 5, 1, 5}, grid) == 1);
  CHECK(profile_argmin({5, 4, 3, 2, 1}, grid) == 4);
}

TEST_CASE("profile fit at the truth gives theta near zero and gamma near the truth") {
  Vector g0(2);
  g0 << 0.5, -1.0;
  ClusteredDataset d = exogenous(2000, 3, 1.5, g0);
  Profile p(d, d.z.col(0), 0.5);
  ProfileFit f = p.fit(1.5);
  CHECK(std::abs(f.theta(0)) < 0.05);
  CHECK((f.gamma - g0).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("a zero instrument column is rank deficient") {
  ClusteredDataset d = fixture::linear_iv(20, 2, 1);
  CHECK_THROWS_AS(Profile(d, Vector::Zero(20), 0.5), Error);
  try {
    Profile(d, Vector::Zero(20), 0.5);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::rank_deficient);
  }
}

TEST_CASE("profile fit on an n=9 instance matches the interpolating-subset oracle") {
  ClusteredDataset d = fixture::linear_iv(9, 3, 40);
  const Vector phi = d.z.col(0);
  for (double tau : {0.3, 0.5, 0.7}) {
    Profile p(d, phi, tau);
    ProfileFit f = p.fit(0.8);
    Matrix design(9, 3);
    design << d.w, phi;
    const Vector resp = d.y - 0.8 * d.x;
    const auto o = oracle::interpolating_subsets(resp, design, Vector::Ones(9), tau, Vector());
    Vector eta(3);
    eta << f.gamma, f.theta;
    CHECK(oracle::qr_objective(resp, design, Vector::Ones(9), tau, Vector(), eta) ==
          doctest::Approx(o.objective).epsilon(1e-10));
  }
}

TEST_CASE("single-point grid returns the point and warns") {
  ClusteredDataset d = fixture::linear_iv(50, 5, 2);
  InstrumentSet inst = instruments::build_parametric(d, instruments::Recipe{instruments::Method::parametric});
  TauFit f = estimate_tau(d, inst, ProfileGrid::single(0.7));
  CHECK(f.beta == 0.7);
  REQUIRE_FALSE(f.warnings.empty());
  CHECK(f.warnings[0].find("GridDegenerate") == 0);
}

TEST_CASE("strong design estimates centre on the true median coefficient") {
  double sum = 0.0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    sim::Dgp1Config c;
    c.seed = static_cast<std::uint64_t>(1000 + s);
    ClusteredDataset d = sim::gen_dgp1(c);
    InstrumentSet inst = instruments::build(d, instruments::Recipe{}, 0.5, 1.5);
    sum += estimate_tau(d, inst, ProfileGrid{0.5, 2.5, 0.01}).beta;
  }
  CHECK(std::abs(sum / seeds - 1.5) < 0.3);
}

TEST_CASE("coarse grid argmin agrees with exhaustive evaluation") {
  ClusteredDataset d = fixture::linear_iv(40, 4, 6);
  InstrumentSet inst = instruments::build_parametric(d, instruments::Recipe{instruments::Method::parametric});
  ProfileGrid g{0.0, 2.0, 0.5};
  TauFit f = estimate_tau(d, inst, g);
  const auto pts = g.points();
  REQUIRE(pts.size() == 5);
  std::vector<double> norms;
  for (double b : pts) norms.push_back(std::abs(profile_fit(d, inst, b).theta(0)));
  for (std::size_t k = 0; k < 5; ++k) CHECK(f.profile_norms[k] == doctest::Approx(norms[k]).epsilon(1e-12));
  const std::size_t k = static_cast<std::size_t>(std::min_element(norms.begin(), norms.end()) - norms.begin());
  CHECK(f.beta == pts[k]);
  CHECK(*std::min_element(f.profile_norms.begin(), f.profile_norms.end()) ==
        doctest::Approx(f.profile_norms[k]).epsilon(1e-12));
}

TEST_CASE("A1 scaling does not move the estimate and refinement never raises the minimum") {
  ClusteredDataset d = fixture::linear_iv(120, 6, 8);
  InstrumentSet inst = instruments::build(d, instruments::Recipe{}, 0.5, 1.0);
  ProfileGrid coarse{0.0, 2.0, 0.04}, fine{0.0, 2.0, 0.02};
  TauFit a = estimate_tau(d, inst, coarse, 1.0);
  TauFit b = estimate_tau(d, inst, coarse, 7.5);
  CHECK(a.beta == b.beta);
  TauFit c = estimate_tau(d, inst, fine, 1.0);
  const double min_coarse = *std::min_element(a.profile_norms.begin(), a.profile_norms.end());
  const double min_fine = *std::min_element(c.profile_norms.begin(), c.profile_norms.end());
  CHECK(min_fine <= min_coarse + 1e-12);
}

TEST_CASE("estimate covers every quantile index") {
  ClusteredDataset d = fixture::linear_iv(100, 4, 9);
  std::vector<InstrumentSet> sets;
  for (double t : {0.25, 0.5, 0.75}) sets.push_back(instruments::build(d, instruments::Recipe{}, t, 1.0));
  IvqrFit f = estimate(d, sets, ProfileGrid{-1.0, 3.0, 0.05});
  REQUIRE(f.taus.size() == 3);
  for (const auto& t : f.taus) CHECK(std::abs(t.beta - 1.0) < 0.6);
}
