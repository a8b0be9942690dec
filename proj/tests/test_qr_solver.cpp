#include "ivqr/qr_solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace ivqr;
using namespace ivqr::qr;

namespace {

QrProblem intercept_only(std::vector<double> ys, double tau) {
  QrProblem p;
  p.responses = Eigen::Map<Vector>(ys.data(), static_cast<Index>(ys.size()));
  p.design = Matrix::Ones(p.responses.size(), 1);
  p.weights = Vector::Ones(p.responses.size());
  p.tau = tau;
  return p;
}

QrProblem random_problem(std::mt19937_64& rng, Index n, Index p, bool with_shift) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.2, 2.0);
  QrProblem pr;
  pr.design = Matrix(n, p);
  pr.design.col(0).setOnes();
  for (Index j = 1; j < p; ++j)
    for (Index i = 0; i < n; ++i) pr.design(i, j) = nd(rng);
  pr.responses = Vector(n);
  for (Index i = 0; i < n; ++i) pr.responses(i) = pr.design.row(i).sum() + nd(rng);
  pr.weights = Vector(n);
  for (Index i = 0; i < n; ++i) pr.weights(i) = ud(rng);
  pr.tau = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
  pr.shift = Vector::Zero(p);
  if (with_shift)
    for (Index j = 0; j < p; ++j) pr.shift(j) = 0.3 * nd(rng);
  return pr;
}

}  // namespace

TEST_CASE("rho_tau examples") {
  CHECK(rho_tau(0.0, 0.5) == 0.0);
  CHECK(rho_tau(2.0, 0.25) == doctest::Approx(0.5));
  CHECK(rho_tau(-2.0, 0.25) == doctest::Approx(1.5));
}

TEST_CASE("intercept-only quantiles") {
  auto med = intercept_only({1, 2, 3}, 0.5);
  QrSolution s = solve(med);
  CHECK(s.status == QrStatus::optimal);
  CHECK(s.coefficients(0) == doctest::Approx(2.0));
  CHECK(verify_optimality(med, s, 1e-7));

  auto q25 = intercept_only({1, 2, 3}, 0.25);
  QrSolution s25 = solve(q25);
  CHECK(s25.coefficients(0) == doctest::Approx(1.0));
  CHECK(s25.objective == doctest::Approx(0.75));
}

TEST_CASE("verify_optimality rejects an improvable point") {
  auto med = intercept_only({1, 2, 3}, 0.5);
  QrSolution s = solve(med);
  s.coefficients(0) = 1.0;
  CHECK_FALSE(verify_optimality(med, s, 1e-7));
}

TEST_CASE("even sample median tie returns lexicographically smallest vertex") {
  auto med = intercept_only({4, 1, 3, 2}, 0.5);
  QrSolution s = solve(med);
  CHECK(s.status == QrStatus::degenerate_tie);
  CHECK(s.coefficients(0) == doctest::Approx(2.0));
  CHECK(verify_optimality(med, s, 1e-7));
}

TEST_CASE("random shifted instances match the interpolating-subset oracle") {
  std::mt19937_64 rng(20240611);
  for (int rep = 0; rep < 100; ++rep) {
    Index p = 1 + rep % 3;
    Index n = p + 2 + rep % 7;
    QrProblem pr = random_problem(rng, n, p, rep % 2 == 0);
    auto ref = oracle::interpolating_subsets(pr.responses, pr.design, pr.weights, pr.tau, pr.shift);
    QrSolution s = solve(pr);
    REQUIRE(s.bounded());
    CHECK(s.objective == doctest::Approx(ref.objective).epsilon(1e-10));
    CHECK(objective_value(pr, s.coefficients) <= ref.objective + 1e-8);
    CHECK(verify_optimality(pr, s, 1e-7));
    Vector recon = pr.responses - pr.design * s.coefficients;
    CHECK((recon - (s.positive_part - s.negative_part)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s.positive_part.cwiseProduct(s.negative_part).maxCoeff() <= 1e-9);
  }
}

TEST_CASE("large shift makes the problem unbounded") {
  auto pr = intercept_only({1, 2, 3}, 0.5);
  pr.shift = Vector::Constant(1, 5.0);
  QrSolution s = solve(pr);
  CHECK(s.status == QrStatus::unbounded);
}

TEST_CASE("rank deficient design throws") {
  QrProblem pr;
  pr.design = Matrix::Ones(5, 2);
  pr.responses = Vector::LinSpaced(5, 0, 4);
  pr.weights = Vector::Ones(5);
  CHECK_THROWS_AS(solve(pr), Error);
  try {
    solve(pr);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::rank_deficient);
  }
}

TEST_CASE("weight rescaling leaves coefficients unchanged") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    QrProblem pr = random_problem(rng, 30, 3, false);
    QrSolution a = solve(pr);
    pr.weights *= 3.7;
    QrSolution b = solve(pr);
    CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("adding a constant shifts the intercept") {
  std::mt19937_64 rng(11);
  QrProblem pr = random_problem(rng, 40, 3, false);
  QrSolution a = solve(pr);
  pr.responses.array() += 2.5;
  QrSolution b = solve(pr);
  CHECK(b.coefficients(0) == doctest::Approx(a.coefficients(0) + 2.5));
  CHECK(b.coefficients(1) == doctest::Approx(a.coefficients(1)));
}

TEST_CASE("warm start reproduces the cold solution") {
  std::mt19937_64 rng(3);
  QrProblem pr = random_problem(rng, 200, 4, false);
  QrKernel kernel(pr.design, pr.weights, pr.tau);
  QrSolution cold = kernel.solve(pr.responses);
  Vector y2 = pr.responses + 0.05 * pr.design.col(1);
  QrSolution warm = kernel.solve(y2, Vector(), cold.basis);
  QrSolution cold2 = kernel.solve(y2);
  CHECK((warm.coefficients - cold2.coefficients).cwiseAbs().maxCoeff() < 1e-10);
}
