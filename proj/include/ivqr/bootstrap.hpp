#pragma once

#include "ivqr/dataset.hpp"
#include "ivqr/estimator.hpp"
#include "ivqr/instruments.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ivqr::bootstrap {

enum class Mode { automatic, enumerate, sample };
enum class Method { t, t_cr, ar, ar_cr, t_std, im, crs };

std::string_view to_string(Mode mode);
std::string_view to_string(Method method);
Method parse_method(std::string_view text);
Mode parse_mode(std::string_view text);

struct TestResult {
  Method method = Method::t;
  std::vector<double> taus;
  std::vector<double> beta0;
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  double alpha = 0.10;
  bool reject = false;
  std::size_t n_sign_vectors = 0;  // draws entering the order statistic
  Mode mode = Mode::enumerate;
  std::size_t excluded_draws = 0;
  std::size_t boundary_hits = 0;
  Warnings warnings;
};

struct Options {
  std::vector<double> taus{0.5};
  double alpha = 0.10;
  Mode mode = Mode::automatic;
  std::size_t draws = 300;  // sample mode only
  std::uint64_t seed = 0;
  estimation::ProfileGrid grid;
  instruments::Recipe recipe;
  double a1 = 1.0;
  double a2 = 1.0;
  double a3 = 1.0;
  double ghat_scale = 1.0;

  void validate() const;
};

// Per-cluster sums of (tau - 1{y - X b - W r - Phi t <= 0}) Psi V with
// Psi = (W, Phi); returns J x (d_w + 1).
Matrix cluster_score_sums(const ClusteredDataset& data, const Vector& phi, double b, const Vector& r, double t,
                          double tau);

// S = sum_j g_j sums_j.
Vector signed_shift(const Matrix& sums, const std::vector<signed char>& g);

// The ceil(N (1 - alpha))-th order statistic, 1-indexed ascending.
double critical_value(std::vector<double> stats, double alpha);

// Sign vector for draw `index`: in enumerate mode bit j of the index set means
// g_j = -1 (index 0 is all +1); in sample mode signs come from a per-draw
// counter-based stream.
std::vector<signed char> sign_vector(int clusters, Mode mode, std::uint64_t index, std::uint64_t seed);

Mode resolve_mode(Mode mode, int clusters);
std::size_t draw_count(Mode mode, int clusters, std::size_t draws);

// Omega(tau, tau') = (1/n) sum_j omega s_j s'_j' omega^T for instrument blocks
// of the score sums (the trailing d_phi columns).
Matrix crve_omega(const Matrix& sums, const Matrix& sums_other, Index n, Index d_phi);

struct Crve {
  Matrix omega;
  double a_cr = 0.0;
};

// Throws Error(singular_crve) when G' Omega G <= 1e-14.
Crve crve(const Matrix& sums, const Vector& ghat, Index n);

// G' = [E_XPhi E^-1 A1 E^-1 E_XPhi']^-1 [E_XPhi E^-1 A1 E^-1]; returns G.
Vector ghat(const Matrix& e_x_phi, const Matrix& e_phi_phi, const Matrix& a1);
// Scalar-instrument version from data; throws Error(singular_moment).
double ghat(const ClusteredDataset& data, const Vector& phi, double a1);

// Bootstrap CRVE from per-cluster sums at the null, at the bootstrap
// estimate and at the full-sample estimate.
Crve bootstrap_crve(const std::vector<signed char>& g, const Matrix& null_sums, const Matrix& boot_sums,
                    const Matrix& fit_sums, const Vector& ghat, Index n);

// Everything that depends on one quantile index and its null value.
struct TauContext {
  double tau = 0.5;
  double beta0 = 0.0;
  instruments::InstrumentSet inst;
  std::unique_ptr<estimation::Profile> profile;
  std::vector<double> grid;
  estimation::TauFit fit;       // beta_hat, gamma_hat, theta_hat
  estimation::ProfileFit restricted;  // gamma^r, theta(beta0)
  Matrix null_sums;   // scores at (beta0, gamma^r, 0)
  Matrix fit_sums;    // scores at (beta_hat, gamma_hat, 0)
  double ghat = 0.0;
  double omega_hat = 0.0;    // instrument block of Omega at the fit
  double omega_null = 0.0;   // null-imposed Omega
  double h_hat = 0.0;        // P_n Phi^2 V
};

// Gradient wild bootstrap for one dataset and one null. Bootstrap draws are
// computed on first use and shared between T and T_CR (and AR and AR_CR).
class GradientBootstrap {
 public:
  GradientBootstrap(const ClusteredDataset& data, Options options, std::vector<double> beta0);
  ~GradientBootstrap();

  TestResult wald_test(bool crve_weighting);
  TestResult ar_test(bool crve_weighting);
  TestResult run(Method method);

  const std::vector<TauContext>& contexts() const { return ctx_; }
  const Options& options() const { return options_; }
  int clusters() const { return clusters_; }

  // Bootstrap search at draw g for one quantile context.
  estimation::SweepResult bootstrap_beta(std::size_t tau_index, const std::vector<signed char>& g) const;

 private:
  struct WaldDraw {
    bool bounded = true;
    bool boundary = false;
    std::vector<double> beta;   // per tau
    std::vector<double> omega;  // bootstrap Omega (instrument block) per tau
  };
  struct ArDraw {
    bool bounded = true;
    std::vector<double> theta;
  };
  void ensure_wald_draws();
  void ensure_ar_draws();
  TestResult assemble(Method method, const std::vector<double>& base, const std::vector<double>& scale,
                      const std::vector<std::vector<double>>& boot_base, const std::vector<char>& valid,
                      std::size_t boundary_hits);

  const ClusteredDataset& data_;
  Options options_;
  std::vector<TauContext> ctx_;
  int clusters_ = 0;
  Mode mode_ = Mode::enumerate;
  std::size_t draws_ = 0;
  std::optional<std::vector<WaldDraw>> wald_;
  std::optional<std::vector<ArDraw>> ar_;
};

TestResult wald_test(const ClusteredDataset& data, const Options& options, const std::vector<double>& beta0,
                     bool crve_weighting);
TestResult ar_test(const ClusteredDataset& data, const Options& options, const std::vector<double>& beta0,
                   bool crve_weighting);

struct ConfidenceSet {
  Method method = Method::t_cr;
  double tau = 0.5;
  double alpha = 0.10;
  std::vector<double> grid;
  std::vector<char> accepted;
  std::vector<std::pair<double, double>> intervals;  // consecutive accepted grid points
  double step = 0.0;
  bool empty() const { return intervals.empty(); }
  // Accepted grid points times the grid step.
  double length() const;
  bool contains(double b) const;
};

// Runs the test for every grid point as the null; options.taus must hold a
// single quantile index.
ConfidenceSet confidence_set(const ClusteredDataset& data, const Options& options, Method method,
                             const estimation::ProfileGrid& nulls);
// Several methods on the same nulls; each null's bootstrap draws are shared.
std::vector<ConfidenceSet> confidence_sets(const ClusteredDataset& data, const Options& options,
                                           const std::vector<Method>& methods, const estimation::ProfileGrid& nulls);

}  // namespace ivqr::bootstrap
