#pragma once

#include "ivqr/dataset.hpp"
#include "ivqr/instruments.hpp"
#include "ivqr/qr_solver.hpp"

#include <span>
#include <vector>

namespace ivqr::estimation {

struct ProfileGrid {
  double lower = -3.0;
  double upper = 1.0;
  double step = 0.01;

  static ProfileGrid single(double b) { return {b, b, 1.0}; }
  static ProfileGrid centered(double center, double half_width, double step) {
    return {center - half_width, center + half_width, step};
  }
  void validate() const;
  // lower + k * step for k = 0..K, K = floor((upper - lower) / step), computed
  // from the index to avoid drift.
  std::vector<double> points() const;
};

struct ProfileFit {
  Vector gamma;
  Vector theta;
  qr::QrStatus status = qr::QrStatus::optimal;
  std::vector<Index> basis;
};

struct SweepResult {
  bool bounded = true;
  std::size_t argmin = 0;
  double beta = 0.0;
  Vector gamma;
  Vector theta;
  std::vector<double> norms;  // per grid point
  bool boundary = false;      // argmin at either end of a multi-point grid
};

// Index of the smallest value; values within a relative 1e-10 of the minimum
// tie, and ties go to the point closest to the grid midpoint, then the lower.
std::size_t profile_argmin(const std::vector<double>& values, const std::vector<double>& grid);

// Weighted QR of y - X b on [W, Phi] for a fixed instrument column.
class Profile {
 public:
  Profile(const ClusteredDataset& data, const Vector& phi, double tau);

  ProfileFit fit(double b, const Vector& shift = Vector(), std::span<const Index> warm = {}) const;

  // Grid search of the norm ||theta(b)||_{a1}. With a nonzero shift this is
  // the bootstrap search; an unbounded LP makes the whole sweep unbounded.
  SweepResult sweep(const std::vector<double>& grid, double a1, const Vector& shift = Vector(),
                    std::span<const Index> warm = {}) const;

  const ClusteredDataset& data() const { return data_; }
  const Vector& phi() const { return phi_; }
  const Matrix& design() const { return kernel_.design(); }
  double tau() const { return kernel_.tau(); }
  Index dw() const { return data_.w.cols(); }

 private:
  const ClusteredDataset& data_;
  Vector phi_;
  qr::QrKernel kernel_;
};

struct TauFit {
  double tau = 0.5;
  double beta = 0.0;
  Vector gamma;
  Vector theta;
  std::vector<double> grid;
  std::vector<double> profile_norms;
  double a1 = 1.0;
  bool boundary = false;
  Warnings warnings;
};

struct IvqrFit {
  std::vector<TauFit> taus;
};

ProfileFit profile_fit(const ClusteredDataset& data, const instruments::InstrumentSet& inst, double b);

TauFit estimate_tau(const ClusteredDataset& data, const instruments::InstrumentSet& inst, const ProfileGrid& grid,
                    double a1 = 1.0);

IvqrFit estimate(const ClusteredDataset& data, const std::vector<instruments::InstrumentSet>& inst,
                 const ProfileGrid& grid, double a1 = 1.0);

}  // namespace ivqr::estimation
