#include "ivqr/estimator.hpp"

#include <cmath>
#include <limits>

namespace ivqr::estimation {

void ProfileGrid::validate() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !std::isfinite(step))
    throw Error(ErrorCode::invalid_argument, "grid bounds must be finite");
  if (upper < lower) throw Error(ErrorCode::invalid_argument, "grid upper bound below lower bound");
  if (!(step > 0.0)) throw Error(ErrorCode::invalid_argument, "grid step must be positive");
  if ((upper - lower) / step > 1e7) throw Error(ErrorCode::invalid_argument, "grid has too many points");
}

std::vector<double> ProfileGrid::points() const {
  validate();
  const auto count = static_cast<std::size_t>(std::floor((upper - lower) / step + 1e-9)) + 1;
  std::vector<double> pts(count);
  for (std::size_t k = 0; k < count; ++k) pts[k] = lower + static_cast<double>(k) * step;
  return pts;
}

std::size_t profile_argmin(const std::vector<double>& values, const std::vector<double>& grid) {
  if (values.empty() || values.size() != grid.size())
    throw Error(ErrorCode::invalid_argument, "profile values and grid differ in length");
  double best = std::numeric_limits<double>::infinity();
  for (double v : values) best = std::min(best, v);
  const double tol = 1e-10 * std::max(1.0, std::abs(best));
  const double mid = 0.5 * (grid.front() + grid.back());
  std::size_t pick = values.size();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] <= best + tol)) continue;
    // Grid is ascending, so on equal distance the earlier index is lower.
    if (pick == values.size() || std::abs(grid[k] - mid) < std::abs(grid[pick] - mid)) pick = k;
  }
  return pick;
}

Profile::Profile(const ClusteredDataset& data, const Vector& phi, double tau)
    : data_(data),
      phi_(phi),
      kernel_(
          [&] {
            if (phi.size() != data.n()) throw Error(ErrorCode::invalid_argument, "instrument length mismatch");
            Matrix d(data.n(), data.w.cols() + 1);
            d << data.w, phi;
            return d;
          }(),
          data.weights(), tau) {}

ProfileFit Profile::fit(double b, const Vector& shift, std::span<const Index> warm) const {
  qr::QrSolution sol = kernel_.solve(data_.y - b * data_.x, shift, warm);
  ProfileFit out;
  out.status = sol.status;
  out.basis = std::move(sol.basis);
  if (sol.bounded()) {
    out.gamma = sol.coefficients.head(dw());
    out.theta = sol.coefficients.tail(1);
  }
  return out;
}

SweepResult Profile::sweep(const std::vector<double>& grid, double a1, const Vector& shift,
                           std::span<const Index> warm) const {
  SweepResult res;
  res.norms.resize(grid.size());
  std::vector<ProfileFit> fits(grid.size());
  std::vector<Index> basis(warm.begin(), warm.end());
  const double root = std::sqrt(a1);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    fits[k] = fit(grid[k], shift, basis);
    if (fits[k].status == qr::QrStatus::unbounded) {
      res.bounded = false;
      return res;
    }
    basis = fits[k].basis;
    res.norms[k] = root * std::abs(fits[k].theta(0));
  }
  res.argmin = profile_argmin(res.norms, grid);
  res.beta = grid[res.argmin];
  res.gamma = std::move(fits[res.argmin].gamma);
  res.theta = std::move(fits[res.argmin].theta);
  res.boundary = grid.size() > 1 && (res.argmin == 0 || res.argmin + 1 == grid.size());
  return res;
}

ProfileFit profile_fit(const ClusteredDataset& data, const instruments::InstrumentSet& inst, double b) {
  Profile profile(data, inst.values, inst.tau);
  return profile.fit(b);
}

TauFit estimate_tau(const ClusteredDataset& data, const instruments::InstrumentSet& inst, const ProfileGrid& grid,
                    double a1) {
  if (!(a1 > 0.0)) throw Error(ErrorCode::invalid_argument, "A1 must be positive definite");
  TauFit out;
  out.tau = inst.tau;
  out.a1 = a1;
  out.grid = grid.points();
  if (out.grid.size() == 1) out.warnings.push_back("GridDegenerate: single-point grid");
  Profile profile(data, inst.values, inst.tau);
  SweepResult s = profile.sweep(out.grid, a1);
  if (!s.bounded) throw Error(ErrorCode::unbounded, "profile quantile regression is unbounded");
  out.beta = s.beta;
  out.gamma = std::move(s.gamma);
  out.theta = std::move(s.theta);
  out.profile_norms = std::move(s.norms);
  out.boundary = s.boundary;
  if (out.boundary) out.warnings.push_back("estimate lies on the grid boundary");
  return out;
}

IvqrFit estimate(const ClusteredDataset& data, const std::vector<instruments::InstrumentSet>& inst,
                 const ProfileGrid& grid, double a1) {
  IvqrFit fit;
  for (const auto& set : inst) fit.taus.push_back(estimate_tau(data, set, grid, a1));
  return fit;
}

}  // namespace ivqr::estimation
