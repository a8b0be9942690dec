#include "ivqr/dataset.hpp"

#include <algorithm>

namespace ivqr {

int ClusteredDataset::clusters() const {
  int j = 0;
  for (int c : cluster) j = std::max(j, c + 1);
  return j;
}

std::vector<std::vector<Index>> ClusteredDataset::cluster_rows() const {
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(clusters()));
  for (Index i = 0; i < n(); ++i) rows[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])].push_back(i);
  return rows;
}

void ClusteredDataset::validate() const {
  const Index rows = n();
  if (rows == 0) throw Error(ErrorCode::invalid_argument, "dataset is empty");
  if (x.size() != rows || w.rows() != rows || z.rows() != rows ||
      static_cast<Index>(cluster.size()) != rows || (v.size() != 0 && v.size() != rows))
    throw Error(ErrorCode::invalid_argument, "dataset columns have unequal lengths");
  if (!y.allFinite() || !x.allFinite() || !w.allFinite() || !z.allFinite() || !v.allFinite())
    throw Error(ErrorCode::non_finite, "dataset contains non-finite values");
  if (v.size() && (v.array() < 0.0).any()) throw Error(ErrorCode::invalid_argument, "weights must be nonnegative");
  std::vector<char> seen(static_cast<std::size_t>(clusters()), 0);
  for (int c : cluster) {
    if (c < 0) throw Error(ErrorCode::invalid_argument, "negative cluster label");
    seen[static_cast<std::size_t>(c)] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw Error(ErrorCode::invalid_argument, "cluster labels are not contiguous");
}

ClusteredDataset ClusteredDataset::subset(const std::vector<Index>& rows) const {
  ClusteredDataset out;
  const Index m = static_cast<Index>(rows.size());
  out.y.resize(m);
  out.x.resize(m);
  out.w.resize(m, w.cols());
  out.z.resize(m, z.cols());
  if (v.size()) out.v.resize(m);
  std::vector<int> remap(static_cast<std::size_t>(clusters()), -1);
  int next = 0;
  for (Index k = 0; k < m; ++k) {
    Index i = rows[static_cast<std::size_t>(k)];
    out.y(k) = y(i);
    out.x(k) = x(i);
    out.w.row(k) = w.row(i);
    out.z.row(k) = z.row(i);
    if (v.size()) out.v(k) = v(i);
    int& label = remap[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])];
    if (label < 0) label = next++;
    out.cluster.push_back(label);
  }
  return out;
}

}  // namespace ivqr
