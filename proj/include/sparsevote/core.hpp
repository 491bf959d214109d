#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sparsevote {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sorted, duplicate-free list of coordinates in [0, d).
using Support = std::vector<std::uint32_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

inline bool all_finite(const Eigen::Ref<const Vector>& v) {
  return v.allFinite();
}

inline Support support_of(const Eigen::Ref<const Vector>& v) {
  Support s;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) s.push_back(static_cast<std::uint32_t>(i));
  return s;
}

// Columns of X listed in `cols`, in order.
inline Matrix select_columns(const Eigen::Ref<const Matrix>& X, const Support& cols) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = X.col(cols[j]);
  return out;
}

}  // namespace sparsevote
