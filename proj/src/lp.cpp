#include "capmink/lp.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "capmink/common.hpp"

namespace capmink::lp {

namespace {
constexpr double kEps = 1e-11;
}

Result maximize(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                const Eigen::VectorXd& b, int max_iters) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(A.rows());
  if (A.cols() != n || b.size() != m)
    throw Error(ErrorCode::InvalidArgument, "LP dimension mismatch");
  if (m > 0 && b.minCoeff() < -kEps)
    throw Error(ErrorCode::InvalidArgument,
                "simplex requires b >= 0 (slack start)");

  // Tableau: m rows of [A | I | b], objective row holds reduced costs.
  Eigen::MatrixXd T(m + 1, n + m + 1);
  T.setZero();
  T.block(0, 0, m, n) = A;
  T.block(0, n, m, m).setIdentity();
  T.col(n + m).head(m) = b.cwiseMax(0.0);
  T.row(m).head(n) = -c.transpose();

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  bool bland = false;
  int degenerate_streak = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    // Entering column: most negative reduced cost (Dantzig), or first
    // negative once Bland's rule is engaged.
    int col = -1;
    double best = -kEps;
    for (int j = 0; j < n + m; ++j) {
      const double rc = T(m, j);
      if (rc < -kEps) {
        if (bland) {
          col = j;
          break;
        }
        if (rc < best) {
          best = rc;
          col = j;
        }
      }
    }
    if (col < 0) {
      Result res;
      res.status = Status::Optimal;
      res.objective = T(m, n + m);
      res.x = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < m; ++i)
        if (basis[i] < n) res.x[basis[i]] = T(i, n + m);
      return res;
    }

    // Ratio test.
    int row = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = T(i, col);
      if (a > kEps) {
        const double ratio = T(i, n + m) / a;
        if (ratio < best_ratio - kEps ||
            (ratio < best_ratio + kEps && (row < 0 || basis[i] < basis[row]))) {
          best_ratio = ratio;
          row = i;
        }
      }
    }
    if (row < 0) {
      Result res;
      res.status = Status::Unbounded;
      res.x = Eigen::VectorXd::Zero(n);
      return res;
    }

    if (best_ratio < kEps) {
      if (++degenerate_streak > 2 * (n + m)) bland = true;
    } else {
      degenerate_streak = 0;
    }

    // Pivot.
    T.row(row) /= T(row, col);
    for (int i = 0; i <= m; ++i) {
      if (i == row) continue;
      const double f = T(i, col);
      if (f != 0.0) T.row(i) -= f * T.row(row);
    }
    basis[row] = col;
  }

  Result res;
  res.status = Status::IterationLimit;
  res.x = Eigen::VectorXd::Zero(n);
  return res;
}

}  // namespace capmink::lp
