#pragma once

#include <Eigen/Dense>

namespace capmink::lp {

enum class Status { Optimal, Unbounded, Infeasible, IterationLimit };

struct Result {
  Status status = Status::Optimal;
  double objective = 0.0;
  Eigen::VectorXd x;
};

/// Maximize c.dot(x) subject to A x <= b, x >= 0.
///
/// Dense tableau simplex with Bland's rule as anti-cycling fallback.
/// Requires b >= 0 (the slack basis is then feasible); all LPs in this
/// project are posed that way. Sizes are small (tens of variables, at
/// most a few thousand rows), so no factorization machinery is needed.
Result maximize(const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                const Eigen::VectorXd& b, int max_iters = 20000);

}  // namespace capmink::lp
