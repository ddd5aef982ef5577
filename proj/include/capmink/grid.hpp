#pragma once

#include <cstdint>
#include <vector>

#include "capmink/common.hpp"
#include "capmink/polytope.hpp"

namespace capmink {

enum class BoundaryMode { Zero, Asymptotic };

/// Truncated-lattice discretization parameters for the p-Dirichlet solve.
struct GridConfig {
  int n = 3;                 ///< dimension, 2 or 3
  double h = 0.1;            ///< lattice spacing
  double box_radius = 6.0;   ///< truncation half-width R (>= 4x circumradius)
  int max_iters = 6000;      ///< sweep budget per solve
  double energy_tol = 1e-6;  ///< relative energy decrease stop threshold
  BoundaryMode boundary_mode = BoundaryMode::Asymptotic;
  int threads = 0;           ///< 0 = OpenMP default, 1 = serial reference path

  void validate() const;     ///< h > 0, R/h <= 400, max_iters >= 1, tol > 0
};

/// Lattice point classification.
enum class PointClass : std::uint8_t {
  Free = 0,      ///< unconstrained unknown
  Interior = 1,  ///< inside K with margin >= h/2, pinned to 1
  Outer = 2,     ///< outermost layer, pinned to the boundary profile
};

/// Sampled equilibrium potential on the lattice [-R, R]^n.
/// values/mask are flat arrays with index ((i*npts)+j)*npts+k in n=3
/// (i slowest) and i*npts+j in n=2.
struct GridField {
  int n = 0;
  int npts = 0;
  double h = 0.0;
  double radius = 0.0;  ///< snapped to an even multiple of h
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  std::size_t size() const { return values.size(); }
  double coord(int i) const { return -radius + i * h; }
  std::size_t index(int i, int j, int k = 0) const {
    return n == 3 ? (static_cast<std::size_t>(i) * npts + j) * npts + k
                  : static_cast<std::size_t>(i) * npts + j;
  }
};

/// Snap the box to an even number of cells per half-axis so that the 2h
/// lattice covers exactly the same box.
GridField make_lattice(const GridConfig& cfg);

/// Classify lattice points against the halfspaces: margin >= h/2 is
/// interior, the outermost layer is the truncation boundary. Throws
/// DomainTooSmall when the body has no resolved interior point or
/// touches the outer layer.
void rasterize(GridField& field, const Eigen::MatrixXd& directions,
               const Eigen::VectorXd& offsets);

/// Trilinear prolongation from a coarser field over the same box.
void prolong(const GridField& coarse, GridField& fine);

/// NoConvergence carrying the last iterate, per the engine contract.
class GridNoConvergence : public Error {
 public:
  GridNoConvergence(const std::string& what, GridField last)
      : Error(ErrorCode::NoConvergence, what), field(std::move(last)) {}
  GridField field;
};

}  // namespace capmink
