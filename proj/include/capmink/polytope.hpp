#pragma once

#include <Eigen/Dense>
#include <vector>

#include "capmink/common.hpp"

namespace capmink {

/// True iff the directions (rows, unit norm) are NOT contained in any
/// closed hemisphere, i.e. no unit v has dir_i . v <= 0 for all i.
/// Decided by linear programming; a total function.
bool validate_spread(const Eigen::MatrixXd& directions);

/// Halfspace description of a polytope: { x : x . dir_i <= offset_i }.
struct HalfspaceSpec {
  Eigen::MatrixXd directions;  ///< m x n, rows unit within 1e-12
  Eigen::VectorXd offsets;     ///< m, nonnegative with at least one positive

  int dim() const { return static_cast<int>(directions.cols()); }
  int count() const { return static_cast<int>(directions.rows()); }

  /// Throws on length mismatch, non-unit rows, duplicate directions
  /// (angular separation <= 1e-9) or negative offsets.
  void validate(bool require_nonnegative = true) const;
};

/// Per-direction facet data. Every spec direction gets a record; slack
/// halfspaces (support < offset) carry area 0.
struct FacetRecord {
  Eigen::VectorXd normal;
  double offset = 0.0;  ///< support value h_P(normal)
  double area = 0.0;    ///< exact (n-1)-volume of the facet, n <= 3
};

struct BuildOptions {
  bool parallel = true;            ///< use the OpenMP enumeration kernel
  bool require_origin = true;      ///< enforce offsets >= 0 (origin in P)
};

/// Bounded intersection of halfspaces with enumerated vertices and exact
/// facet areas. Immutable after construction; safe to share across threads.
class Polytope {
 public:
  static Polytope from_halfspaces(const HalfspaceSpec& spec,
                                  const BuildOptions& opts = {});

  int dim() const { return dim_; }
  const HalfspaceSpec& spec() const { return spec_; }
  const Eigen::MatrixXd& vertices() const { return vertices_; }
  const std::vector<FacetRecord>& facets() const { return facets_; }

  /// max over vertices of u . v; positively homogeneous in u.
  double support(const Eigen::VectorXd& u) const;

  /// Dilate by s > 0 without re-enumeration (exact group law).
  Polytope scaled(double s) const;

  /// Translate by x. Vertices shift, offsets become offset + normal . x;
  /// areas are unchanged. Requires the translated body to keep offsets
  /// nonnegative unless allow_negative.
  Polytope translated(const Eigen::VectorXd& x, bool allow_negative = false) const;

  double volume() const { return volume_; }
  double circumradius() const;
  double inradius() const;  ///< distance from origin to the nearest facet plane
  double diameter() const;  ///< max pairwise vertex distance
  Eigen::VectorXd vertex_centroid() const;
  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const;

  /// Support-sampling gap metadata set by lp_combine, 0 otherwise.
  double approx_gap() const { return approx_gap_; }

  /// Re-check the structural invariants (facet support consistency,
  /// vertex feasibility). Throws on violation. Used by tests and after
  /// deserialization.
  void check_invariants() const;

 private:
  friend Polytope lp_combine(const Polytope&, const Polytope&, double, double,
                             int);
  Polytope() = default;

  int dim_ = 0;
  HalfspaceSpec spec_;
  Eigen::MatrixXd vertices_;
  std::vector<FacetRecord> facets_;
  double volume_ = 0.0;
  double approx_gap_ = 0.0;
};

/// Aleksandrov body of sampled values: intersection of the sampled
/// halfspaces { x . dir_i <= value_i }. Duplicate directions are merged
/// keeping the smallest value.
Polytope wulff_shape(const Eigen::MatrixXd& directions,
                     const Eigen::VectorXd& values);

/// Firey combination K +_p t.L through support sampling on both normal
/// sets plus a refinement grid (default 320 directions in n=3, 256 in
/// n=2; `refinement` overrides the grid size, 0 keeps the default).
Polytope lp_combine(const Polytope& K, const Polytope& L, double p, double t,
                    int refinement = 0);

/// Sampled sup-norm distance between support functions over a
/// quasi-uniform grid (2000 directions in n=3, 720 in n=2) plus both
/// bodies' facet normals. Upper-biased only through sampling density.
double hausdorff_distance(const Polytope& K, const Polytope& L,
                          int samples = 0);

}  // namespace capmink
