#pragma once

#include <Eigen/Dense>

namespace capmink {

/// Unit direction sets on S^{n-1}, rows of the returned matrix.
/// These back Wulff-shape sampling grids, Hausdorff-distance sampling
/// and the polytopal ball fixtures.

/// n=2: `count` equally spaced unit vectors.
Eigen::MatrixXd circle_directions(int count);

/// n=3: quasi-uniform spiral sample, `count` points.
Eigen::MatrixXd fibonacci_sphere(int count);

/// Face normals of the icosahedron subdivided `level` times and projected
/// to the sphere: 20 * 4^level distinct directions (level 2 gives 320).
Eigen::MatrixXd icosphere_face_normals(int level);

/// Offsets of the corresponding face planes for the inscribed polytope
/// whose vertices lie on the unit sphere (the hull of the subdivided
/// icosahedron vertices). Same row order as icosphere_face_normals.
Eigen::VectorXd icosphere_face_offsets(int level);

/// Vertices of the subdivided icosahedron on the unit sphere.
Eigen::MatrixXd icosphere_vertices(int level);

/// Quasi-uniform sample of S^{n-1} with sensible defaults per dimension.
Eigen::MatrixXd sphere_sample(int n, int count);

}  // namespace capmink
