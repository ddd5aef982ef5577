#include "capmink/directions.hpp"

#include <cmath>
#include <map>
#include <vector>

#include "capmink/common.hpp"

namespace capmink {

Eigen::MatrixXd circle_directions(int count) {
  Eigen::MatrixXd dirs(count, 2);
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * M_PI * i / count;
    dirs(i, 0) = std::cos(a);
    dirs(i, 1) = std::sin(a);
  }
  return dirs;
}

Eigen::MatrixXd fibonacci_sphere(int count) {
  Eigen::MatrixXd dirs(count, 3);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = 2.0 * M_PI * i / golden;
    dirs(i, 0) = r * std::cos(a);
    dirs(i, 1) = r * std::sin(a);
    dirs(i, 2) = z;
  }
  return dirs;
}

namespace {

struct IcoMesh {
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<int, 3>> faces;
};

IcoMesh base_icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  IcoMesh mesh;
  const double xs[12][3] = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& x : xs)
    mesh.verts.push_back(Eigen::Vector3d(x[0], x[1], x[2]).normalized());
  mesh.faces = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10},
                {0, 10, 11}, {1, 5, 9},   {5, 11, 4},  {11, 10, 2},
                {10, 7, 6},  {7, 1, 8},   {3, 9, 4},   {3, 4, 2},
                {3, 2, 6},   {3, 6, 8},   {3, 8, 9},   {4, 9, 5},
                {2, 4, 11},  {6, 2, 10},  {8, 6, 7},   {9, 8, 1}};
  return mesh;
}

IcoMesh subdivide(const IcoMesh& in) {
  IcoMesh out;
  out.verts = in.verts;
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    Eigen::Vector3d v = (out.verts[a] + out.verts[b]).normalized();
    out.verts.push_back(v);
    int idx = static_cast<int>(out.verts.size()) - 1;
    midpoint[key] = idx;
    return idx;
  };
  for (const auto& f : in.faces) {
    int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
    out.faces.push_back({f[0], ab, ca});
    out.faces.push_back({f[1], bc, ab});
    out.faces.push_back({f[2], ca, bc});
    out.faces.push_back({ab, bc, ca});
  }
  return out;
}

IcoMesh icosphere(int level) {
  IcoMesh mesh = base_icosahedron();
  for (int i = 0; i < level; ++i) mesh = subdivide(mesh);
  return mesh;
}

}  // namespace

Eigen::MatrixXd icosphere_face_normals(int level) {
  IcoMesh mesh = icosphere(level);
  Eigen::MatrixXd normals(mesh.faces.size(), 3);
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    Eigen::Vector3d a = mesh.verts[f[0]], b = mesh.verts[f[1]],
                    c = mesh.verts[f[2]];
    Eigen::Vector3d nrm = (b - a).cross(c - a);
    if (nrm.dot(a + b + c) < 0) nrm = -nrm;
    normals.row(i) = nrm.normalized();
  }
  return normals;
}

Eigen::VectorXd icosphere_face_offsets(int level) {
  IcoMesh mesh = icosphere(level);
  Eigen::VectorXd offsets(mesh.faces.size());
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    Eigen::Vector3d a = mesh.verts[f[0]], b = mesh.verts[f[1]],
                    c = mesh.verts[f[2]];
    Eigen::Vector3d nrm = (b - a).cross(c - a);
    if (nrm.dot(a + b + c) < 0) nrm = -nrm;
    offsets[i] = nrm.normalized().dot(a);
  }
  return offsets;
}

Eigen::MatrixXd icosphere_vertices(int level) {
  IcoMesh mesh = icosphere(level);
  Eigen::MatrixXd verts(mesh.verts.size(), 3);
  for (size_t i = 0; i < mesh.verts.size(); ++i) verts.row(i) = mesh.verts[i];
  return verts;
}

Eigen::MatrixXd sphere_sample(int n, int count) {
  if (n == 2) return circle_directions(count);
  if (n == 3) return fibonacci_sphere(count);
  throw Error(ErrorCode::UnsupportedDimension,
              "direction sampling supports n in {2,3}");
}

}  // namespace capmink
