#include "capmink/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "capmink/directions.hpp"
#include "capmink/lp.hpp"

namespace capmink {

namespace {

constexpr double kDirTol = 1e-9;       // angular separation threshold
constexpr double kUnitTol = 1e-12;     // direction norm tolerance
constexpr double kSpreadTol = 1e-9;

double offset_scale(const Eigen::VectorXd& offsets) {
  return std::max(1.0, offsets.cwiseAbs().maxCoeff());
}

// max of w . v over the cone {v : dirs v >= 0, |v|_inf <= 1}; positive
// optimum means the cone is nontrivial along w.
double cone_extent(const Eigen::MatrixXd& dirs, const Eigen::VectorXd& w) {
  const int m = static_cast<int>(dirs.rows());
  const int n = static_cast<int>(dirs.cols());
  // Variables v = vp - vm, vp/vm >= 0. Rows: -dirs (vp - vm) <= 0 and
  // box bounds vp_d <= 1, vm_d <= 1. All rhs >= 0, slack start feasible.
  Eigen::MatrixXd A(m + 2 * n, 2 * n);
  Eigen::VectorXd b(m + 2 * n);
  A.setZero();
  A.block(0, 0, m, n) = -dirs;
  A.block(0, n, m, n) = dirs;
  b.head(m).setZero();
  for (int d = 0; d < 2 * n; ++d) {
    A(m + d, d) = 1.0;
    b(m + d) = 1.0;
  }
  Eigen::VectorXd c(2 * n);
  c.head(n) = w;
  c.tail(n) = -w;
  auto res = lp::maximize(c, A, b);
  if (res.status != lp::Status::Optimal)
    throw Error(ErrorCode::InvalidArgument, "spread LP did not converge");
  return res.objective;
}

}  // namespace

bool validate_spread(const Eigen::MatrixXd& directions) {
  const int m = static_cast<int>(directions.rows());
  const int n = static_cast<int>(directions.cols());
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "no directions");
  if (m < n + 1) return false;
  // The recession cone {v : dir_i . v <= 0 for all i} is nontrivial iff
  // the cone {dir_i . v >= 0} is (swap v -> -v). Probe it along +-e_d.
  for (int d = 0; d < n; ++d) {
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      w[d] = sign;
      if (cone_extent(directions, w) > kSpreadTol) return false;
    }
  }
  return true;
}

void HalfspaceSpec::validate(bool require_nonnegative) const {
  const int m = count();
  const int n = dim();
  if (offsets.size() != m)
    throw Error(ErrorCode::InvalidArgument, "directions/offsets length mismatch");
  if (n != 2 && n != 3)
    throw Error(ErrorCode::UnsupportedDimension,
                "exact facet geometry supports n in {2,3}");
  if (m < n + 1)
    throw Error(ErrorCode::InvalidArgument, "need at least n+1 halfspaces");
  for (int i = 0; i < m; ++i) {
    if (std::abs(directions.row(i).norm() - 1.0) > 1e2 * kUnitTol)
      throw Error(ErrorCode::InvalidArgument,
                  "direction " + std::to_string(i) + " is not unit norm");
  }
  if (require_nonnegative) {
    if (offsets.minCoeff() < 0.0)
      throw Error(ErrorCode::InvalidArgument, "negative offset");
    if (offsets.maxCoeff() <= 0.0)
      throw Error(ErrorCode::InvalidArgument, "all offsets zero");
  }
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      // distinctness in angle; 1 - dot ~ angle^2/2
      if (1.0 - directions.row(i).dot(directions.row(j)) < kDirTol * kDirTol / 2)
        throw Error(ErrorCode::InvalidArgument,
                    "duplicate directions " + std::to_string(i) + "," +
                        std::to_string(j));
    }
  }
}

namespace {

// Candidate vertices from all n-subsets of constraint planes, keeping
// points feasible for every halfspace. O(m^n) with early rejection; m
// stays small enough (<= ~320) that this beats a hull dependency.
std::vector<Eigen::VectorXd> enumerate_vertices(const HalfspaceSpec& spec,
                                                bool parallel) {
  const int m = spec.count();
  const int n = spec.dim();
  const double scale = offset_scale(spec.offsets);
  const double feas_tol = 1e-9 * scale;
  const double det_tol = 1e-10;

  const Eigen::MatrixXd& D = spec.directions;
  const Eigen::VectorXd& y = spec.offsets;

  auto feasible = [&](const double* x) {
    for (int k = 0; k < m; ++k) {
      double dot = 0;
      for (int d = 0; d < n; ++d) dot += D(k, d) * x[d];
      if (dot > y[k] + feas_tol) return false;
    }
    return true;
  };

  std::vector<Eigen::VectorXd> found;

  if (n == 2) {
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        const double det = D(i, 0) * D(j, 1) - D(i, 1) * D(j, 0);
        if (std::abs(det) < det_tol) continue;
        double x[2] = {(y[i] * D(j, 1) - y[j] * D(i, 1)) / det,
                       (D(i, 0) * y[j] - D(j, 0) * y[i]) / det};
        if (feasible(x)) found.push_back(Eigen::Vector2d(x[0], x[1]));
      }
    }
    return found;
  }

  // n == 3: parallel over the leading index, thread-local buckets.
  const int max_threads =
#ifdef _OPENMP
      parallel ? omp_get_max_threads() : 1;
#else
      1;
  (void)parallel;
#endif
  std::vector<std::vector<Eigen::VectorXd>> buckets(max_threads);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4) num_threads(max_threads) \
    if (parallel && m > 32)
#endif
  for (int i = 0; i < m; ++i) {
#ifdef _OPENMP
    auto& bucket = buckets[omp_get_thread_num()];
#else
    auto& bucket = buckets[0];
#endif
    for (int j = i + 1; j < m; ++j) {
      for (int k = j + 1; k < m; ++k) {
        // Cramer solve of the 3x3 system D_{i,j,k} x = y_{i,j,k}.
        const double a0 = D(i, 0), a1 = D(i, 1), a2 = D(i, 2);
        const double b0 = D(j, 0), b1 = D(j, 1), b2 = D(j, 2);
        const double c0 = D(k, 0), c1 = D(k, 1), c2 = D(k, 2);
        const double det = a0 * (b1 * c2 - b2 * c1) -
                           a1 * (b0 * c2 - b2 * c0) +
                           a2 * (b0 * c1 - b1 * c0);
        if (std::abs(det) < det_tol) continue;
        const double r0 = y[i], r1 = y[j], r2 = y[k];
        double x[3];
        x[0] = (r0 * (b1 * c2 - b2 * c1) - a1 * (r1 * c2 - b2 * r2) +
                a2 * (r1 * c1 - b1 * r2)) / det;
        x[1] = (a0 * (r1 * c2 - b2 * r2) - r0 * (b0 * c2 - b2 * c0) +
                a2 * (b0 * r2 - r1 * c0)) / det;
        x[2] = (a0 * (b1 * r2 - r1 * c1) - a1 * (b0 * r2 - r1 * c0) +
                r0 * (b0 * c1 - b1 * c0)) / det;
        if (feasible(x)) bucket.push_back(Eigen::Vector3d(x[0], x[1], x[2]));
      }
    }
  }
  for (auto& bucket : buckets)
    found.insert(found.end(), bucket.begin(), bucket.end());
  return found;
}

std::vector<Eigen::VectorXd> dedupe_points(std::vector<Eigen::VectorXd> pts,
                                           double tol) {
  // Lexicographic sort then merge; points within tol of a kept point are
  // dropped (clusters are tiny, so the local backward scan is cheap).
  std::sort(pts.begin(), pts.end(),
            [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
              for (int d = 0; d < a.size(); ++d) {
                if (a[d] < b[d] - 1e-15) return true;
                if (a[d] > b[d] + 1e-15) return false;
              }
              return false;
            });
  std::vector<Eigen::VectorXd> kept;
  for (const auto& p : pts) {
    bool dup = false;
    for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
      if ((*it - p).lpNorm<Eigen::Infinity>() <= tol) {
        dup = true;
        break;
      }
      if (p[0] - (*it)[0] > tol) break;  // sorted: no earlier point can match
    }
    if (!dup) kept.push_back(p);
  }
  return kept;
}

}  // namespace

Polytope Polytope::from_halfspaces(const HalfspaceSpec& spec,
                                   const BuildOptions& opts) {
  spec.validate(opts.require_origin);
  const int m = spec.count();
  const int n = spec.dim();
  const double scale = offset_scale(spec.offsets);

  if (!validate_spread(spec.directions))
    throw Error(ErrorCode::UnboundedBody,
                "directions lie in a closed hemisphere");

  auto pts = dedupe_points(enumerate_vertices(spec, opts.parallel),
                           1e-7 * scale);
  if (static_cast<int>(pts.size()) < n + 1)
    throw Error(ErrorCode::EmptyInterior, "fewer than n+1 vertices");

  Polytope P;
  P.dim_ = n;
  P.spec_ = spec;
  P.vertices_.resize(pts.size(), n);
  for (size_t i = 0; i < pts.size(); ++i) P.vertices_.row(i) = pts[i];

  Eigen::VectorXd centroid = P.vertices_.colwise().mean();

  const double incident_tol = 1e-7 * scale;
  P.facets_.resize(m);
  double vol = 0.0;
  for (int i = 0; i < m; ++i) {
    FacetRecord& f = P.facets_[i];
    f.normal = spec.directions.row(i);
    Eigen::VectorXd dots = P.vertices_ * f.normal;
    const double support = dots.maxCoeff();
    f.offset = std::min(support, spec.offsets[i]);

    std::vector<int> incident;
    for (int v = 0; v < dots.size(); ++v)
      if (dots[v] >= spec.offsets[i] - incident_tol) incident.push_back(v);
    if (static_cast<int>(incident.size()) < n) {
      f.area = 0.0;
      continue;
    }

    if (n == 2) {
      double len = 0.0;
      for (size_t a = 0; a < incident.size(); ++a)
        for (size_t b = a + 1; b < incident.size(); ++b)
          len = std::max(len, (P.vertices_.row(incident[a]) -
                               P.vertices_.row(incident[b])).norm());
      f.area = len;
    } else {
      // In-plane shoelace: project incident vertices on a tangent basis
      // and order them around their mean.
      Eigen::Vector3d nrm = f.normal;
      Eigen::Vector3d t1 = nrm.unitOrthogonal();
      Eigen::Vector3d t2 = nrm.cross(t1);
      Eigen::Vector2d mean = Eigen::Vector2d::Zero();
      std::vector<Eigen::Vector2d> uv(incident.size());
      for (size_t a = 0; a < incident.size(); ++a) {
        Eigen::Vector3d v = P.vertices_.row(incident[a]);
        uv[a] = Eigen::Vector2d(t1.dot(v), t2.dot(v));
        mean += uv[a];
      }
      mean /= static_cast<double>(incident.size());
      std::sort(uv.begin(), uv.end(),
                [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                  return std::atan2(a[1] - mean[1], a[0] - mean[0]) <
                         std::atan2(b[1] - mean[1], b[0] - mean[0]);
                });
      double area2 = 0.0;
      for (size_t a = 0; a < uv.size(); ++a) {
        const auto& p = uv[a];
        const auto& q = uv[(a + 1) % uv.size()];
        area2 += p[0] * q[1] - q[0] * p[1];
      }
      f.area = std::abs(area2) / 2.0;
    }
    if (f.area <= incident_tol) f.area = 0.0;
    // signed height from the vertex centroid keeps the volume formula
    // valid when the origin sits on the boundary
    vol += f.area * (f.offset - centroid.dot(f.normal));
  }
  P.volume_ = vol / n;

  if (P.volume_ <= 1e-10 * std::pow(scale, n))
    throw Error(ErrorCode::EmptyInterior, "zero volume intersection");
  return P;
}

double Polytope::support(const Eigen::VectorXd& u) const {
  return (vertices_ * u).maxCoeff();
}

Polytope Polytope::scaled(double s) const {
  if (!(s > 0)) throw Error(ErrorCode::InvalidArgument, "scale must be > 0");
  Polytope P = *this;
  P.spec_.offsets *= s;
  P.vertices_ *= s;
  for (auto& f : P.facets_) {
    f.offset *= s;
    f.area *= std::pow(s, dim_ - 1);
  }
  P.volume_ *= std::pow(s, dim_);
  return P;
}

Polytope Polytope::translated(const Eigen::VectorXd& x,
                              bool allow_negative) const {
  Polytope P = *this;
  for (int i = 0; i < spec_.count(); ++i) {
    const double shift = spec_.directions.row(i).dot(x);
    P.spec_.offsets[i] += shift;
    P.facets_[i].offset += shift;
  }
  P.vertices_.rowwise() += x.transpose();
  if (!allow_negative && P.spec_.offsets.minCoeff() < 0)
    throw Error(ErrorCode::InvalidArgument,
                "translation moves the origin outside the body");
  return P;
}

double Polytope::circumradius() const {
  return vertices_.rowwise().norm().maxCoeff();
}

double Polytope::inradius() const {
  double r = std::numeric_limits<double>::infinity();
  for (const auto& f : facets_)
    if (f.area > 0) r = std::min(r, f.offset);
  return r;
}

double Polytope::diameter() const {
  double d = 0.0;
  for (int i = 0; i < vertices_.rows(); ++i)
    for (int j = i + 1; j < vertices_.rows(); ++j)
      d = std::max(d, (vertices_.row(i) - vertices_.row(j)).norm());
  return d;
}

Eigen::VectorXd Polytope::vertex_centroid() const {
  return vertices_.colwise().mean();
}

bool Polytope::contains(const Eigen::VectorXd& x, double tol) const {
  for (int i = 0; i < spec_.count(); ++i)
    if (spec_.directions.row(i).dot(x) > spec_.offsets[i] + tol) return false;
  return true;
}

void Polytope::check_invariants() const {
  const double scale = offset_scale(spec_.offsets);
  const double tol = 1e-7 * scale;
  for (int i = 0; i < spec_.count(); ++i) {
    const double h = support(spec_.directions.row(i));
    if (h > spec_.offsets[i] + tol)
      throw Error(ErrorCode::InvalidArgument,
                  "support exceeds offset at facet " + std::to_string(i));
    if (facets_[i].area > 0 && std::abs(h - spec_.offsets[i]) > tol)
      throw Error(ErrorCode::InvalidArgument,
                  "active facet not tight at " + std::to_string(i));
  }
  for (int v = 0; v < vertices_.rows(); ++v) {
    if (!contains(vertices_.row(v), 1e-9 * scale))
      throw Error(ErrorCode::InvalidArgument,
                  "vertex " + std::to_string(v) + " infeasible");
  }
  if (volume_ <= 0)
    throw Error(ErrorCode::EmptyInterior, "non-positive volume");
}

namespace {

// Merge sampled directions, keeping the tightest value for duplicates.
void append_samples(std::vector<Eigen::VectorXd>& dirs,
                    std::vector<double>& vals, const Eigen::MatrixXd& add_dirs,
                    const Eigen::VectorXd& add_vals) {
  for (int i = 0; i < add_dirs.rows(); ++i) {
    Eigen::VectorXd d = add_dirs.row(i);
    bool merged = false;
    for (size_t j = 0; j < dirs.size(); ++j) {
      if (1.0 - dirs[j].dot(d) < kDirTol * kDirTol / 2) {
        vals[j] = std::min(vals[j], add_vals[i]);
        merged = true;
        break;
      }
    }
    if (!merged) {
      dirs.push_back(d);
      vals.push_back(add_vals[i]);
    }
  }
}

}  // namespace

Polytope wulff_shape(const Eigen::MatrixXd& directions,
                     const Eigen::VectorXd& values) {
  if (values.size() != directions.rows())
    throw Error(ErrorCode::InvalidArgument, "samples length mismatch");
  if (values.size() == 0 || values.minCoeff() <= 0)
    throw Error(ErrorCode::InvalidArgument, "Wulff values must be positive");
  std::vector<Eigen::VectorXd> dirs;
  std::vector<double> vals;
  append_samples(dirs, vals, directions, values);
  HalfspaceSpec spec;
  spec.directions.resize(dirs.size(), directions.cols());
  spec.offsets.resize(dirs.size());
  for (size_t i = 0; i < dirs.size(); ++i) {
    spec.directions.row(i) = dirs[i];
    spec.offsets[i] = vals[i];
  }
  return Polytope::from_halfspaces(spec);
}

Polytope lp_combine(const Polytope& K, const Polytope& L, double p, double t,
                    int refinement) {
  if (K.dim() != L.dim())
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  if (p < 1.0) throw Error(ErrorCode::InvalidArgument, "p must be >= 1");
  if (!(t > 0)) throw Error(ErrorCode::InvalidArgument, "t must be > 0");
  if (K.inradius() <= 0 || L.inradius() <= 0)
    throw Error(ErrorCode::DegenerateBody,
                "combination requires the origin interior to both bodies");
  const int n = K.dim();
  const int grid = refinement > 0 ? refinement : (n == 3 ? 320 : 256);

  std::vector<Eigen::VectorXd> dirs;
  std::vector<double> vals;
  auto combined = [&](const Eigen::VectorXd& u) {
    return std::pow(std::pow(K.support(u), p) + t * std::pow(L.support(u), p),
                    1.0 / p);
  };
  auto add_set = [&](const Eigen::MatrixXd& set) {
    Eigen::VectorXd v(set.rows());
    for (int i = 0; i < set.rows(); ++i) v[i] = combined(set.row(i));
    append_samples(dirs, vals, set, v);
  };
  add_set(K.spec().directions);
  add_set(L.spec().directions);
  if (n == 3)
    add_set(refinement > 0 ? fibonacci_sphere(grid) : icosphere_face_normals(2));
  else
    add_set(circle_directions(grid));

  HalfspaceSpec spec;
  spec.directions.resize(dirs.size(), n);
  spec.offsets.resize(dirs.size());
  for (size_t i = 0; i < dirs.size(); ++i) {
    spec.directions.row(i) = dirs[i];
    spec.offsets[i] = vals[i];
  }
  Polytope R = Polytope::from_halfspaces(spec);

  // Outer-approximation gap: how far the sampled hull pokes past the
  // true combined support between samples.
  Eigen::MatrixXd probe = sphere_sample(n, n == 3 ? 1000 : 720);
  double gap = 0.0;
  for (int i = 0; i < probe.rows(); ++i) {
    Eigen::VectorXd u = probe.row(i);
    gap = std::max(gap, R.support(u) - combined(u));
  }
  R.approx_gap_ = std::max(0.0, gap);
  return R;
}

double hausdorff_distance(const Polytope& K, const Polytope& L, int samples) {
  if (K.dim() != L.dim())
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  const int n = K.dim();
  const int count = samples > 0 ? samples : (n == 3 ? 2000 : 720);
  Eigen::MatrixXd grid = sphere_sample(n, count);
  double dist = 0.0;
  auto scan = [&](const Eigen::MatrixXd& dirs) {
    for (int i = 0; i < dirs.rows(); ++i) {
      Eigen::VectorXd u = dirs.row(i);
      dist = std::max(dist, std::abs(K.support(u) - L.support(u)));
    }
  };
  scan(grid);
  scan(K.spec().directions);
  scan(L.spec().directions);
  return dist;
}

}  // namespace capmink
