#include "capmink/grid.hpp"

#include <algorithm>
#include <cmath>

namespace capmink {

void GridConfig::validate() const {
  if (n != 2 && n != 3)
    throw Error(ErrorCode::UnsupportedDimension, "grid supports n in {2,3}");
  if (!(h > 0)) throw Error(ErrorCode::InvalidArgument, "h must be > 0");
  if (box_radius / h > 400.0 + 1e-9)
    throw Error(ErrorCode::InvalidArgument, "R/h exceeds the 400 memory guard");
  if (max_iters < 1)
    throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(energy_tol > 0))
    throw Error(ErrorCode::InvalidArgument, "energy_tol must be > 0");
}

GridField make_lattice(const GridConfig& cfg) {
  cfg.validate();
  GridField f;
  f.n = cfg.n;
  f.h = cfg.h;
  // even number of cells per half-axis keeps the 2h lattice aligned
  const int half_cells = std::max(4, 2 * (int)std::lround(cfg.box_radius / (2 * cfg.h)));
  f.radius = half_cells * cfg.h;
  f.npts = 2 * half_cells + 1;
  const std::size_t total = cfg.n == 3
                                ? (std::size_t)f.npts * f.npts * f.npts
                                : (std::size_t)f.npts * f.npts;
  f.values.assign(total, 0.0);
  f.mask.assign(total, (std::uint8_t)PointClass::Free);
  return f;
}

void rasterize(GridField& field, const Eigen::MatrixXd& directions,
               const Eigen::VectorXd& offsets) {
  const int n = field.n;
  const int N = field.npts;
  const int m = (int)directions.rows();
  const double h = field.h;

  std::fill(field.mask.begin(), field.mask.end(),
            (std::uint8_t)PointClass::Free);

  // Outer Dirichlet layer.
  auto mark_outer = [&](int i, int j, int k) {
    field.mask[field.index(i, j, k)] = (std::uint8_t)PointClass::Outer;
  };
  if (n == 3) {
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        mark_outer(0, a, b);
        mark_outer(N - 1, a, b);
        mark_outer(a, 0, b);
        mark_outer(a, N - 1, b);
        mark_outer(a, b, 0);
        mark_outer(a, b, N - 1);
      }
  } else {
    for (int a = 0; a < N; ++a) {
      mark_outer(0, a, 0);
      mark_outer(N - 1, a, 0);
      mark_outer(a, 0, 0);
      mark_outer(a, N - 1, 0);
    }
  }

  // Only the body's bounding box (padded by one band) can hold
  // constrained points.
  auto clamp_idx = [&](double x) {
    return std::clamp((int)std::floor((x + field.radius) / h), 0, N - 1);
  };
  // loose per-axis bound: |x_d| <= max_i offsets_i / max(|dir_id|, eps)
  // is unhelpful; use the halfspace geometry via support estimates
  // through axis probes instead. A safe box: the body is contained in
  // the ball of radius max over active offsets / min alignment; simply
  // intersect margins over a padded scan box derived from offsets.
  double bound = 0.0;
  for (int d = 0; d < n; ++d) {
    // support along +-e_d is at most min over halfspaces aligned with it
    double up = std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = directions(i, d);
      if (a > 1e-9) up = std::min(up, offsets[i] / a);
      if (a < -1e-9) lo = std::min(lo, offsets[i] / (-a));
    }
    bound = std::max({bound, up, lo});
  }
  bound = std::min(bound + 2 * h, field.radius);

  const int ilo = clamp_idx(-bound), ihi = clamp_idx(bound);
  bool any_interior = false;
  bool touches_outer = false;

  const double* D = directions.data();  // column-major (m x n)
  auto margin_at = [&](const double* x) {
    double mg = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      double dot = 0;
      for (int d = 0; d < n; ++d) dot += D[i + (std::size_t)d * m] * x[d];
      mg = std::min(mg, offsets[i] - dot);
      if (mg < -h) break;
    }
    return mg;
  };

  if (n == 3) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(||:any_interior, touches_outer)
#endif
    for (int i = ilo; i <= ihi; ++i) {
      for (int j = ilo; j <= ihi; ++j) {
        for (int k = ilo; k <= ihi; ++k) {
          double x[3] = {field.coord(i), field.coord(j), field.coord(k)};
          const double mg = margin_at(x);
          if (mg < -h / 2) continue;
          const std::size_t id = field.index(i, j, k);
          if (field.mask[id] == (std::uint8_t)PointClass::Outer) {
            touches_outer = true;
            continue;
          }
          if (mg >= h / 2) {
            field.mask[id] = (std::uint8_t)PointClass::Interior;
            any_interior = true;
          }
        }
      }
    }
  } else {
    for (int i = ilo; i <= ihi; ++i) {
      for (int j = ilo; j <= ihi; ++j) {
        double x[2] = {field.coord(i), field.coord(j)};
        const double mg = margin_at(x);
        if (mg < -h / 2) continue;
        const std::size_t id = field.index(i, j);
        if (field.mask[id] == (std::uint8_t)PointClass::Outer) {
          touches_outer = true;
          continue;
        }
        if (mg >= h / 2) {
          field.mask[id] = (std::uint8_t)PointClass::Interior;
          any_interior = true;
        }
      }
    }
  }

  if (touches_outer)
    throw Error(ErrorCode::DomainTooSmall, "body touches the outer band");
  if (!any_interior)
    throw Error(ErrorCode::DomainTooSmall,
                "body has no interior lattice point at this spacing");
}

void prolong(const GridField& coarse, GridField& fine) {
  const int n = fine.n;
  const int Nf = fine.npts;
  const int Nc = coarse.npts;
  auto cval = [&](int i, int j, int k) {
    i = std::clamp(i, 0, Nc - 1);
    j = std::clamp(j, 0, Nc - 1);
    k = std::clamp(k, 0, Nc - 1);
    return coarse.values[coarse.index(i, j, k)];
  };
  // fine index i maps to coarse coordinate i/2
  auto along = [&](int i) { return std::pair<int, bool>{i / 2, (i % 2) != 0}; };
  if (n == 3) {
    for (int i = 0; i < Nf; ++i) {
      auto [ci, mi] = along(i);
      for (int j = 0; j < Nf; ++j) {
        auto [cj, mj] = along(j);
        for (int k = 0; k < Nf; ++k) {
          auto [ck, mk] = along(k);
          double v = 0;
          for (int a = 0; a <= (mi ? 1 : 0); ++a)
            for (int b = 0; b <= (mj ? 1 : 0); ++b)
              for (int c = 0; c <= (mk ? 1 : 0); ++c)
                v += cval(ci + a, cj + b, ck + c);
          v /= (mi ? 2 : 1) * (mj ? 2 : 1) * (mk ? 2 : 1);
          fine.values[fine.index(i, j, k)] = v;
        }
      }
    }
  } else {
    for (int i = 0; i < Nf; ++i) {
      auto [ci, mi] = along(i);
      for (int j = 0; j < Nf; ++j) {
        auto [cj, mj] = along(j);
        double v = 0;
        for (int a = 0; a <= (mi ? 1 : 0); ++a)
          for (int b = 0; b <= (mj ? 1 : 0); ++b) v += cval(ci + a, cj + b, 0);
        v /= (mi ? 2 : 1) * (mj ? 2 : 1);
        fine.values[fine.index(i, j)] = v;
      }
    }
  }
}

}  // namespace capmink
