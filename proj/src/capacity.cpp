#include "capmink/capacity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace capmink {

namespace {

constexpr double kTiny = 1e-300;

double unit_ball_volume(int n) {
  if (n == 2) return M_PI;
  if (n == 3) return 4.0 * M_PI / 3.0;
  throw Error(ErrorCode::UnsupportedDimension, "n in {2,3}");
}

double far_field_exponent(int n, double pexp) {
  return (n - pexp) / (pexp - 1.0);
}

void check_exponent(int n, double pexp) {
  // conditioning of ((n-p)/(p-1))^{p-1} degrades at both ends
  if (!(pexp >= 1.05 && pexp <= n - 0.05))
    throw Error(ErrorCode::InvalidExponent, "pexp must lie in [1.05, n-0.05]");
}

// ---------------------------------------------------------------------------
// fast fractional powers for the exponents the solver actually meets

enum class EKind { Zero, NegQuarter, PosQuarter, Generic };

EKind classify_exponent(double e) {
  if (std::abs(e) < 1e-12) return EKind::Zero;
  if (std::abs(e + 0.25) < 1e-12) return EKind::NegQuarter;
  if (std::abs(e - 0.25) < 1e-12) return EKind::PosQuarter;
  return EKind::Generic;
}

template <EKind K>
inline double powe(double q, double e);
template <>
inline double powe<EKind::Zero>(double, double) { return 1.0; }
template <>
inline double powe<EKind::NegQuarter>(double q, double) {
  return 1.0 / std::sqrt(std::sqrt(q));
}
template <>
inline double powe<EKind::PosQuarter>(double q, double) {
  return std::sqrt(std::sqrt(q));
}
template <>
inline double powe<EKind::Generic>(double q, double e) {
  return std::pow(q, e);
}

// ---------------------------------------------------------------------------
// point updates

inline double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// p = 2: the 1-point energy is quadratic, minimizer is the neighbor mean.
template <int NDIM>
inline void update_point_p2(double* u, const std::uint8_t* mask,
                            std::size_t idx, const std::size_t* S,
                            double omega) {
  if (mask[idx] != (std::uint8_t)PointClass::Free) return;
  double sum = 0;
  for (int d = 0; d < NDIM; ++d) sum += u[idx + S[d]] + u[idx - S[d]];
  const double uo = u[idx];
  u[idx] = uo + omega * (sum / (2 * NDIM) - uo);
}

// General p: safeguarded Newton on the convex 1-point energy
// phi(t) = sum_cells q_c(t)^{p/2}, q_c quadratic in t. Over-relaxation
// keeps only energy-decreasing moves, so sweeps stay monotone.
template <int NDIM, EKind KK>
inline void update_point_gen(double* u, const std::uint8_t* mask,
                             std::size_t idx, const std::size_t* S, double e,
                             double omega) {
  if (mask[idx] != (std::uint8_t)PointClass::Free) return;

  double nbp[NDIM], nbm[NDIM];
  double lo = 1e300, hi = -1e300;
  for (int d = 0; d < NDIM; ++d) {
    nbp[d] = u[idx + S[d]];
    nbm[d] = u[idx - S[d]];
    lo = std::min({lo, nbp[d], nbm[d]});
    hi = std::max({hi, nbp[d], nbm[d]});
  }
  const double uo = u[idx];
  if (hi - lo < 1e-14) {
    u[idx] = 0.5 * (lo + hi);
    return;
  }

  double alpha[NDIM + 1], beta[NDIM + 1], gamma[NDIM + 1];
  alpha[0] = NDIM;
  beta[0] = 0;
  gamma[0] = 0;
  for (int d = 0; d < NDIM; ++d) {
    beta[0] -= 2 * nbp[d];
    gamma[0] += nbp[d] * nbp[d];
  }
  for (int d = 0; d < NDIM; ++d) {
    alpha[d + 1] = 1;
    beta[d + 1] = -2 * nbm[d];
    double g = nbm[d] * nbm[d];
    for (int j = 0; j < NDIM; ++j) {
      if (j == d) continue;
      const double dd = u[idx - S[d] + S[j]] - nbm[d];
      g += dd * dd;
    }
    gamma[d + 1] = g;
  }

  double a = lo, b = hi;
  double t = clampd(uo, lo, hi);
  for (int it = 0; it < 4; ++it) {
    double r = 0, rp = 0;
    for (int c = 0; c <= NDIM; ++c) {
      double q = alpha[c] * t * t + beta[c] * t + gamma[c];
      q = (q > 0 ? q : 0) + kTiny;
      const double w = powe<KK>(q, e);
      const double qp = 2 * alpha[c] * t + beta[c];
      r += w * qp;
      rp += 2 * alpha[c] * w + e * (w / q) * qp * qp;
    }
    if (r > 0)
      b = t;
    else
      a = t;
    double tn = rp > 0 ? t - r / rp : 0.5 * (a + b);
    if (!(tn > a && tn < b)) tn = 0.5 * (a + b);
    if (std::abs(tn - t) < 1e-9 * (1 + std::abs(t))) {
      t = tn;
      break;
    }
    t = tn;
  }

  if (omega != 1.0) {
    const double tc = uo + omega * (t - uo);
    double phc = 0, pho = 0;
    for (int c = 0; c <= NDIM; ++c) {
      double qc = alpha[c] * tc * tc + beta[c] * tc + gamma[c];
      qc = (qc > 0 ? qc : 0) + kTiny;
      phc += qc * powe<KK>(qc, e);
      double qo = alpha[c] * uo * uo + beta[c] * uo + gamma[c];
      qo = (qo > 0 ? qo : 0) + kTiny;
      pho += qo * powe<KK>(qo, e);
    }
    if (phc <= pho) {
      u[idx] = tc;
      return;
    }
  }
  u[idx] = t;
}

// ---------------------------------------------------------------------------
// sweeps

template <int NDIM>
void strides_of(const GridField& f, std::size_t* S) {
  if constexpr (NDIM == 3) {
    S[0] = (std::size_t)f.npts * f.npts;
    S[1] = f.npts;
    S[2] = 1;
  } else {
    S[0] = f.npts;
    S[1] = 1;
  }
}

template <int NDIM, EKind KK>
void sweep_serial_impl(GridField& f, double e, double omega, bool p2) {
  std::size_t S[NDIM];
  strides_of<NDIM>(f, S);
  const int N = f.npts;
  double* u = f.values.data();
  const std::uint8_t* mask = f.mask.data();
  if constexpr (NDIM == 3) {
    for (int i = 1; i < N - 1; ++i)
      for (int j = 1; j < N - 1; ++j) {
        std::size_t row = f.index(i, j, 0);
        for (int k = 1; k < N - 1; ++k) {
          if (p2)
            update_point_p2<3>(u, mask, row + k, S, omega);
          else
            update_point_gen<3, KK>(u, mask, row + k, S, e, omega);
        }
      }
  } else {
    for (int i = 1; i < N - 1; ++i) {
      std::size_t row = f.index(i, 0);
      for (int j = 1; j < N - 1; ++j) {
        if (p2)
          update_point_p2<2>(u, mask, row + j, S, omega);
        else
          update_point_gen<2, KK>(u, mask, row + j, S, e, omega);
      }
    }
  }
}

// Multicolor parallel Gauss-Seidel. For p = 2 the stencil couples only
// axis neighbors, so two colors suffice; the general energy couples
// points sharing a cell (including diagonals), which the full 2^n
// parity coloring separates. Updates within a color are independent, so
// the result is deterministic for any thread count.
template <int NDIM, EKind KK>
void sweep_parallel_impl(GridField& f, double e, double omega, bool p2) {
  std::size_t S[NDIM];
  strides_of<NDIM>(f, S);
  const int N = f.npts;
  double* u = f.values.data();
  const std::uint8_t* mask = f.mask.data();

  if (p2) {
    for (int color = 0; color < 2; ++color) {
      if constexpr (NDIM == 3) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int i = 1; i < N - 1; ++i)
          for (int j = 1; j < N - 1; ++j) {
            const int k0 = 1 + ((color + i + j + 1) & 1);
            std::size_t row = f.index(i, j, 0);
            for (int k = k0; k < N - 1; k += 2)
              update_point_p2<3>(u, mask, row + k, S, omega);
          }
      } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int i = 1; i < N - 1; ++i) {
          const int j0 = 1 + ((color + i + 1) & 1);
          std::size_t row = f.index(i, 0);
          for (int j = j0; j < N - 1; j += 2)
            update_point_p2<2>(u, mask, row + j, S, omega);
        }
      }
    }
    return;
  }

  const int ncolors = 1 << NDIM;
  for (int color = 0; color < ncolors; ++color) {
    const int ci = color & 1, cj = (color >> 1) & 1, ck = (color >> 2) & 1;
    if constexpr (NDIM == 3) {
      const int i0 = 1 + ((ci + 1) & 1), j0 = 1 + ((cj + 1) & 1),
                k0 = 1 + ((ck + 1) & 1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int i = i0; i < N - 1; i += 2)
        for (int j = j0; j < N - 1; j += 2) {
          std::size_t row = f.index(i, j, 0);
          for (int k = k0; k < N - 1; k += 2)
            update_point_gen<3, KK>(u, mask, row + k, S, e, omega);
        }
    } else {
      const int i0 = 1 + ((ci + 1) & 1), j0 = 1 + ((cj + 1) & 1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int i = i0; i < N - 1; i += 2) {
        std::size_t row = f.index(i, 0);
        for (int j = j0; j < N - 1; j += 2)
          update_point_gen<2, KK>(u, mask, row + j, S, e, omega);
      }
    }
  }
}

template <int NDIM, EKind KK>
double energy_impl(const GridField& f, double e2, bool parallel) {
  // e2 = p/2 - 1; cell term s^{p/2} = s * s^{e2}
  std::size_t S[NDIM];
  strides_of<NDIM>(f, S);
  const int N = f.npts;
  const double* u = f.values.data();
  double acc = 0;
  if constexpr (NDIM == 3) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : acc) if (parallel)
#endif
    for (int i = 0; i < N - 1; ++i)
      for (int j = 0; j < N - 1; ++j) {
        std::size_t b = f.index(i, j, 0);
        double local = 0;
        for (int k = 0; k < N - 1; ++k) {
          std::size_t id = b + k;
          const double d0 = u[id + S[0]] - u[id];
          const double d1 = u[id + S[1]] - u[id];
          const double d2 = u[id + 1] - u[id];
          const double s = d0 * d0 + d1 * d1 + d2 * d2;
          local += s * powe<KK>(s + kTiny, e2);
        }
        acc += local;
      }
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : acc) if (parallel)
#endif
    for (int i = 0; i < N - 1; ++i) {
      std::size_t b = f.index(i, 0);
      double local = 0;
      for (int j = 0; j < N - 1; ++j) {
        std::size_t id = b + j;
        const double d0 = u[id + S[0]] - u[id];
        const double d1 = u[id + 1] - u[id];
        const double s = d0 * d0 + d1 * d1;
        local += s * powe<KK>(s + kTiny, e2);
      }
      acc += local;
    }
  }
  const double p = 2.0 * (e2 + 1.0);
  return acc * std::pow(f.h, f.n - p);
}

template <typename Fn>
auto dispatch_ekind(EKind k, Fn&& fn) {
  switch (k) {
    case EKind::Zero: return fn.template operator()<EKind::Zero>();
    case EKind::NegQuarter: return fn.template operator()<EKind::NegQuarter>();
    case EKind::PosQuarter: return fn.template operator()<EKind::PosQuarter>();
    default: return fn.template operator()<EKind::Generic>();
  }
}

}  // namespace

namespace kernels {

void gs_sweep_serial(GridField& field, double pexp, double omega) {
  const double e = pexp / 2.0 - 1.0;
  const bool p2 = std::abs(pexp - 2.0) < 1e-12;
  const EKind k = classify_exponent(e);
  if (field.n == 3)
    dispatch_ekind(k, [&]<EKind KK>() {
      sweep_serial_impl<3, KK>(field, e, omega, p2);
      return 0;
    });
  else
    dispatch_ekind(k, [&]<EKind KK>() {
      sweep_serial_impl<2, KK>(field, e, omega, p2);
      return 0;
    });
}

void gs_sweep_parallel(GridField& field, double pexp, double omega) {
  const double e = pexp / 2.0 - 1.0;
  const bool p2 = std::abs(pexp - 2.0) < 1e-12;
  const EKind k = classify_exponent(e);
  if (field.n == 3)
    dispatch_ekind(k, [&]<EKind KK>() {
      sweep_parallel_impl<3, KK>(field, e, omega, p2);
      return 0;
    });
  else
    dispatch_ekind(k, [&]<EKind KK>() {
      sweep_parallel_impl<2, KK>(field, e, omega, p2);
      return 0;
    });
}

double energy_serial(const GridField& field, double pexp) {
  const double e2 = pexp / 2.0 - 1.0;
  const EKind k = classify_exponent(e2);
  if (field.n == 3)
    return dispatch_ekind(
        k, [&]<EKind KK>() { return energy_impl<3, KK>(field, e2, false); });
  return dispatch_ekind(
      k, [&]<EKind KK>() { return energy_impl<2, KK>(field, e2, false); });
}

double energy_parallel(const GridField& field, double pexp) {
  const double e2 = pexp / 2.0 - 1.0;
  const EKind k = classify_exponent(e2);
  if (field.n == 3)
    return dispatch_ekind(
        k, [&]<EKind KK>() { return energy_impl<3, KK>(field, e2, true); });
  return dispatch_ekind(
      k, [&]<EKind KK>() { return energy_impl<2, KK>(field, e2, true); });
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// closed forms and truncation tail

double ball_capacity_exact(int n, double pexp, double r) {
  if (!(pexp > 1.0 && pexp < n))
    throw Error(ErrorCode::InvalidExponent, "need 1 < pexp < n");
  if (!(r > 0)) throw Error(ErrorCode::InvalidArgument, "radius must be > 0");
  const double kappa = far_field_exponent(n, pexp);
  return n * unit_ball_volume(n) * std::pow(kappa, pexp - 1.0) *
         std::pow(r, n - pexp);
}

double capacity_radius(int n, double pexp, double capacity) {
  const double kappa = far_field_exponent(n, pexp);
  return std::pow(
      capacity / (n * unit_ball_volume(n) * std::pow(kappa, pexp - 1.0)),
      1.0 / (n - pexp));
}

namespace {

// fraction of the circle with |cos| <= c and |sin| <= c
double circle_box_fraction(double c) {
  if (c >= 1.0) return 1.0;
  if (c <= M_SQRT1_2) return 0.0;
  return (std::asin(c) - std::acos(c)) / (M_PI / 2);
}

// fraction of S^{n-1} with all |u_d| <= s
double sphere_box_fraction(int n, double s) {
  if (s >= 1.0) return 1.0;
  if (n == 2) return circle_box_fraction(s);
  if (s <= 1.0 / std::sqrt(3.0)) return 0.0;
  // z uniform on [-1,1]; conditional circle fraction at height z
  const int steps = 256;
  double acc = 0;
  for (int i = 0; i < steps; ++i) {
    const double z = s * (2.0 * (i + 0.5) / steps - 1.0);
    const double r = std::sqrt(std::max(1e-30, 1.0 - z * z));
    acc += circle_box_fraction(std::min(1.0, s / r));
  }
  return acc * (2 * s / steps) / 2.0;
}

// energy of the matched far-field profile outside the box [-R,R]^n
double truncation_tail(int n, double pexp, double r_eff, double R) {
  const double kappa = far_field_exponent(n, pexp);
  const double beta = (n - 1.0) / (pexp - 1.0);
  const double pref =
      std::pow(kappa * std::pow(r_eff, kappa), pexp) * n * unit_ball_volume(n);
  const double rmax = R * std::sqrt((double)n);
  // between R and R*sqrt(n) only the sphere fraction outside the box counts
  const int steps = 160;
  double inner = 0;
  for (int i = 0; i < steps; ++i) {
    const double rho = R + (rmax - R) * (i + 0.5) / steps;
    const double w = 1.0 - sphere_box_fraction(n, R / rho);
    inner += w * std::pow(rho, -beta);
  }
  inner *= (rmax - R) / steps;
  const double outer = std::pow(rmax, 1.0 - beta) / (beta - 1.0);
  return pref * (inner + outer);
}

// ---------------------------------------------------------------------------
// solve pipeline

struct PipelineResult {
  GridField field;
  double capacity = 0;
  double r_eff = 0;
  std::vector<double> history;
};

void apply_constraints(GridField& f, BoundaryMode mode, double r_eff,
                       double kappa) {
  const int N = f.npts;
  auto bc_value = [&](double rr) {
    if (mode == BoundaryMode::Zero) return 0.0;
    return std::min(0.95, std::pow(r_eff / rr, kappa));
  };
  const int n = f.n;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const int kmax = n == 3 ? N : 1;
      for (int k = 0; k < kmax; ++k) {
        const std::size_t id = f.index(i, j, k);
        switch ((PointClass)f.mask[id]) {
          case PointClass::Interior:
            f.values[id] = 1.0;
            break;
          case PointClass::Outer: {
            double x = f.coord(i), y = f.coord(j),
                   z = n == 3 ? f.coord(k) : 0.0;
            f.values[id] = bc_value(std::sqrt(x * x + y * y + z * z));
            break;
          }
          case PointClass::Free:
            f.values[id] = clampd(f.values[id], 0.0, 1.0);
            break;
        }
      }
    }
}

void init_profile(GridField& f, BoundaryMode mode, double r0, double kappa) {
  const int N = f.npts;
  const int n = f.n;
  const double profR = std::pow(r0 / f.radius, kappa);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const int kmax = n == 3 ? N : 1;
      for (int k = 0; k < kmax; ++k) {
        double x = f.coord(i), y = f.coord(j), z = n == 3 ? f.coord(k) : 0.0;
        const double rr = std::max(r0, std::sqrt(x * x + y * y + z * z));
        double v = std::pow(r0 / rr, kappa);
        if (mode == BoundaryMode::Zero)
          v = std::max(0.0, (v - profR) / (1.0 - profR));
        f.values[f.index(i, j, k)] = v;
      }
    }
}

void run_sweeps(GridField& f, const GridConfig& cfg, double pexp,
                std::vector<double>* history) {
  const bool parallel = cfg.threads != 1;
  // near-optimal SOR; the per-point descent guard keeps the general-p
  // updates monotone at this omega
  const double omega = std::min(1.95, 2.0 / (1.0 + std::sin(M_PI / f.npts)));
  auto energy = [&]() {
    return parallel ? kernels::energy_parallel(f, pexp)
                    : kernels::energy_serial(f, pexp);
  };
  std::vector<double> trace;
  trace.push_back(energy());
  if (history) history->push_back(trace.back());
  const int win = 6;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (parallel)
      kernels::gs_sweep_parallel(f, pexp, omega);
    else
      kernels::gs_sweep_serial(f, pexp, omega);
    const double cur = energy();
    trace.push_back(cur);
    if (history) history->push_back(cur);
    // geometric-tail projection over 6-sweep windows: with block
    // contraction rho the remaining decrease is about W * rho/(1-rho).
    // Windowing rides out the SOR oscillation; plain per-sweep decrease
    // stops too early on smooth error modes.
    if (it >= 2 * win) {
      const double w1 = trace[it - win] - cur;
      const double w0 = trace[it - 2 * win] - trace[it - win];
      if (w1 <= 0) return;
      const double rho = w0 > 0 ? clampd(w1 / w0, 0.0, 0.999) : 0.999;
      const double remaining = w1 * rho / (1.0 - rho);
      if (w1 + remaining < cfg.energy_tol * std::max(cur, kTiny)) return;
    }
  }
  throw GridNoConvergence("sweep budget exhausted (max_iters)", std::move(f));
}

GridConfig with_spacing(const GridConfig& cfg, double h) {
  GridConfig c = cfg;
  c.h = h;
  return c;
}

// One full solve at cfg.h: rasterize, warm start (from a caller-provided
// field at h or 2h, or a recursive 2h cascade), then in asymptotic mode
// iterate the far-field calibration to self-consistency.
PipelineResult solve_pipeline(const Eigen::MatrixXd& D,
                              const Eigen::VectorXd& y, const GridConfig& cfg,
                              double pexp, const GridField* warm,
                              double r_hint, int cascade_depth) {
  const double kappa = far_field_exponent(cfg.n, pexp);
  PipelineResult out;
  out.field = make_lattice(cfg);
  rasterize(out.field, D, y);

  double r0 = r_hint;
  bool warm_started = false;
  if (warm && warm->npts == out.field.npts &&
      std::abs(warm->h - out.field.h) < 1e-12) {
    out.field.values = warm->values;
    warm_started = true;
  } else if (warm && (out.field.npts - 1) == 2 * (warm->npts - 1)) {
    prolong(*warm, out.field);
    warm_started = true;
  } else if (cascade_depth > 0 && (out.field.npts - 1) / 2 >= 16) {
    try {
      PipelineResult coarse =
          solve_pipeline(D, y, with_spacing(cfg, 2 * cfg.h), pexp, nullptr,
                         r_hint, cascade_depth - 1);
      prolong(coarse.field, out.field);
      r0 = coarse.r_eff;
      warm_started = true;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DomainTooSmall) throw;
    }
  }
  if (!warm_started) init_profile(out.field, cfg.boundary_mode, r0, kappa);

  auto box_energy = [&]() {
    return cfg.threads != 1 ? kernels::energy_parallel(out.field, pexp)
                            : kernels::energy_serial(out.field, pexp);
  };

  if (cfg.boundary_mode == BoundaryMode::Zero) {
    apply_constraints(out.field, BoundaryMode::Zero, 0, kappa);
    run_sweeps(out.field, cfg, pexp, &out.history);
    out.capacity = box_energy();
    out.r_eff = capacity_radius(cfg.n, pexp, out.capacity);
    return out;
  }

  double r_eff = r0;
  for (int pass = 0; pass < 4; ++pass) {
    apply_constraints(out.field, BoundaryMode::Asymptotic, r_eff, kappa);
    out.history.clear();
    run_sweeps(out.field, cfg, pexp, &out.history);
    out.capacity =
        box_energy() + truncation_tail(cfg.n, pexp, r_eff, out.field.radius);
    const double r_new = capacity_radius(cfg.n, pexp, out.capacity);
    const bool done = std::abs(r_new - r_eff) <= 0.004 * r_eff;
    out.r_eff = r_new;
    if (done) break;
    r_eff = r_new;
  }
  return out;
}

// raw discrete capacities at h and 2h, warm-started coarse to fine
std::pair<PipelineResult, PipelineResult> solve_two_level(
    const Eigen::MatrixXd& D, const Eigen::VectorXd& y, const GridConfig& cfg,
    double pexp, double r_hint) {
  auto coarse =
      solve_pipeline(D, y, with_spacing(cfg, 2 * cfg.h), pexp, nullptr, r_hint, 1);
  auto fine = solve_pipeline(D, y, cfg, pexp, &coarse.field, coarse.r_eff, 0);
  return {std::move(coarse), std::move(fine)};
}

double richardson(double fine, double coarse) { return 2 * fine - coarse; }

double initial_radius_hint(const Polytope& K) {
  const double inr = std::max(K.inradius(), 0.0);
  return std::max(0.25 * K.circumradius(),
                  0.4 * (inr + K.circumradius()));
}

void check_domain(const Polytope& K, const GridConfig& cfg) {
  if (K.circumradius() > cfg.box_radius / 4.0 * (1.0 + 1e-6))
    throw Error(ErrorCode::DomainTooSmall, "circumradius exceeds box_radius/4");
}

}  // namespace

GridField equilibrium_potential(const Polytope& K, const GridConfig& cfg,
                                double pexp) {
  cfg.validate();
  check_exponent(cfg.n, pexp);
  check_domain(K, cfg);
  if (K.dim() != cfg.n)
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  auto res = solve_pipeline(K.spec().directions, K.spec().offsets, cfg, pexp,
                            nullptr, initial_radius_hint(K), 2);
  return std::move(res.field);
}

CapacityResult p_capacity(const Polytope& K, const GridConfig& cfg,
                          double pexp) {
  cfg.validate();
  check_exponent(cfg.n, pexp);
  check_domain(K, cfg);
  if (K.dim() != cfg.n)
    throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
  auto [coarse, fine] =
      solve_two_level(K.spec().directions, K.spec().offsets, cfg, pexp,
                      initial_radius_hint(K));
  CapacityResult res;
  res.raw_fine = fine.capacity;
  res.raw_coarse = coarse.capacity;
  res.value = richardson(fine.capacity, coarse.capacity);
  res.error_estimate = std::abs(fine.capacity - coarse.capacity);
  res.energy_history = std::move(fine.history);
  res.pexp = pexp;
  return res;
}

namespace {

// polygon inradius lower bound: area over semiperimeter scaled estimate
// (n=3); half the segment length in n=2
double facet_inradius_estimate(const Polytope& K, int facet) {
  const auto& f = K.facets()[facet];
  if (f.area <= 0) return 0;
  if (K.dim() == 2) return f.area / 2;
  return std::sqrt(f.area / M_PI) * 0.5;
}

std::vector<double> flux_masses(const Polytope& K, const GridField& f,
                                double pexp) {
  const int n = f.n;
  const int N = f.npts;
  const int m = K.spec().count();
  const auto& D = K.spec().directions;
  const auto& y = K.spec().offsets;
  std::vector<double> mu(m, 0.0);

  std::vector<int> active;
  for (int i = 0; i < m; ++i)
    if (K.facets()[i].area > 0) active.push_back(i);

  std::size_t S[3] = {0, 0, 0};
  if (n == 3) {
    S[0] = (std::size_t)N * N;
    S[1] = N;
    S[2] = 1;
  } else {
    S[0] = N;
    S[1] = 1;
  }

  const double face_area = std::pow(f.h, n - 1);
  auto visit = [&](int i, int j, int k) {
    const std::size_t id = f.index(i, j, k);
    if (f.mask[id] != (std::uint8_t)PointClass::Interior) return;
    for (int d = 0; d < n; ++d) {
      for (double sgn : {-1.0, 1.0}) {
        const std::size_t nb = sgn > 0 ? id + S[d] : id - S[d];
        if (f.mask[nb] == (std::uint8_t)PointClass::Interior) continue;
        // second-order one-sided normal derivative at the surface point;
        // the plain midpoint difference sits half a cell out and misses
        // the near-surface decay. Along a lattice ray leaving a convex
        // body the second sample is outside too.
        const std::size_t nb2 = sgn > 0 ? nb + S[d] : nb - S[d];
        const double u1 = f.values[nb];
        const double u2 = f.values[nb2];
        const double g =
            std::max(0.0, (3.0 - 4.0 * u1 + u2) / (2.0 * f.h));
        if (g <= 0) continue;
        double x[3] = {f.coord(i), f.coord(j), n == 3 ? f.coord(k) : 0.0};
        x[d] += sgn * f.h / 2;
        // nearest constraint plane among facets leaning along the face
        int best = -1;
        double best_dist = 1e300;
        for (int a : active) {
          const double align = sgn * D(a, d);
          if (align <= 0.1) continue;
          double dot = 0;
          for (int dd = 0; dd < n; ++dd) dot += D(a, dd) * x[dd];
          const double dist = std::abs(y[a] - dot);
          if (dist < best_dist) {
            best_dist = dist;
            best = a;
          }
        }
        if (best < 0) continue;
        // project the lattice face onto the facet plane; kills the
        // staircase area inflation
        mu[best] += std::pow(g, pexp) * face_area * (sgn * D(best, d));
      }
    }
  };

  if (n == 3) {
    for (int i = 1; i < N - 1; ++i)
      for (int j = 1; j < N - 1; ++j)
        for (int k = 1; k < N - 1; ++k) visit(i, j, k);
  } else {
    for (int i = 1; i < N - 1; ++i)
      for (int j = 1; j < N - 1; ++j) visit(i, j, 0);
  }
  return mu;
}

}  // namespace

std::vector<double> capacitary_measure(const Polytope& K,
                                       const GridConfig& cfg, double pexp,
                                       MeasureMethod method,
                                       bool require_resolved) {
  cfg.validate();
  check_exponent(cfg.n, pexp);
  check_domain(K, cfg);
  const int m = K.spec().count();

  if (require_resolved) {
    std::string offending;
    for (int i = 0; i < m; ++i) {
      if (K.facets()[i].area > 0 && facet_inradius_estimate(K, i) < 3 * cfg.h)
        offending += (offending.empty() ? "" : ",") + std::to_string(i);
    }
    if (!offending.empty())
      throw Error(ErrorCode::UnresolvedFacet,
                  "facets below 3h resolution: " + offending);
  }

  const auto& D = K.spec().directions;
  const auto& y = K.spec().offsets;
  auto [coarse, fine] =
      solve_two_level(D, y, cfg, pexp, initial_radius_hint(K));

  if (method == MeasureMethod::Flux) {
    auto mu_f = flux_masses(K, fine.field, pexp);
    auto mu_c = flux_masses(K, coarse.field, pexp);
    for (int i = 0; i < m; ++i)
      mu_f[i] = std::max(0.0, richardson(mu_f[i], mu_c[i]));
    return mu_f;
  }

  const double base = richardson(fine.capacity, coarse.capacity);
  const double eps = std::max(1e-3, 2 * cfg.h);
  const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  GridConfig cfg2h = with_spacing(cfg, 2 * cfg.h);
  std::vector<double> mu(m, 0.0);
  for (int i = 0; i < m; ++i) {
    // slack halfspaces do not move the body; their derivative is 0
    if (K.facets()[i].area <= 0 && K.facets()[i].offset < y[i] - 1e-9 * scale)
      continue;
    Eigen::VectorXd y2 = y;
    y2[i] += eps;
    auto pc =
        solve_pipeline(D, y2, cfg2h, pexp, &coarse.field, coarse.r_eff, 0);
    auto pf = solve_pipeline(D, y2, cfg, pexp, &fine.field, fine.r_eff, 0);
    const double ci = richardson(pf.capacity, pc.capacity);
    mu[i] = std::max(0.0, (ci - base) / (eps * (pexp - 1.0)));
  }
  return mu;
}

double mixed_capacity(const Polytope& K, const Polytope& L,
                      const GridConfig& cfg, double pexp,
                      MeasureMethod method) {
  auto mu = capacitary_measure(K, cfg, pexp, method);
  double acc = 0;
  for (int i = 0; i < K.spec().count(); ++i)
    if (mu[i] > 0) acc += L.support(K.spec().directions.row(i)) * mu[i];
  return (pexp - 1.0) / (cfg.n - pexp) * acc;
}

double lp_mixed_capacity(const Polytope& K, const Eigen::VectorXd& f, double p,
                         const GridConfig& cfg, double pexp,
                         MeasureMethod method) {
  if (f.size() != K.spec().count())
    throw Error(ErrorCode::InvalidArgument,
                "f must be sampled on K's facet normals");
  if (p < 1.0) throw Error(ErrorCode::InvalidArgument, "p must be >= 1");
  auto mu = capacitary_measure(K, cfg, pexp, method);
  double acc = 0;
  for (int i = 0; i < K.spec().count(); ++i) {
    if (mu[i] <= 0) continue;
    const double h = K.facets()[i].offset;
    if (h <= 0 && p > 1)
      throw Error(ErrorCode::ZeroSupportValue,
                  "zero support at a positive-mass facet");
    if (f[i] <= 0)
      throw Error(ErrorCode::InvalidArgument,
                  "f must be positive on positive-mass facets");
    acc += std::pow(f[i], p) * std::pow(h, 1.0 - p) * mu[i];
  }
  return (pexp - 1.0) / (cfg.n - pexp) * acc;
}

GridConfig scaled_to_body(const GridConfig& base, const Polytope& K,
                          double fill) {
  const double target = base.box_radius / 4.0 * fill;
  const double s = K.circumradius() / target;
  GridConfig cfg = base;
  cfg.h = base.h * s;
  cfg.box_radius = base.box_radius * s;
  return cfg;
}

// ---------------------------------------------------------------------------
// CapacityEngine

CapacityEngine::CapacityEngine(Eigen::MatrixXd directions, GridConfig cfg,
                               double pexp)
    : directions_(std::move(directions)), cfg_(std::move(cfg)), pexp_(pexp) {
  cfg_.validate();
  check_exponent(cfg_.n, pexp_);
}

double CapacityEngine::solve_pair(const Eigen::VectorXd& offsets,
                                  Level& coarse, Level& fine) {
  GridConfig cfg2h = with_spacing(cfg_, 2 * cfg_.h);
  const double hint =
      coarse.valid ? coarse.r_eff : 0.2 * cfg_.box_radius;
  auto pc = solve_pipeline(directions_, offsets, cfg2h, pexp_,
                           coarse.valid ? &coarse.field : nullptr, hint, 1);
  auto pf = solve_pipeline(directions_, offsets, cfg_, pexp_,
                           fine.valid ? &fine.field : &pc.field, pc.r_eff, 0);
  coarse.field = std::move(pc.field);
  coarse.r_eff = pc.r_eff;
  coarse.valid = true;
  fine.field = std::move(pf.field);
  fine.r_eff = pf.r_eff;
  fine.valid = true;
  return richardson(pf.capacity, pc.capacity);
}

double CapacityEngine::capacity(const Eigen::VectorXd& offsets) {
  return solve_pair(offsets, coarse_, fine_);
}

std::pair<double, Eigen::VectorXd> CapacityEngine::capacity_and_masses(
    const Eigen::VectorXd& offsets) {
  const double base = solve_pair(offsets, coarse_, fine_);
  const double eps = std::max(1e-3, 2 * cfg_.h);
  Eigen::VectorXd mu(offsets.size());
  Level pc, pf;
  for (int i = 0; i < offsets.size(); ++i) {
    Eigen::VectorXd y2 = offsets;
    y2[i] += eps;
    pc = coarse_;  // perturbed solves warm-start from the base fields
    pf = fine_;
    const double ci = solve_pair(y2, pc, pf);
    mu[i] = std::max(0.0, (ci - base) / (eps * (pexp_ - 1.0)));
  }
  return {base, mu};
}

}  // namespace capmink
