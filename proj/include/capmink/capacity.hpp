#pragma once

#include <optional>
#include <vector>

#include "capmink/grid.hpp"
#include "capmink/polytope.hpp"

namespace capmink {

struct CapacityResult {
  /// Reported capacity: the first-order Richardson combination
  /// 2 C_h - C_2h of the h and 2h solves. The raw discrete energies sit
  /// in raw_fine / raw_coarse; their gap is the error estimate.
  double value = 0.0;
  std::vector<double> energy_history;  ///< per-sweep energies, final solve
  double error_estimate = 0.0;         ///< |C_h - C_2h|
  std::optional<std::vector<double>> facet_masses;  ///< per facet index
  double pexp = 0.0;
  double raw_fine = 0.0;    ///< discrete energy at spacing h
  double raw_coarse = 0.0;  ///< discrete energy at spacing 2h
};

enum class MeasureMethod { Variational, Flux };

/// Exact capacity of the radius-r ball: n omega_n ((n-p)/(p-1))^{p-1} r^{n-p}.
double ball_capacity_exact(int n, double pexp, double r);

/// Capacity-equivalent ball radius (inverse of ball_capacity_exact in r).
double capacity_radius(int n, double pexp, double capacity);

/// Minimizer of the discrete p-Dirichlet energy with u = 1 on the body
/// and truncation handled per cfg.boundary_mode. Coarse-to-fine warm
/// starts and, in asymptotic mode, far-field recalibration run inside.
GridField equilibrium_potential(const Polytope& K, const GridConfig& cfg,
                                double pexp);

/// Discrete capacity at spacing h with an h-vs-2h error estimate.
CapacityResult p_capacity(const Polytope& K, const GridConfig& cfg,
                          double pexp);

/// Per-facet capacitary masses, aligned with K's facet list; slack
/// directions get 0. `require_resolved` enforces the facet-inradius >=
/// 3h resolution guard (UnresolvedFacet); aggregate uses may disable it.
std::vector<double> capacitary_measure(const Polytope& K,
                                       const GridConfig& cfg, double pexp,
                                       MeasureMethod method,
                                       bool require_resolved = false);

/// (p-1)/(n-p) sum_i h_L(xi_i) mu_i with masses from K.
double mixed_capacity(const Polytope& K, const Polytope& L,
                      const GridConfig& cfg, double pexp,
                      MeasureMethod method = MeasureMethod::Variational);

/// (p-1)/(n-p) sum_i f_i^p h_i^{1-p} mu_i for samples f on K's normals.
double lp_mixed_capacity(const Polytope& K, const Eigen::VectorXd& f, double p,
                         const GridConfig& cfg, double pexp,
                         MeasureMethod method = MeasureMethod::Variational);

/// cfg with (h, R) scaled so the body occupies the same lattice fraction
/// as a circumradius-(R/4 * fill) body under the base config. Keeps the
/// discrete problem similar across dilates of the same shape.
GridConfig scaled_to_body(const GridConfig& base, const Polytope& K,
                          double fill = 0.95);

/// Warm-started capacity evaluations for a family of bodies sharing one
/// direction set (the solver's iterates live here). One instance owns a
/// fixed lattice; bodies are passed as offset vectors.
class CapacityEngine {
 public:
  CapacityEngine(Eigen::MatrixXd directions, GridConfig cfg, double pexp);

  double capacity(const Eigen::VectorXd& offsets);

  /// Capacity plus per-direction variational masses (forward differences
  /// with step max(1e-3, 2h) on the shared lattice, warm-started).
  std::pair<double, Eigen::VectorXd> capacity_and_masses(
      const Eigen::VectorXd& offsets);

  const GridConfig& config() const { return cfg_; }
  double exponent() const { return pexp_; }

 private:
  struct Level {
    GridField field;
    double r_eff = 0.0;
    bool valid = false;
  };
  double solve_pair(const Eigen::VectorXd& offsets, Level& coarse,
                    Level& fine);

  Eigen::MatrixXd directions_;
  GridConfig cfg_;
  double pexp_;
  Level coarse_, fine_;
};

/// Sweep/energy kernels, exposed for the serial-vs-parallel comparison
/// tests and the benchmark target. The parallel variants use multicolor
/// Gauss-Seidel (2 colors for pexp = 2, 2^n otherwise) and are
/// deterministic for any thread count.
namespace kernels {
void gs_sweep_serial(GridField& field, double pexp, double omega);
void gs_sweep_parallel(GridField& field, double pexp, double omega);
double energy_serial(const GridField& field, double pexp);
double energy_parallel(const GridField& field, double pexp);
}  // namespace kernels

}  // namespace capmink
