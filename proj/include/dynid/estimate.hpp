#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dynid/chain_model.hpp"
#include "dynid/dynamics.hpp"
#include "dynid/plant_sim.hpp"
#include "dynid/preprocess.hpp"

namespace dynid {

/// Least squares via column-pivoted QR. Throws RankDeficiencyError naming the
/// dominant entries of the near-null directions when the regressor loses rank
/// (singular values below 1e-8 * sigma_max).
Eigen::VectorXd ols_solve(const Eigen::MatrixXd& w, const Eigen::VectorXd& tau,
                          const std::vector<std::string>& names = {});
Eigen::VectorXd ols_solve(const RegressionProblem& problem,
                          const std::vector<std::string>& names = {});

/// sigma_max / sigma_min; infinity when sigma_min is zero.
double condition_number(const Eigen::MatrixXd& w);
double condition_number(const RegressionProblem& problem);

/// All-pose PD audit bound to one chain, mapping and grid.
class PdAuditor {
 public:
  PdAuditor(ChainDescription chain, BaseParamMapping mapping,
            AuditDomain domain);

  AuditResult audit(const Eigen::VectorXd& phi, int worst_k = 0) const;
  bool is_pd(const Eigen::VectorXd& phi, double margin = 0.0) const;
  std::vector<JointMatrix> basis(const JointVector& q) const;

  const ChainDescription& chain() const { return chain_; }
  const BaseParamMapping& mapping() const { return mapping_; }
  const AuditDomain& domain() const { return domain_; }

 private:
  ChainDescription chain_;
  BaseParamMapping mapping_;
  AuditDomain domain_;
};

enum class Route { kOlsClie, kOlsSdpClie };
std::string_view route_name(Route r);  // "O-C" / "O-S-C"

/// PD over the audit grid passes straight to CLIE; otherwise project first.
Route pd_route(const AuditResult& audit);
Route pd_route(const Eigen::VectorXd& phi, const PdAuditor& auditor);

/// One LMI block: M(x) = sum_k x_k basis[k]; constraint M(x) >= margin * I.
struct LmiBlock {
  std::vector<JointMatrix> basis;
};

struct LmiOptions {
  double gap_abs = 1e-14;
  double gap_rel = 1e-10;
  double mu = 20.0;
  int max_outer = 80;
  int max_newton = 1000;
};

struct LmiSolution {
  Eigen::VectorXd x;
  bool feasible = false;
  int newton_steps = 0;
};

/// min 0.5 ||x - x0||^2 s.t. M_i(x) >= margin * I for every block, by a
/// log-det barrier interior-point method with a phase-I search when x0 is
/// not strictly feasible. `feasible` is false when no strictly feasible
/// point exists (within the phase-I radius).
LmiSolution project_lmi(const std::vector<LmiBlock>& blocks,
                        const Eigen::VectorXd& x0, double margin,
                        const LmiOptions& options = {});

struct SdpOptions {
  std::vector<double> ladder{0.001, 0.002, 0.005, 0.01};
  int initial_poses = 64;
  int poses_per_round = 64;
  int max_rounds = 40;
  double verify_tol = 1e-9;
  LmiOptions lmi;
};

struct SdpResult {
  Eigen::VectorXd phi;
  double margin = 0.0;
  double min_eigenvalue = 0.0;  // full-grid audit of phi
  int rounds = 0;
  int constraint_poses = 0;
  bool unchanged = false;  // anchor already feasible
};

/// Projection at one margin with constraint exchange; empty when the margin
/// cannot be verified.
std::optional<SdpResult> project_at_margin(const Eigen::VectorXd& phi0,
                                           double margin,
                                           const PdAuditor& auditor,
                                           const SdpOptions& options = {});

/// Tries the ladder in ascending order and returns the first verified
/// projection. Throws LadderExhaustedError otherwise.
SdpResult sdp_project(const Eigen::VectorXd& phi0, const PdAuditor& auditor,
                      const SdpOptions& options = {});

/// Zero-margin projection anchored at a refined estimate; returns the anchor
/// unchanged when it already passes the audit.
SdpResult pd_rescue(const Eigen::VectorXd& phi, const PdAuditor& auditor,
                    const SdpOptions& options = {});

struct Bounds {
  Eigen::VectorXd lower, upper;
};

/// Box of half-width 100 |phi0| around zero (floor `min_half_width`); rotor
/// inertias and frictions are held above `positive_floor`.
Bounds clie_bounds(const Eigen::VectorXd& phi0,
                   const std::vector<std::string>& names,
                   double min_half_width = 1e-4,
                   double positive_floor = 1e-6);

struct ClieOptions {
  int max_iterations = 200;
  double lambda0 = 1e-3;
  double jacobian_step = 1e-4;
  double jacobian_floor = 1e-3;  // step = jacobian_step * max(|phi|, floor)
  double atol = 1e-8;            // RMS residual accepted without iterating
  double ftol = 1e-10;           // relative cost decrease
  double xtol = 1e-10;           // relative step size
  double failure_residual = 1e3;  // per-entry residual for failed simulations
  /// Damping uses max(diag(J^T J), damping_floor * max diag) in seed-scaled
  /// variables.
  double damping_floor = 1e-3;
};

/// Measured record and simulation setup for one (trajectory, Ts) case.
struct ClieCase {
  const ChainDescription* chain = nullptr;
  const BaseParamMapping* mapping = nullptr;
  const SampledTrajectory* reference = nullptr;
  const ControllerGains* gains = nullptr;
  const PlantConfig* plant = nullptr;
  const DecimatedLog* measured = nullptr;  // filtered and resampled record
  double ts_ms = 40.0;
};

/// Residual vector: resampled ideal-mode simulated command torque minus the
/// resampled measured torque, stacked sample-major. Throws on simulation
/// failure.
Eigen::VectorXd clie_residual(const ClieCase& c, const Eigen::VectorXd& phi);

struct ClieResult {
  Eigen::VectorXd phi;
  double residual_rms = 0.0;
  double initial_rms = 0.0;
  int iterations = 0;
  int simulations = 0;
  bool converged = false;
  double runtime_s = 0.0;
  std::vector<double> cost_history;  // accepted costs, non-increasing
};

/// Bounded Levenberg-Marquardt on the closed-loop input error. Refuses a
/// non-PD seed (EstimationError).
ClieResult clie_refine(const ClieCase& c, const Eigen::VectorXd& phi_init,
                       const Bounds& bounds, const PdAuditor& auditor,
                       const ClieOptions& options = {});

/// Generic bounded LM used by clie_refine; exposed for testing.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
ClieResult bounded_levenberg_marquardt(const ResidualFn& residual,
                                       const Eigen::VectorXd& x0,
                                       const Bounds& bounds,
                                       const ClieOptions& options);

/// One (trajectory, Ts) case as it went through routing and refinement.
struct RouteRecord {
  std::string label;
  double ts_ms = 0.0;
  double kappa = 0.0;
  bool ols_pd = false;
  double ols_min_eigenvalue = 0.0;
  Route route = Route::kOlsClie;
  std::optional<double> eps_pd;  // present iff route is O-S-C
  Eigen::VectorXd phi_ols;
  std::optional<Eigen::VectorXd> phi_sdp;
  Eigen::VectorXd phi_clie;      // empty when CLIE was not run
  double clie_runtime_s = 0.0;
  double clie_residual = 0.0;    // [N m] RMS
  int clie_iterations = 0;
  bool clie_converged = false;
  std::string status = "ok";     // anything else marks a failed case

  bool ok() const { return status == "ok"; }
  bool has_clie() const { return phi_clie.size() > 0; }
};

/// Columns Tr, Ts_ms, kappa, PD, Route, eps_PD, t_CLIE_s, status.
std::string routing_csv(const std::vector<RouteRecord>& records);

}  // namespace dynid
