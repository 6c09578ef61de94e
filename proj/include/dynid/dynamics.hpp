#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <filesystem>
#include <vector>

#include "dynid/chain_model.hpp"
#include "dynid/types.hpp"

namespace dynid {

struct JointState {
  JointVector q;
  JointVector qd;
  JointVector qdd;
};

/// Chain geometry prepared for the recursive algorithms.
class RigidBodyChain {
 public:
  explicit RigidBodyChain(const ChainDescription& chain);

  int dof() const { return dof_; }
  int n_links() const { return static_cast<int>(links_.size()); }
  double gravity() const { return gravity_; }

  struct Link {
    double cos_alpha, sin_alpha, a, d, theta_offset;
    int sign;
    Eigen::Vector3d origin;  // frame origin expressed in the parent frame
  };
  const Link& link(int i) const { return links_[i]; }
  /// Rotation from link frame i to its parent frame at joint angle q.
  Eigen::Matrix3d rotation(int i, double q) const;

 private:
  std::vector<Link> links_;
  int dof_;
  double gravity_;
};

/// Standard parameters in the form used by the recursions.
struct CompiledParams {
  std::vector<Eigen::Matrix3d> inertia;  // about the link frame origin
  std::vector<Eigen::Vector3d> first_moment;
  std::vector<double> mass;
  JointVector rotor;
  JointVector friction;
};

CompiledParams compile(const StandardInertialParams& params, int dof);
CompiledParams compile(const Eigen::VectorXd& standard,
                       const StandardLayout& layout);

/// Recursive Newton-Euler inverse dynamics, including rotor inertia and
/// viscous friction at every axis. Gravity acts along -z of the base frame.
JointVector rnea(const RigidBodyChain& chain, const CompiledParams& params,
                 const JointState& state, double gravity);

/// Composite-rigid-body inertia matrix (rotor inertias on the diagonal).
JointMatrix crba(const RigidBodyChain& chain, const CompiledParams& params,
                 const JointVector& q);

/// Torque contribution of every standard parameter, dof x layout.size().
/// Kinematics are computed once; each column is the backward recursion of a
/// unit parameter.
void full_regressor(const RigidBodyChain& chain, const StandardLayout& layout,
                    const JointState& state, double gravity,
                    Eigen::Ref<Eigen::MatrixXd> out);

JointVector rnea_torque(const ChainDescription& chain,
                        const StandardInertialParams& params,
                        const JointState& state);

/// Base regressor W(q, qd, qdd), dof x mapping.size(), columns in mapping
/// order: W * phi equals the inverse dynamics of expand(phi).
Eigen::MatrixXd regressor(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const JointState& state);

/// Reusable base-regressor evaluator for stacking many samples.
class RegressorEvaluator {
 public:
  RegressorEvaluator(const ChainDescription& chain,
                     const BaseParamMapping& mapping);
  void evaluate(const JointState& state, Eigen::Ref<Eigen::MatrixXd> out,
                bool with_gravity = true) const;
  int dof() const { return body_.dof(); }
  int columns() const { return static_cast<int>(columns_.size()); }

 private:
  RigidBodyChain body_;
  StandardLayout layout_;
  std::vector<int> columns_;
  mutable Eigen::MatrixXd scratch_;
};

/// M(q; phi) assembled from regressor columns at unit acceleration with
/// gravity and velocity removed. Throws if the raw assembly is asymmetric
/// beyond 1e-10 (relative to its largest entry).
JointMatrix inertia_matrix(const ChainDescription& chain,
                           const BaseParamMapping& mapping,
                           const Eigen::VectorXd& phi, const JointVector& q);

/// M(q; e_k) for every base parameter k; M(q; phi) = sum_k phi_k * basis[k].
std::vector<JointMatrix> inertia_basis(const ChainDescription& chain,
                                       const BaseParamMapping& mapping,
                                       const JointVector& q);

/// Dynamics of a base-parameter vector, evaluated through its standard
/// expansion with the O(n) / O(n^2) recursions.
class DynamicsModel {
 public:
  DynamicsModel(const ChainDescription& chain, const BaseParamMapping& mapping,
                const Eigen::VectorXd& phi);

  int dof() const { return body_.dof(); }
  JointMatrix mass_matrix(const JointVector& q) const;
  JointVector inverse_dynamics(const JointVector& q, const JointVector& qd,
                               const JointVector& qdd) const;
  /// h(q, qd) = Coriolis + gravity + friction, i.e. inverse dynamics at qdd=0.
  JointVector bias(const JointVector& q, const JointVector& qd) const;
  /// qdd = M^-1 (tau - h). Throws InfeasibleSimulationError if M is not PD.
  JointVector forward(const JointVector& q, const JointVector& qd,
                      const JointVector& tau) const;

 private:
  RigidBodyChain body_;
  CompiledParams params_;
};

JointVector forward_accel(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const Eigen::VectorXd& phi, const JointVector& q,
                          const JointVector& qd, const JointVector& tau);

double min_eigenvalue(const JointMatrix& m);

/// Cartesian grid over per-link intervals; decoupled axes sit at zero.
struct AuditDomain {
  std::vector<JointInterval> intervals;
  int points_per_joint = 5;
};

AuditDomain default_audit_domain(const ChainDescription& chain,
                                 int points_per_joint = 5);

struct PoseEigenvalue {
  double min_eigenvalue;
  std::size_t index;  // position in the grid enumeration
  JointVector pose;
};

struct AuditResult {
  double min_eigenvalue = 0.0;
  JointVector argmin_pose;
  std::size_t poses = 0;
  std::vector<PoseEigenvalue> worst;  // ascending, at most worst_k entries
};

std::size_t grid_size(const AuditDomain& domain);
JointVector grid_pose(const AuditDomain& domain, std::size_t index, int dof);

/// Deterministic scan of lambda_min(M(q; phi)) over the audit grid.
AuditResult min_eig_audit(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const Eigen::VectorXd& phi, const AuditDomain& domain,
                          int worst_k = 0);

void write_worst_poses_csv(const AuditResult& result,
                           const std::filesystem::path& path);

}  // namespace dynid
