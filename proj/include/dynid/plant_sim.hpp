#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynid/chain_model.hpp"
#include "dynid/dynamics.hpp"
#include "dynid/excitation.hpp"

namespace dynid {

/// Per-axis gains of the fixed feedforward + PD realization controller.
struct ControllerGains {
  JointVector kp;     // [1/s^2]
  JointVector kv;     // [1/s]
  JointVector m_hat;  // realization inertia [kg m^2]
  JointVector d_hat;  // realization damping [N m s/rad]
  double t_f = 0.002;  // pseudo-differentiation time constant [s]
};

struct PlantConfig {
  double dead_time = 0.0015;
  double control_period = 0.001;
  double integration_step = 0.00025;
  int encoder_bits = 12;
  JointVector torque_constants;  // [N m/A] per axis
  double torque_noise_std = 0.0;  // [N m]
  double current_lsb = 0.0;       // [A]; 0 disables current quantization
  double velocity_bound = 50.0;   // [rad/s], divergence threshold
  double torque_clamp = 0.0;      // [N m]; 0 disables
  double kp = 400.0;
  double kv = 40.0;
  double t_f = 0.002;

  double encoder_step() const;
  int substeps() const;
};

PlantConfig parse_plant_config(const nlohmann::json& doc, int dof);

/// Torque constants of the CRANE-X7 actuators: XM540-W270 on axis 2,
/// XM430-W350 elsewhere.
JointVector default_torque_constants(int dof);

/// Current [A] to torque [N m] for a zero-based axis.
double torque_from_current(double current, int axis,
                           const JointVector& torque_constants);

/// Bilinear discretization of s / (1 + t_f s), one instance per signal.
class PseudoDifferentiator {
 public:
  PseudoDifferentiator(double t_f, double dt);
  /// Sets the input history to x so a constant input yields zero output.
  void reset(double x);
  double step(double x);

 private:
  double gain_, feedback_;
  double x_prev_ = 0.0, y_prev_ = 0.0;
};

std::vector<double> pseudo_diff(const std::vector<double>& samples, double t_f,
                                double dt);

JointVector ffpd_command(const ControllerGains& gains, const JointVector& q_ref,
                         const JointVector& qd_ref, const JointVector& qdd_ref,
                         const JointVector& q_meas, const JointVector& qd_hat);

/// M_hat from the diagonal of M(q_nominal; phi), D_hat from the FV entries.
ControllerGains default_gains(const ChainDescription& chain,
                              const BaseParamMapping& mapping,
                              const Eigen::VectorXd& phi,
                              const PlantConfig& config);

struct SimLog {
  std::string label;
  double dt = 0.001;
  Eigen::MatrixXd q;    // measured joint angles (quantized when enabled)
  Eigen::MatrixXd u;    // commanded torque
  Eigen::MatrixXd tau;  // measured torque channel (current derived)

  int samples() const { return static_cast<int>(q.rows()); }
  int dof() const { return static_cast<int>(q.cols()); }
  double time(int k) const { return dt * k; }
  std::string to_csv() const;
  static SimLog from_csv(std::string_view text, std::string label = "");
};

struct Imperfections {
  bool quantization = true;
  bool dead_time = true;
  bool noise = true;
  static Imperfections none() { return {false, false, false}; }
  static Imperfections all() { return {true, true, true}; }
};

/// Closed-loop run of the FF+PD controller on the plant model. The controller
/// runs every control period; between ticks the forward dynamics are
/// integrated with Heun steps, with the applied torque held per substep.
/// Throws InfeasibleSimulationError or DivergenceError.
SimLog simulate_closed_loop(const DynamicsModel& plant,
                            const SampledTrajectory& reference,
                            const ControllerGains& gains,
                            const PlantConfig& config,
                            const Imperfections& imperfections,
                            std::uint64_t seed = 0);

SimLog simulate_closed_loop(const ChainDescription& chain,
                            const BaseParamMapping& mapping,
                            const Eigen::VectorXd& phi_plant,
                            const SampledTrajectory& reference,
                            const ControllerGains& gains,
                            const PlantConfig& config,
                            const Imperfections& imperfections,
                            std::uint64_t seed = 0);

}  // namespace dynid
