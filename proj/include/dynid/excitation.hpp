#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynid/types.hpp"

namespace dynid {

/// Rest-to-rest bounded-jerk profile over a unit path parameter s in [0, 1].
/// Seven phases (jerk +J, 0, -J, cruise, -J, 0, +J); phases that cannot be
/// reached under the caps collapse to zero length.
class SCurve {
 public:
  SCurve() = default;
  /// Caps apply to s itself: ds/dt <= v, |d2s/dt2| <= a, |d3s/dt3| <= j.
  SCurve(double v, double a, double j);

  double duration() const { return duration_; }
  bool has_cruise() const { return cruise_ > 0.0; }
  double peak_velocity() const { return peak_velocity_; }
  double peak_acceleration() const { return peak_acceleration_; }
  void evaluate(double t, double& s, double& sd, double& sdd) const;

 private:
  double jerk_ = 0.0;
  double jerk_time_ = 0.0;
  double accel_time_ = 0.0;
  double cruise_ = 0.0;
  double duration_ = 0.0;
  double peak_velocity_ = 0.0;
  double peak_acceleration_ = 0.0;
  double end_position_ = 1.0;
  // phase start states
  std::vector<double> t0_, s0_, v0_, a0_, j_;
};

/// Per-axis caps at speed factor 1. A speed factor k scales velocity by k,
/// acceleration by k^2 and jerk by k^3, so segment durations scale by 1/k.
struct MotionLimits {
  JointVector velocity;
  JointVector acceleration;
  JointVector jerk;
};

using Waypoints = std::vector<JointVector>;

/// posture -> posture - a e_j -> posture + a e_j -> posture (joint zero based).
Waypoints single_joint_primitive(const JointVector& posture, int joint,
                                 double amplitude);
/// Same sequence with delta = s_j a_j e_j + s_{j+1} a_{j+1} e_{j+1}.
Waypoints adjacent_pair_primitive(const JointVector& posture, int joint,
                                  double amplitude, int sign,
                                  double next_amplitude, int next_sign);

struct SampledTrajectory {
  std::string label;
  double dt = 0.001;
  Eigen::MatrixXd q, qd, qdd;  // samples x axes [rad, rad/s, rad/s^2]

  int samples() const { return static_cast<int>(q.rows()); }
  int dof() const { return static_cast<int>(q.cols()); }
  double duration() const { return dt * (samples() - 1); }
  double time(int k) const { return dt * k; }
  std::string to_csv() const;
};

/// Continuous joint-space plan made of synchronized S-curve moves and holds.
class TrajectoryPlan {
 public:
  explicit TrajectoryPlan(JointVector start);

  void move_to(const JointVector& target, double speed_factor,
               const MotionLimits& limits);
  void hold(double seconds);

  int dof() const { return static_cast<int>(start_.size()); }
  double duration() const { return duration_; }
  int segments() const { return static_cast<int>(segments_.size()); }
  const JointVector& end() const { return end_; }
  void evaluate(double t, JointVector& q, JointVector& qd,
                JointVector& qdd) const;
  SampledTrajectory sample(double dt, const std::string& label) const;

 private:
  struct Segment {
    double start, duration;
    JointVector from, delta;
    SCurve profile;
    bool moving;
  };
  JointVector start_, end_;
  std::vector<Segment> segments_;
  double duration_ = 0.0;
};

/// Samples an S-curve path through the waypoints at the control period.
/// Every segment starts and ends at rest; `dwell` seconds are held at each
/// interior waypoint.
SampledTrajectory interpolate(const Waypoints& waypoints, double speed_factor,
                              const MotionLimits& limits,
                              double control_period, double dwell = 0.0);

/// One primitive of a trajectory: offsets around a posture, swept
/// posture -> posture - delta -> posture + delta -> posture.
struct PrimitiveSpec {
  std::string name;     // e.g. "J4" or "J3+J4-"
  std::string posture;  // preset name
  JointVector delta;    // [rad]
  double speed_factor = 1.0;
};

struct TrajectorySpec {
  std::string label;
  std::string family;  // PA PB PC AP AG V
  std::string description;
  bool validation = false;
  std::vector<PrimitiveSpec> primitives;
};

struct CatalogConfig {
  double control_period = 0.001;
  double dwell = 0.0;
  std::map<std::string, JointVector> postures;  // including primed variants
  JointVector amplitude;                        // [rad] per axis
  std::vector<JointInterval> limits;            // per axis [rad]
  MotionLimits caps;
  std::map<std::string, std::vector<double>> speed_sets;
  std::vector<std::string> joint_group;  // speed-set name per axis
  int wrist_joint = 5;                   // zero based, the primed offset axis
  double wrist_offset = kPi / 2;
  /// Optional global multiplier on all speed factors (compressed test runs).
  double speed_scale = 1.0;

  int dof() const { return static_cast<int>(amplitude.size()); }
  double speed(int joint, int level) const;
};

CatalogConfig parse_catalog_config(const nlohmann::json& doc);
CatalogConfig load_catalog_config(const std::filesystem::path& path);

/// Realizes a spec as a continuous plan starting and ending at rest.
TrajectoryPlan realize(const TrajectorySpec& spec, const CatalogConfig& config);

struct Catalog {
  std::vector<TrajectorySpec> identification;
  std::vector<TrajectorySpec> validation;
  const TrajectorySpec& find(const std::string& label) const;
};

/// 33 posture-grid trajectories (PA/PB/PC 01-11), AP01-05, AG01-02 and the
/// held-out V01-V03. Amplitudes are clipped to the joint limits around each
/// posture; a primitive whose clipped offset vanishes is dropped.
Catalog build_catalog(const CatalogConfig& config);

}  // namespace dynid
