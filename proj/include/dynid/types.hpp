#pragma once

#include <Eigen/Core>

namespace dynid {

/// Upper bound on axes per chain. Joint-space quantities are stack allocated
/// up to this size so the simulation inner loop never touches the heap.
inline constexpr int kMaxDof = 12;

using JointVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDof, 1>;
using JointMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDof, kMaxDof>;

struct JointInterval {
  double lower = 0.0;
  double upper = 0.0;
};

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace dynid
