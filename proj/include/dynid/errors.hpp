#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dynid/types.hpp"

namespace dynid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Raised when a regressor or stacked problem loses rank. `details` names the
/// offending columns or the dominant entries of near-null directions.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::vector<std::string> details)
      : Error(what), details_(std::move(details)) {}
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  std::vector<std::string> details_;
};

/// Forward dynamics requested at a pose where M(q; phi) is not positive definite.
class InfeasibleSimulationError : public Error {
 public:
  InfeasibleSimulationError(const std::string& what, double min_eigenvalue,
                            JointVector pose)
      : Error(what), min_eigenvalue_(min_eigenvalue), pose_(std::move(pose)) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }
  const JointVector& pose() const noexcept { return pose_; }

 private:
  double min_eigenvalue_;
  JointVector pose_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class TrajectoryError : public Error {
 public:
  using Error::Error;
};

class TooShortError : public Error {
 public:
  using Error::Error;
};

class LadderExhaustedError : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynid
