#pragma once

#include <Eigen/Core>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "dynid/chain_model.hpp"
#include "dynid/plant_sim.hpp"

namespace dynid {

/// Second-order Butterworth low-pass section (bilinear transform with
/// frequency pre-warping), normalized to unit DC gain.
struct Biquad {
  double b0, b1, b2, a1, a2;
  static Biquad butterworth_lowpass(double cutoff_hz, double sample_hz);
  std::complex<double> response(double freq_hz, double sample_hz) const;
};

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions; the padding spans the filter settling
/// time (capped at n - 1) and reflects about a line fitted over one filter
/// time constant at each end. Requires more than 9 samples.
Eigen::VectorXd filtfilt(const Biquad& f, const Eigen::VectorXd& x);

struct DecimatedLog {
  std::string label;
  double ts = 0.0;     // [s]
  Eigen::MatrixXd q;   // samples x axes
  Eigen::MatrixXd qd;  // filled by differentiate()
  Eigen::MatrixXd qdd;
  Eigen::MatrixXd tau;
  bool standard_interval = true;  // Ts in {10, 20, 40, 80} ms

  int samples() const { return static_cast<int>(q.rows()); }
  double time(int k) const { return ts * k; }
};

/// Cutoff of the anti-alias filter for a target interval: 0.4 x Nyquist.
double antialias_cutoff_hz(double ts_ms);

/// Filters q and the measured torque channel, then keeps every
/// (Ts / dt)-th sample starting at t = 0. Throws TooShortError when fewer
/// than 10 target samples remain.
DecimatedLog lowpass_and_resample(const SimLog& log, double ts_ms);

/// Central differences on the grid; second-order one-sided stencils at the
/// ends. Needs at least 5 samples.
void differentiate(const Eigen::MatrixXd& q, double ts, Eigen::MatrixXd& qd,
                   Eigen::MatrixXd& qdd);
void differentiate(DecimatedLog& log);

struct RegressionProblem {
  std::string label;
  double ts_ms = 0.0;
  int dof = 0;
  Eigen::MatrixXd w;    // (samples * dof) x parameters
  Eigen::VectorXd tau;  // samples * dof

  int samples() const { return dof ? static_cast<int>(w.rows()) / dof : 0; }
  /// Rows of one sample, in stacking order.
  Eigen::MatrixXd block(int sample) const { return w.middleRows(sample * dof, dof); }
  void write_csv(const std::filesystem::path& w_path,
                 const std::filesystem::path& tau_path) const;
};

RegressionProblem stack(const ChainDescription& chain,
                        const BaseParamMapping& mapping,
                        const DecimatedLog& log);
RegressionProblem stack(const ChainDescription& chain,
                        const BaseParamMapping& mapping,
                        const Eigen::MatrixXd& q, const Eigen::MatrixXd& qd,
                        const Eigen::MatrixXd& qdd, const Eigen::MatrixXd& tau);

/// Row-wise concatenation of several problems.
RegressionProblem concatenate(const std::vector<RegressionProblem>& parts,
                              const std::string& label);

}  // namespace dynid
