#include "dynid/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "dynid/errors.hpp"
#include "dynid/text.hpp"

namespace dynid {

Biquad Biquad::butterworth_lowpass(double cutoff_hz, double sample_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 * sample_hz))
    throw ConfigError("cutoff must lie in (0, Nyquist)");
  const double k = std::tan(kPi * cutoff_hz / sample_hz);
  const double r2 = std::sqrt(2.0);
  const double norm = 1.0 / (1.0 + r2 * k + k * k);
  Biquad f;
  f.b0 = k * k * norm;
  f.b1 = 2.0 * f.b0;
  f.b2 = f.b0;
  f.a1 = 2.0 * (k * k - 1.0) * norm;
  f.a2 = (1.0 - r2 * k + k * k) * norm;
  return f;
}

std::complex<double> Biquad::response(double freq_hz, double sample_hz) const {
  const std::complex<double> z1 =
      std::polar(1.0, -2.0 * kPi * freq_hz / sample_hz);
  return (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1);
}

namespace {

// Direct form II transposed, state initialized to the steady state of x[0].
void lfilter(const Biquad& f, std::vector<double>& x) {
  const double dc = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  double z1 = (dc - f.b0) * x.front();
  double z2 = (f.b2 - f.a2 * dc) * x.front();
  for (double& v : x) {
    const double in = v;
    const double y = f.b0 * in + z1;
    z1 = f.b1 * in - f.a1 * y + z2;
    z2 = f.b2 * in - f.a2 * y;
    v = y;
  }
}

// Value at sample 0 of the least-squares line through x.
double edge_fit(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  const double tm = 0.5 * (n - 1);
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (i - tm) * x[i];
    sxx += (i - tm) * (i - tm);
  }
  return x.mean() - tm * (sxx > 0.0 ? sxy / sxx : 0.0);
}

}  // namespace

Eigen::VectorXd filtfilt(const Biquad& f, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  if (n <= 9) throw TooShortError("filtfilt needs more than 9 samples");
  // Pad until the impulse response has decayed by 1e-6 (pole radius sqrt(a2)).
  int pad = 9;
  const double radius = std::sqrt(std::abs(f.a2));
  if (radius > 0.0 && radius < 1.0)
    pad = std::max(pad, static_cast<int>(std::ceil(std::log(1e-6) / std::log(radius))));
  pad = std::min(pad, n - 1);
  // A zero-phase filter reproduces the centre of an odd extension exactly, so
  // reflecting about a raw noisy endpoint would leave that sample unfiltered.
  // Reflect about a line fitted over one filter time constant instead.
  int window = 2;
  if (radius > 0.0 && radius < 1.0)
    window = std::max(window, static_cast<int>(std::ceil(1.0 / (1.0 - radius))));
  window = std::min(window, n);
  const double head = edge_fit(x.head(window));
  const double tail = edge_fit(x.tail(window).reverse());
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * head - x[i]);
  for (int i = 0; i < n; ++i) ext.push_back(x[i]);
  for (int i = n - 2; i >= n - 1 - pad; --i) ext.push_back(2.0 * tail - x[i]);
  lfilter(f, ext);
  std::reverse(ext.begin(), ext.end());
  lfilter(f, ext);
  std::reverse(ext.begin(), ext.end());
  return Eigen::Map<Eigen::VectorXd>(ext.data() + pad, n);
}

double antialias_cutoff_hz(double ts_ms) { return 0.4 / (2.0 * ts_ms * 1e-3); }

DecimatedLog lowpass_and_resample(const SimLog& log, double ts_ms) {
  if (!(ts_ms > 0.0)) throw ConfigError("sampling interval must be positive");
  const double ratio = ts_ms * 1e-3 / log.dt;
  const int step = static_cast<int>(std::lround(ratio));
  if (step < 1 || std::abs(ratio - step) > 1e-6)
    throw ConfigError("sampling interval must be a multiple of the log period");
  const int n = log.samples();
  const int kept = n > 0 ? (n - 1) / step + 1 : 0;
  if (kept < 10)
    throw TooShortError(log.label + ": " + std::to_string(kept) +
                        " samples at Ts=" + text::format_double(ts_ms) +
                        " ms, need 10");
  DecimatedLog out;
  out.label = log.label;
  out.ts = step * log.dt;
  out.standard_interval = ts_ms == 10 || ts_ms == 20 || ts_ms == 40 || ts_ms == 80;
  out.q.resize(kept, log.dof());
  out.tau.resize(kept, log.dof());
  const double fs = 1.0 / log.dt;
  const double fc = antialias_cutoff_hz(ts_ms);
  // Each pass is widened so the forward-backward product is -3 dB at fc:
  // |H|^4 = 1/2 for a second-order Butterworth section.
  const double pass_fc = fc / std::pow(std::sqrt(2.0) - 1.0, 0.25);
  const bool filter = step > 1 && pass_fc < 0.5 * fs;
  const Biquad f = filter ? Biquad::butterworth_lowpass(pass_fc, fs) : Biquad{};
  for (int j = 0; j < log.dof(); ++j) {
    const Eigen::VectorXd q = filter ? filtfilt(f, log.q.col(j)) : Eigen::VectorXd(log.q.col(j));
    const Eigen::VectorXd t = filter ? filtfilt(f, log.tau.col(j)) : Eigen::VectorXd(log.tau.col(j));
    for (int k = 0; k < kept; ++k) {
      out.q(k, j) = q[k * step];
      out.tau(k, j) = t[k * step];
    }
  }
  return out;
}

void differentiate(const Eigen::MatrixXd& q, double ts, Eigen::MatrixXd& qd,
                   Eigen::MatrixXd& qdd) {
  const int n = static_cast<int>(q.rows());
  if (n < 5) throw TooShortError("differentiation needs at least 5 samples");
  qd.resize(n, q.cols());
  qdd.resize(n, q.cols());
  const double h = ts, h2 = ts * ts;
  for (int k = 1; k < n - 1; ++k) {
    qd.row(k) = (q.row(k + 1) - q.row(k - 1)) / (2.0 * h);
    qdd.row(k) = (q.row(k + 1) - 2.0 * q.row(k) + q.row(k - 1)) / h2;
  }
  qd.row(0) = (-3.0 * q.row(0) + 4.0 * q.row(1) - q.row(2)) / (2.0 * h);
  qd.row(n - 1) =
      (3.0 * q.row(n - 1) - 4.0 * q.row(n - 2) + q.row(n - 3)) / (2.0 * h);
  qdd.row(0) =
      (2.0 * q.row(0) - 5.0 * q.row(1) + 4.0 * q.row(2) - q.row(3)) / h2;
  qdd.row(n - 1) = (2.0 * q.row(n - 1) - 5.0 * q.row(n - 2) +
                    4.0 * q.row(n - 3) - q.row(n - 4)) /
                   h2;
}

void differentiate(DecimatedLog& log) {
  differentiate(log.q, log.ts, log.qd, log.qdd);
}

RegressionProblem stack(const ChainDescription& chain,
                        const BaseParamMapping& mapping,
                        const Eigen::MatrixXd& q, const Eigen::MatrixXd& qd,
                        const Eigen::MatrixXd& qdd, const Eigen::MatrixXd& tau) {
  const int dof = chain.dof();
  const int n = static_cast<int>(q.rows());
  if (q.cols() != dof || qd.rows() != n || qdd.rows() != n || tau.rows() != n ||
      qd.cols() != dof || qdd.cols() != dof || tau.cols() != dof)
    throw DimensionError("log channels disagree with the chain");
  RegressionProblem p;
  p.dof = dof;
  p.w.resize(static_cast<Eigen::Index>(n) * dof, mapping.size());
  p.tau.resize(static_cast<Eigen::Index>(n) * dof);
  RegressorEvaluator ev(chain, mapping);
  JointState s{JointVector(dof), JointVector(dof), JointVector(dof)};
  for (int k = 0; k < n; ++k) {
    s.q = q.row(k).transpose();
    s.qd = qd.row(k).transpose();
    s.qdd = qdd.row(k).transpose();
    ev.evaluate(s, p.w.middleRows(k * dof, dof));
    p.tau.segment(k * dof, dof) = tau.row(k).transpose();
  }
  return p;
}

RegressionProblem stack(const ChainDescription& chain,
                        const BaseParamMapping& mapping,
                        const DecimatedLog& log) {
  if (log.qd.rows() != log.q.rows() || log.qdd.rows() != log.q.rows())
    throw DimensionError(log.label + ": derivative channels missing");
  RegressionProblem p = stack(chain, mapping, log.q, log.qd, log.qdd, log.tau);
  p.label = log.label;
  p.ts_ms = log.ts * 1e3;
  return p;
}

RegressionProblem concatenate(const std::vector<RegressionProblem>& parts,
                              const std::string& label) {
  if (parts.empty()) throw DimensionError("nothing to concatenate");
  RegressionProblem out;
  out.label = label;
  out.dof = parts.front().dof;
  out.ts_ms = parts.front().ts_ms;
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.dof != out.dof || p.w.cols() != parts.front().w.cols())
      throw DimensionError("problems disagree in shape");
    rows += p.w.rows();
  }
  out.w.resize(rows, parts.front().w.cols());
  out.tau.resize(rows);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.w.middleRows(r, p.w.rows()) = p.w;
    out.tau.segment(r, p.w.rows()) = p.tau;
    r += p.w.rows();
  }
  return out;
}

void RegressionProblem::write_csv(const std::filesystem::path& w_path,
                                  const std::filesystem::path& tau_path) const {
  std::string ws, ts;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (j) ws += ",";
      ws += text::format_double(w(i, j));
    }
    ws += "\n";
    ts += text::format_double(tau[i]) + "\n";
  }
  text::write_file(w_path, ws);
  text::write_file(tau_path, ts);
}

}  // namespace dynid
