#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynid/errors.hpp"
#include "dynid/estimate.hpp"
#include "dynid/preprocess.hpp"
#include "support.hpp"

using namespace dynid;
using dynid::testing::reference;

namespace {

SimLog signal_log(int n, int dof, const std::function<double(double, int)>& f) {
  SimLog log;
  log.label = "signal";
  log.dt = 0.001;
  log.q.resize(n, dof);
  log.u.resize(n, dof);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < dof; ++j) log.q(k, j) = f(0.001 * k, j);
  log.tau = log.q;
  log.u = log.q;
  return log;
}

// Analytic states along a multi-sine path and their inverse dynamics.
RegressionProblem exact_problem(int samples, double ts) {
  const auto& r = reference();
  const DynamicsModel model(r.chain, r.mapping, r.phi);
  Eigen::MatrixXd q(samples, 8), qd(samples, 8), qdd(samples, 8), tau(samples, 8);
  for (int k = 0; k < samples; ++k) {
    const double t = ts * k;
    for (int j = 0; j < 8; ++j) {
      const double w1 = 0.7 + 0.3 * j, w2 = 1.9 + 0.2 * j;
      q(k, j) = 0.5 * std::sin(w1 * t) + 0.3 * std::cos(w2 * t + j);
      qd(k, j) = 0.5 * w1 * std::cos(w1 * t) - 0.3 * w2 * std::sin(w2 * t + j);
      qdd(k, j) = -0.5 * w1 * w1 * std::sin(w1 * t) - 0.3 * w2 * w2 * std::cos(w2 * t + j);
    }
    tau.row(k) = model.inverse_dynamics(q.row(k).transpose(), qd.row(k).transpose(),
                                        qdd.row(k).transpose()).transpose();
  }
  return stack(r.chain, r.mapping, q, qd, qdd, tau);
}

}  // namespace

TEST_CASE("4001 samples at 1 ms keep 101 samples at Ts = 40 ms") {
  const DecimatedLog d = lowpass_and_resample(signal_log(4001, 2, [](double t, int) { return t; }), 40);
  CHECK(d.samples() == 101);
  CHECK(d.ts == doctest::Approx(0.040));
  CHECK(d.standard_interval);
  CHECK_FALSE(lowpass_and_resample(signal_log(4001, 2, [](double, int) { return 0.0; }), 30)
                  .standard_interval);
  CHECK_THROWS_AS(lowpass_and_resample(signal_log(300, 2, [](double, int) { return 0.0; }), 40),
                  TooShortError);
}

TEST_CASE("a constant signal passes filter and decimation unchanged") {
  const DecimatedLog d =
      lowpass_and_resample(signal_log(2001, 3, [](double, int j) { return 0.3 + j; }), 20);
  for (int j = 0; j < 3; ++j) {
    CHECK((d.q.col(j).array() - (0.3 + j)).abs().maxCoeff() <= 1e-12);
    CHECK((d.tau.col(j).array() - (0.3 + j)).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("a 1 Hz sinusoid keeps its amplitude within 2% at Ts = 40 ms") {
  const double w = 2 * kPi;
  const DecimatedLog d =
      lowpass_and_resample(signal_log(8001, 1, [&](double t, int) { return std::sin(w * t); }), 40);
  double worst = 0.0;
  for (int k = 0; k < d.samples(); ++k)
    worst = std::max(worst, std::abs(d.q(k, 0) - std::sin(w * d.time(k))));
  CHECK(worst <= 0.02);
}

TEST_CASE("endpoint noise is filtered like interior noise") {
  const Biquad f = Biquad::butterworth_lowpass(antialias_cutoff_hz(40), 1000.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01(0.0, 1.0);
  double edge = 0.0, mid = 0.0;
  const int runs = 200, n = 2001;
  for (int r = 0; r < runs; ++r) {
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x[k] = n01(rng);
    const Eigen::VectorXd y = filtfilt(f, x);
    edge += 0.5 * (y[0] * y[0] + y[n - 1] * y[n - 1]);
    mid += y[n / 2] * y[n / 2];
  }
  edge = std::sqrt(edge / runs);
  mid = std::sqrt(mid / runs);
  MESSAGE("endpoint rms " << edge << ", interior rms " << mid);
  CHECK(edge <= 0.5);
  CHECK(mid <= 0.2);
}

TEST_CASE("forward-backward filtering is -3 dB at the anti-alias cutoff") {
  const double fc = antialias_cutoff_hz(40);
  CHECK(fc == doctest::Approx(5.0));
  const double w = 2 * kPi * fc;
  const DecimatedLog d = lowpass_and_resample(
      signal_log(8001, 1, [&](double t, int) { return std::sin(w * t); }), 40);
  // Least-squares amplitude of the interior samples.
  Eigen::MatrixXd basis(d.samples() - 50, 2);
  Eigen::VectorXd y(d.samples() - 50);
  for (int k = 25; k < d.samples() - 25; ++k) {
    basis.row(k - 25) << std::sin(w * d.time(k)), std::cos(w * d.time(k));
    y[k - 25] = d.q(k, 0);
  }
  const Eigen::Vector2d ab = basis.colPivHouseholderQr().solve(y);
  CHECK(ab.norm() == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
  CHECK(std::abs(ab[1]) <= 1e-3);  // zero phase

  const Biquad f = Biquad::butterworth_lowpass(fc, 1000.0);
  CHECK(std::abs(f.response(0.0, 1000.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::norm(f.response(fc, 1000.0)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("differentiation is exact on lines and parabolas") {
  const int n = 30;
  const double ts = 0.02;
  Eigen::MatrixXd q(n, 2), qd, qdd;
  for (int k = 0; k < n; ++k) {
    const double t = ts * k;
    q(k, 0) = 0.3 + 1.7 * t;
    q(k, 1) = 0.5 * 2.5 * t * t - t;
  }
  differentiate(q, ts, qd, qdd);
  for (int k = 0; k < n; ++k) {
    CHECK(qd(k, 0) == doctest::Approx(1.7).epsilon(1e-10));
    CHECK(std::abs(qdd(k, 0)) <= 1e-8);
    CHECK(qd(k, 1) == doctest::Approx(2.5 * ts * k - 1.0).epsilon(1e-10).scale(1.0));
    CHECK(qdd(k, 1) == doctest::Approx(2.5).epsilon(1e-8));
  }
  Eigen::MatrixXd tiny(4, 1);
  tiny.setZero();
  CHECK_THROWS_AS(differentiate(tiny, ts, qd, qdd), TooShortError);
}

TEST_CASE("sinusoid derivative errors stay below the Taylor bound") {
  for (double ts : {0.01, 0.02, 0.04, 0.08}) {
    const double f = 0.8, w = 2 * kPi * f, a = 0.4;
    const int n = static_cast<int>(5.0 / ts);
    Eigen::MatrixXd q(n, 1), qd, qdd;
    for (int k = 0; k < n; ++k) q(k, 0) = a * std::sin(w * ts * k);
    differentiate(q, ts, qd, qdd);
    const double bound = (w * ts) * (w * ts);
    for (int k = 0; k < n; ++k) {
      const double t = ts * k;
      CHECK(std::abs(qd(k, 0) - a * w * std::cos(w * t)) <= a * w * bound);
      CHECK(std::abs(qdd(k, 0) + a * w * w * std::sin(w * t)) <= a * w * w * bound);
    }
  }
}

TEST_CASE("two samples of an 8-axis arm stack into 16 rows") {
  const RegressionProblem p = exact_problem(2, 0.01);
  CHECK(p.w.rows() == 16);
  CHECK(p.w.cols() == 39);
  CHECK(p.tau.size() == 16);
  CHECK(p.samples() == 2);
  CHECK(p.block(1).rows() == 8);
}

TEST_CASE("exact data: the reference vector leaves no residual") {
  const auto& r = reference();
  const RegressionProblem p = exact_problem(400, 0.01);
  const double rms = std::sqrt((p.w * r.phi - p.tau).squaredNorm() / p.tau.size());
  CHECK(rms <= 1e-6);
}

TEST_CASE("shuffling samples leaves the least-squares solution unchanged") {
  const RegressionProblem p = exact_problem(600, 0.01);
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(p.tau.size());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0.0, 0.05);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = n01(rng);
  const Eigen::VectorXd tau = p.tau + noise;

  std::vector<int> order(p.samples());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Eigen::MatrixXd ws(p.w.rows(), p.w.cols());
  Eigen::VectorXd ts(tau.size());
  for (int k = 0; k < p.samples(); ++k) {
    ws.middleRows(8 * k, 8) = p.w.middleRows(8 * order[k], 8);
    ts.segment(8 * k, 8) = tau.segment(8 * order[k], 8);
  }
  const Eigen::VectorXd a = ols_solve(p.w, tau);
  const Eigen::VectorXd b = ols_solve(ws, ts);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, a.cwiseAbs().maxCoeff()));
}

TEST_CASE("concatenation keeps rows in order") {
  const RegressionProblem a = exact_problem(3, 0.01), b = exact_problem(5, 0.02);
  const RegressionProblem c = concatenate({a, b}, "ab");
  CHECK(c.samples() == 8);
  CHECK(c.w.topRows(24) == a.w);
  CHECK(c.tau.tail(40) == b.tau);
}
