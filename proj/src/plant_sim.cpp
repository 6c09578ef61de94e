#include "dynid/plant_sim.hpp"

#include <cmath>
#include <deque>
#include <random>

#include "dynid/errors.hpp"
#include "dynid/text.hpp"

namespace dynid {

double PlantConfig::encoder_step() const {
  return 2.0 * kPi / std::ldexp(1.0, encoder_bits);
}

int PlantConfig::substeps() const {
  const double r = control_period / integration_step;
  const int n = static_cast<int>(std::lround(r));
  if (n < 1 || std::abs(r - n) > 1e-9)
    throw ConfigError("integration step must divide the control period");
  return n;
}

JointVector default_torque_constants(int dof) {
  JointVector k = JointVector::Constant(dof, 2.3179);
  if (dof > 1) k[1] = 3.1317;
  return k;
}

double torque_from_current(double current, int axis,
                           const JointVector& torque_constants) {
  if (axis < 0 || axis >= torque_constants.size())
    throw DimensionError("axis " + std::to_string(axis + 1) + " out of range");
  return current * torque_constants[axis];
}

PlantConfig parse_plant_config(const nlohmann::json& doc, int dof) {
  try {
    PlantConfig c;
    c.dead_time = doc.value("dead_time_s", c.dead_time);
    c.control_period = doc.value("control_period_s", c.control_period);
    c.integration_step = doc.value("integration_step_s", c.integration_step);
    c.encoder_bits = doc.value("encoder_bits", c.encoder_bits);
    c.torque_noise_std = doc.value("torque_noise_std", c.torque_noise_std);
    c.current_lsb = doc.value("current_lsb_A", c.current_lsb);
    c.velocity_bound = doc.value("velocity_bound", c.velocity_bound);
    c.torque_clamp = doc.value("torque_clamp", c.torque_clamp);
    c.kp = doc.value("kp", c.kp);
    c.kv = doc.value("kv", c.kv);
    c.t_f = doc.value("t_f_s", c.t_f);
    c.torque_constants = default_torque_constants(dof);
    if (doc.contains("torque_constants")) {
      auto v = doc.at("torque_constants").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != dof)
        throw ConfigError("torque_constants needs one entry per axis");
      for (int i = 0; i < dof; ++i) c.torque_constants[i] = v[i];
    }
    if (c.dead_time < 0.0) throw ConfigError("dead time must be >= 0");
    if (!(c.control_period > 0.0) || !(c.integration_step > 0.0))
      throw ConfigError("periods must be positive");
    c.substeps();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("plant config: ") + e.what());
  }
}

PseudoDifferentiator::PseudoDifferentiator(double t_f, double dt) {
  if (!(dt > 0.0) || !(t_f >= 0.0))
    throw ConfigError("pseudo-differentiator needs dt > 0 and t_f >= 0");
  const double c = 2.0 * t_f / dt;
  gain_ = (2.0 / dt) / (1.0 + c);
  feedback_ = (1.0 - c) / (1.0 + c);
}

void PseudoDifferentiator::reset(double x) {
  x_prev_ = x;
  y_prev_ = 0.0;
}

double PseudoDifferentiator::step(double x) {
  const double y = gain_ * (x - x_prev_) - feedback_ * y_prev_;
  x_prev_ = x;
  y_prev_ = y;
  return y;
}

std::vector<double> pseudo_diff(const std::vector<double>& samples, double t_f,
                                double dt) {
  PseudoDifferentiator f(t_f, dt);
  std::vector<double> out;
  out.reserve(samples.size());
  if (!samples.empty()) f.reset(samples.front());
  for (double x : samples) out.push_back(f.step(x));
  return out;
}

JointVector ffpd_command(const ControllerGains& g, const JointVector& q_ref,
                         const JointVector& qd_ref, const JointVector& qdd_ref,
                         const JointVector& q_meas, const JointVector& qd_hat) {
  const auto n = q_ref.size();
  if (qd_ref.size() != n || qdd_ref.size() != n || q_meas.size() != n ||
      qd_hat.size() != n || g.kp.size() != n || g.kv.size() != n ||
      g.m_hat.size() != n || g.d_hat.size() != n)
    throw DimensionError("controller inputs disagree in size");
  JointVector inner = g.kv.cwiseProduct(qd_ref - qd_hat) +
                      g.kp.cwiseProduct(q_ref - q_meas) + qdd_ref;
  return g.m_hat.cwiseProduct(inner) + g.d_hat.cwiseProduct(qd_ref);
}

ControllerGains default_gains(const ChainDescription& chain,
                              const BaseParamMapping& mapping,
                              const Eigen::VectorXd& phi,
                              const PlantConfig& config) {
  const int dof = chain.dof();
  DynamicsModel model(chain, mapping, phi);
  JointVector q0(dof);
  for (int i = 0; i < dof; ++i) q0[i] = chain.nominal_posture[i];
  ControllerGains g;
  g.kp = JointVector::Constant(dof, config.kp);
  g.kv = JointVector::Constant(dof, config.kv);
  g.m_hat = model.mass_matrix(q0).diagonal();
  g.d_hat = JointVector::Zero(dof);
  for (int i = 0; i < dof; ++i) {
    const int k = mapping.index_of("FV" + std::to_string(i + 1));
    if (k >= 0) g.d_hat[i] = phi[k];
  }
  g.t_f = config.t_f;
  for (int i = 0; i < dof; ++i)
    if (!(g.m_hat[i] > 0.0))
      throw ConfigError("realization inertia must be positive on axis " +
                        std::to_string(i + 1));
  return g;
}

std::string SimLog::to_csv() const {
  std::string out = "t";
  for (const char* ch : {"q", "u", "tau"})
    for (int j = 0; j < dof(); ++j) out += "," + std::string(ch) + std::to_string(j + 1);
  out += "\n";
  for (int k = 0; k < samples(); ++k) {
    out += text::format_double(time(k), 12);
    for (const Eigen::MatrixXd* m : {&q, &u, &tau})
      for (int j = 0; j < dof(); ++j) out += "," + text::format_double((*m)(k, j));
    out += "\n";
  }
  return out;
}

SimLog SimLog::from_csv(std::string_view csv, std::string label) {
  auto lines = text::split_lines(csv);
  if (lines.size() < 2) throw ConfigError("log has no samples");
  const auto header = text::split(lines[0], ',');
  if ((header.size() - 1) % 3 != 0 || header[0] != "t")
    throw ConfigError("log header must be t, q1..qn, u1..un, tau1..taun");
  const int dof = static_cast<int>((header.size() - 1) / 3);
  const int n = static_cast<int>(lines.size()) - 1;
  SimLog log;
  log.label = std::move(label);
  log.q.resize(n, dof);
  log.u.resize(n, dof);
  log.tau.resize(n, dof);
  std::vector<double> t(n);
  for (int k = 0; k < n; ++k) {
    auto cells = text::split(lines[k + 1], ',');
    if (static_cast<int>(cells.size()) != 1 + 3 * dof)
      throw ConfigError("log row " + std::to_string(k + 1) + " has wrong width");
    t[k] = text::parse_double(cells[0]);
    for (int j = 0; j < dof; ++j) {
      log.q(k, j) = text::parse_double(cells[1 + j]);
      log.u(k, j) = text::parse_double(cells[1 + dof + j]);
      log.tau(k, j) = text::parse_double(cells[1 + 2 * dof + j]);
    }
  }
  log.dt = n > 1 ? (t[n - 1] - t[0]) / (n - 1) : 0.001;
  return log;
}

SimLog simulate_closed_loop(const DynamicsModel& plant,
                            const SampledTrajectory& ref,
                            const ControllerGains& gains,
                            const PlantConfig& config,
                            const Imperfections& imp, std::uint64_t seed) {
  const int dof = plant.dof();
  if (ref.dof() != dof) throw DimensionError("reference does not match plant");
  if (std::abs(ref.dt - config.control_period) > 1e-12)
    throw ConfigError("reference must be sampled at the control period");
  const int n = ref.samples();
  const int sub = config.substeps();
  const double h = config.integration_step;
  const double qstep = config.encoder_step();
  // Dead time in substeps; the applied torque switches at substep starts.
  const int delay = imp.dead_time
                        ? static_cast<int>(std::lround(config.dead_time / h))
                        : 0;

  SimLog log;
  log.label = ref.label;
  log.dt = config.control_period;
  log.q.resize(n, dof);
  log.u.resize(n, dof);
  log.tau.resize(n, dof);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PseudoDifferentiator> diff(
      dof, PseudoDifferentiator(gains.t_f, config.control_period));

  // Start settled: the loop has been holding the first reference sample, so
  // the PD offset balances gravity, kp * m_hat * (q_ref - q) = g(q).
  const JointVector q_hold = ref.q.row(0).transpose();
  JointVector q = q_hold;
  const JointVector zero = JointVector::Zero(dof);
  const JointVector stiffness = gains.kp.cwiseProduct(gains.m_hat);
  // Without position feedback on every axis there is no hold to settle into.
  const bool settle = (stiffness.array() > 0.0).all();
  for (int it = 0; settle && it < 100; ++it) {
    const JointVector next =
        q_hold - plant.bias(q, zero).cwiseQuotient(stiffness);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = next;
    if (change < 1e-15) break;
  }
  JointVector qd = JointVector::Zero(dof);
  // Applied torque per upcoming substep; front is the current substep.
  std::deque<JointVector> pending;
  JointVector applied(dof);

  auto accel = [&](const JointVector& qq, const JointVector& vv,
                   const JointVector& tau) { return plant.forward(qq, vv, tau); };

  for (int k = 0; k < n; ++k) {
    JointVector q_meas = q;
    if (imp.quantization)
      for (int j = 0; j < dof; ++j)
        q_meas[j] = qstep * std::round(q[j] / qstep);
    JointVector qd_hat(dof);
    for (int j = 0; j < dof; ++j) {
      if (k == 0) diff[j].reset(q_meas[j]);
      qd_hat[j] = diff[j].step(q_meas[j]);
    }
    JointVector u = ffpd_command(gains, ref.q.row(k).transpose(),
                                 ref.qd.row(k).transpose(),
                                 ref.qdd.row(k).transpose(), q_meas, qd_hat);
    if (config.torque_clamp > 0.0)
      u = u.cwiseMax(-config.torque_clamp).cwiseMin(config.torque_clamp);
    // Before t = 0 the loop is assumed to have been holding this command.
    if (k == 0)
      for (int i = 0; i < delay; ++i) pending.push_back(u);
    for (int i = 0; i < sub; ++i) pending.push_back(u);

    log.q.row(k) = q_meas.transpose();
    log.u.row(k) = u.transpose();

    for (int s = 0; s < sub; ++s) {
      applied = pending.front();
      pending.pop_front();
      if (s == 0) {
        JointVector meas = applied;
        if (imp.noise && config.torque_noise_std > 0.0)
          for (int j = 0; j < dof; ++j)
            meas[j] += config.torque_noise_std * normal(rng);
        if (imp.quantization && config.current_lsb > 0.0)
          for (int j = 0; j < dof; ++j) {
            const double kt = config.torque_constants[j];
            meas[j] = kt * config.current_lsb *
                      std::round(meas[j] / kt / config.current_lsb);
          }
        log.tau.row(k) = meas.transpose();
      }
      if (k == n - 1) continue;

      const JointVector a1 = accel(q, qd, applied);
      const JointVector q1 = q + h * qd;
      const JointVector v1 = qd + h * a1;
      const JointVector a2 = accel(q1, v1, applied);
      q += 0.5 * h * (qd + v1);
      qd += 0.5 * h * (a1 + a2);
      if (!qd.allFinite() || qd.cwiseAbs().maxCoeff() > config.velocity_bound)
        throw DivergenceError("joint velocity exceeded the divergence bound",
                              k * config.control_period + (s + 1) * h);
    }
  }
  return log;
}

SimLog simulate_closed_loop(const ChainDescription& chain,
                            const BaseParamMapping& mapping,
                            const Eigen::VectorXd& phi_plant,
                            const SampledTrajectory& reference,
                            const ControllerGains& gains,
                            const PlantConfig& config,
                            const Imperfections& imperfections,
                            std::uint64_t seed) {
  DynamicsModel plant(chain, mapping, phi_plant);
  return simulate_closed_loop(plant, reference, gains, config, imperfections,
                              seed);
}

}  // namespace dynid
