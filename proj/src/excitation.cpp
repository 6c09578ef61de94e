#include "dynid/excitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dynid/errors.hpp"
#include "dynid/text.hpp"

namespace dynid {

SCurve::SCurve(double v, double a, double j) {
  if (!(v > 0.0) || !(a > 0.0) || !(j > 0.0) || !std::isfinite(v) ||
      !std::isfinite(a) || !std::isfinite(j))
    throw TrajectoryError("S-curve caps must be positive and finite");
  double tj, ta, vp;
  auto accel_distance = [&](double vel, double& tj_out, double& ta_out) {
    if (vel * j >= a * a) {
      tj_out = a / j;
      ta_out = vel / a - tj_out;
    } else {
      tj_out = std::sqrt(vel / j);
      ta_out = 0.0;
    }
    return 0.5 * vel * (2.0 * tj_out + ta_out);
  };
  const double d_acc = accel_distance(v, tj, ta);
  if (2.0 * d_acc <= 1.0) {
    vp = v;
    cruise_ = (1.0 - 2.0 * d_acc) / v;
  } else {
    cruise_ = 0.0;
    vp = 0.5 * a * (-a / j + std::sqrt(a * a / (j * j) + 4.0 / a));
    if (vp * j < a * a) vp = std::cbrt(0.25 * j);  // vp^(3/2) = sqrt(j)/2
    accel_distance(vp, tj, ta);
  }
  jerk_ = j;
  jerk_time_ = tj;
  accel_time_ = std::max(0.0, ta);
  peak_velocity_ = vp;
  peak_acceleration_ = j * tj;

  const double dur[7] = {tj, accel_time_, tj, cruise_, tj, accel_time_, tj};
  const double jerk[7] = {j, 0.0, -j, 0.0, -j, 0.0, j};
  double t = 0.0, s = 0.0, sv = 0.0, sa = 0.0;
  for (int p = 0; p < 7; ++p) {
    t0_.push_back(t);
    s0_.push_back(s);
    v0_.push_back(sv);
    a0_.push_back(sa);
    j_.push_back(jerk[p]);
    const double h = dur[p];
    s += sv * h + 0.5 * sa * h * h + jerk[p] * h * h * h / 6.0;
    sv += sa * h + 0.5 * jerk[p] * h * h;
    sa += jerk[p] * h;
    t += h;
  }
  duration_ = t;
  end_position_ = s;
}

void SCurve::evaluate(double t, double& s, double& sd, double& sdd) const {
  if (duration_ <= 0.0 || t >= duration_) {
    s = 1.0;
    sd = 0.0;
    sdd = 0.0;
    return;
  }
  if (t <= 0.0) {
    s = sd = sdd = 0.0;
    return;
  }
  int p = 6;
  while (p > 0 && t < t0_[p]) --p;
  const double h = t - t0_[p];
  const double jj = j_[p];
  s = s0_[p] + v0_[p] * h + 0.5 * a0_[p] * h * h + jj * h * h * h / 6.0;
  sd = v0_[p] + a0_[p] * h + 0.5 * jj * h * h;
  sdd = a0_[p] + jj * h;
  s /= end_position_;
  sd /= end_position_;
  sdd /= end_position_;
}

Waypoints single_joint_primitive(const JointVector& posture, int joint,
                                 double amplitude) {
  if (joint < 0 || joint >= posture.size())
    throw TrajectoryError("joint index " + std::to_string(joint + 1) +
                          " outside the chain");
  JointVector delta = JointVector::Zero(posture.size());
  delta[joint] = amplitude;
  return {posture, posture - delta, posture + delta, posture};
}

Waypoints adjacent_pair_primitive(const JointVector& posture, int joint,
                                  double amplitude, int sign,
                                  double next_amplitude, int next_sign) {
  if (joint < 0 || joint + 1 >= posture.size())
    throw TrajectoryError("adjacent pair starting at joint " +
                          std::to_string(joint + 1) + " outside the chain");
  JointVector delta = JointVector::Zero(posture.size());
  delta[joint] = sign * amplitude;
  delta[joint + 1] = next_sign * next_amplitude;
  return {posture, posture - delta, posture + delta, posture};
}

std::string SampledTrajectory::to_csv() const {
  std::string out = "t";
  for (const char* ch : {"q", "qd", "qdd"})
    for (int j = 0; j < dof(); ++j) out += "," + std::string(ch) + std::to_string(j + 1);
  out += "\n";
  for (int k = 0; k < samples(); ++k) {
    out += text::format_double(time(k), 12);
    for (const Eigen::MatrixXd* m : {&q, &qd, &qdd})
      for (int j = 0; j < dof(); ++j) out += "," + text::format_double((*m)(k, j));
    out += "\n";
  }
  return out;
}

TrajectoryPlan::TrajectoryPlan(JointVector start)
    : start_(start), end_(std::move(start)) {}

void TrajectoryPlan::move_to(const JointVector& target, double speed_factor,
                             const MotionLimits& limits) {
  const int n = dof();
  const std::string where = "segment " + std::to_string(segments_.size() + 1);
  if (target.size() != n) throw TrajectoryError(where + ": dimension mismatch");
  if (!(speed_factor > 0.0) || !std::isfinite(speed_factor))
    throw TrajectoryError(where + ": speed factor must be positive");
  Segment seg{duration_, 0.0, end_, target - end_, SCurve(), false};
  double v = INFINITY, a = INFINITY, j = INFINITY;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(seg.delta[i]);
    if (d < 1e-12) continue;
    if (!(limits.velocity[i] > 0.0) || !(limits.acceleration[i] > 0.0) ||
        !(limits.jerk[i] > 0.0))
      throw TrajectoryError(where + ": axis " + std::to_string(i + 1) +
                            " has non-positive motion caps");
    v = std::min(v, speed_factor * limits.velocity[i] / d);
    a = std::min(a, speed_factor * speed_factor * limits.acceleration[i] / d);
    j = std::min(j, std::pow(speed_factor, 3) * limits.jerk[i] / d);
  }
  if (std::isfinite(v)) {
    seg.profile = SCurve(v, a, j);
    seg.duration = seg.profile.duration();
    seg.moving = true;
  }
  segments_.push_back(seg);
  duration_ += seg.duration;
  end_ = target;
}

void TrajectoryPlan::hold(double seconds) {
  if (!(seconds >= 0.0)) throw TrajectoryError("hold time must be >= 0");
  if (seconds == 0.0) return;
  segments_.push_back(
      {duration_, seconds, end_, JointVector::Zero(dof()), SCurve(), false});
  duration_ += seconds;
}

void TrajectoryPlan::evaluate(double t, JointVector& q, JointVector& qd,
                              JointVector& qdd) const {
  qd = JointVector::Zero(dof());
  qdd = JointVector::Zero(dof());
  if (segments_.empty() || t <= 0.0) {
    q = start_;
    return;
  }
  if (t >= duration_) {
    q = end_;
    return;
  }
  auto it = std::upper_bound(
      segments_.begin(), segments_.end(), t,
      [](double tt, const Segment& s) { return tt < s.start; });
  const Segment& seg = *(it - 1);
  if (!seg.moving) {
    q = seg.from;
    return;
  }
  double s, sd, sdd;
  seg.profile.evaluate(t - seg.start, s, sd, sdd);
  q = seg.from + s * seg.delta;
  qd = sd * seg.delta;
  qdd = sdd * seg.delta;
}

SampledTrajectory TrajectoryPlan::sample(double dt,
                                         const std::string& label) const {
  if (!(dt > 0.0)) throw TrajectoryError("sample period must be positive");
  const int n = static_cast<int>(std::ceil(duration_ / dt - 1e-9)) + 1;
  SampledTrajectory out;
  out.label = label;
  out.dt = dt;
  out.q.resize(n, dof());
  out.qd.resize(n, dof());
  out.qdd.resize(n, dof());
  JointVector q, qd, qdd;
  for (int k = 0; k < n; ++k) {
    evaluate(k * dt, q, qd, qdd);
    out.q.row(k) = q.transpose();
    out.qd.row(k) = qd.transpose();
    out.qdd.row(k) = qdd.transpose();
  }
  return out;
}

SampledTrajectory interpolate(const Waypoints& waypoints, double speed_factor,
                              const MotionLimits& limits,
                              double control_period, double dwell) {
  if (waypoints.size() < 2)
    throw TrajectoryError("interpolation needs at least two waypoints");
  TrajectoryPlan plan(waypoints.front());
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    plan.move_to(waypoints[i], speed_factor, limits);
    if (i + 1 < waypoints.size()) plan.hold(dwell);
  }
  return plan.sample(control_period, "");
}

double CatalogConfig::speed(int joint, int level) const {
  const auto& set = speed_sets.at(joint_group.at(joint));
  return set.at(level);
}

namespace {

JointVector deg_vector(const nlohmann::json& arr, int n, const char* key) {
  auto v = arr.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n)
    throw ConfigError(std::string("'") + key + "' needs one entry per axis");
  JointVector out(n);
  for (int i = 0; i < n; ++i) out[i] = deg2rad(v[i]);
  return out;
}

}  // namespace

CatalogConfig parse_catalog_config(const nlohmann::json& doc) {
  try {
    CatalogConfig c;
    c.control_period = doc.value("control_period_s", 0.001);
    c.dwell = doc.value("dwell_s", 0.0);
    c.speed_scale = doc.value("speed_scale", 1.0);
    const int n = static_cast<int>(doc.at("amplitude_deg").size());
    if (n < 1 || n > kMaxDof) throw ConfigError("bad axis count in catalog");
    c.amplitude = deg_vector(doc.at("amplitude_deg"), n, "amplitude_deg");
    const auto& caps = doc.at("caps");
    c.caps.velocity = deg_vector(caps.at("velocity_deg_s"), n, "velocity_deg_s");
    c.caps.acceleration =
        deg_vector(caps.at("acceleration_deg_s2"), n, "acceleration_deg_s2");
    c.caps.jerk = deg_vector(caps.at("jerk_deg_s3"), n, "jerk_deg_s3");
    for (const auto& iv : doc.at("limits_deg")) {
      auto v = iv.get<std::vector<double>>();
      if (v.size() != 2 || !(v[0] < v[1]))
        throw ConfigError("joint limit must be [lower, upper]");
      c.limits.push_back({deg2rad(v[0]), deg2rad(v[1])});
    }
    if (static_cast<int>(c.limits.size()) != n)
      throw ConfigError("'limits_deg' needs one interval per axis");
    c.wrist_joint = doc.value("wrist_joint", 6) - 1;
    c.wrist_offset = deg2rad(doc.value("wrist_offset_deg", 90.0));
    if (c.wrist_joint < 0 || c.wrist_joint >= n)
      throw ConfigError("'wrist_joint' outside the chain");
    for (auto& [name, arr] : doc.at("postures_deg").items()) {
      JointVector q = deg_vector(arr, n, "postures_deg");
      c.postures[name] = q;
      q[c.wrist_joint] += c.wrist_offset;
      c.postures[name + "'"] = q;
    }
    for (auto& [name, arr] : doc.at("speed_sets").items())
      c.speed_sets[name] = arr.get<std::vector<double>>();
    c.joint_group = doc.at("joint_groups").get<std::vector<std::string>>();
    if (static_cast<int>(c.joint_group.size()) != n)
      throw ConfigError("'joint_groups' needs one entry per axis");
    for (const auto& g : c.joint_group) {
      auto it = c.speed_sets.find(g);
      if (it == c.speed_sets.end() || it->second.size() < 3)
        throw ConfigError("speed set '" + g + "' missing or shorter than 3");
      for (double s : it->second)
        if (!(s > 0.0 && s <= 1.0))
          throw ConfigError("speed factors must lie in (0, 1]");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("catalog config: ") + e.what());
  }
}

CatalogConfig load_catalog_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed catalog config " + path.string() + ": " +
                      e.what());
  }
  return parse_catalog_config(doc);
}

TrajectoryPlan realize(const TrajectorySpec& spec, const CatalogConfig& config) {
  if (spec.primitives.empty())
    throw TrajectoryError(spec.label + ": no primitives");
  auto posture = [&](const std::string& name) -> const JointVector& {
    auto it = config.postures.find(name);
    if (it == config.postures.end())
      throw TrajectoryError(spec.label + ": unknown posture " + name);
    return it->second;
  };
  TrajectoryPlan plan(posture(spec.primitives.front().posture));
  for (const auto& prim : spec.primitives) {
    const JointVector& home = posture(prim.posture);
    const double k = prim.speed_factor * config.speed_scale;
    if ((plan.end() - home).cwiseAbs().maxCoeff() > 1e-12) {
      plan.move_to(home, k, config.caps);
      plan.hold(config.dwell);
    }
    for (const JointVector& wp :
         {JointVector(home - prim.delta), JointVector(home + prim.delta), home}) {
      plan.move_to(wp, k, config.caps);
      plan.hold(config.dwell);
    }
  }
  return plan;
}

const TrajectorySpec& Catalog::find(const std::string& label) const {
  for (const auto* list : {&identification, &validation})
    for (const auto& s : *list)
      if (s.label == label) return s;
  throw ConfigError("no trajectory labelled " + label);
}

namespace {

class CatalogBuilder {
 public:
  explicit CatalogBuilder(const CatalogConfig& c) : c_(c) {}

  // Largest symmetric offset of `joint` around the posture within its limits.
  double clipped(const std::string& posture, int joint, double a) const {
    const double q = c_.postures.at(posture)[joint];
    const auto& lim = c_.limits[joint];
    double r = std::min({a, lim.upper - q, q - lim.lower});
    return r < 1e-9 ? 0.0 : r;
  }

  void singles(std::vector<PrimitiveSpec>& out, const std::string& posture,
               int level) const {
    for (int j = 0; j < c_.dof(); ++j) {
      const double a = clipped(posture, j, c_.amplitude[j]);
      if (a == 0.0) continue;
      JointVector d = JointVector::Zero(c_.dof());
      d[j] = a;
      out.push_back({"J" + std::to_string(j + 1), posture, d, c_.speed(j, level)});
    }
  }

  void pairs(std::vector<PrimitiveSpec>& out, const std::string& posture,
             int level, bool opposite) const {
    for (int j = 0; j + 1 < c_.dof(); j += 2) {
      const double a = clipped(posture, j, c_.amplitude[j]);
      const double b = clipped(posture, j + 1, c_.amplitude[j + 1]);
      if (a == 0.0 && b == 0.0) continue;
      JointVector d = JointVector::Zero(c_.dof());
      d[j] = a;
      d[j + 1] = opposite ? -b : b;
      out.push_back({"J" + std::to_string(j + 1) + "+J" + std::to_string(j + 2) +
                         (opposite ? "-" : "+"),
                     posture, d,
                     std::min(c_.speed(j, level), c_.speed(j + 1, level))});
    }
  }

  // All axes at once; signs alternate in blocks of `period` axes.
  void multi(std::vector<PrimitiveSpec>& out, const std::string& posture,
             int level, int period, double fraction) const {
    JointVector d = JointVector::Zero(c_.dof());
    double k = 1.0;
    for (int j = 0; j < c_.dof(); ++j) {
      const double sign = ((j / period) % 2 == 0) ? 1.0 : -1.0;
      d[j] = sign * clipped(posture, j, fraction * c_.amplitude[j]);
      k = std::min(k, c_.speed(j, level));
    }
    out.push_back({"multi" + std::to_string(period), posture, d, k});
  }

  enum class Pattern { kSingles, kInPhase, kOpposite };
  void add(std::vector<PrimitiveSpec>& out, Pattern p, const std::string& posture,
           int level) const {
    switch (p) {
      case Pattern::kSingles: singles(out, posture, level); break;
      case Pattern::kInPhase: pairs(out, posture, level, false); break;
      case Pattern::kOpposite: pairs(out, posture, level, true); break;
    }
  }

 private:
  const CatalogConfig& c_;
};

std::string two_digits(int i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

}  // namespace

Catalog build_catalog(const CatalogConfig& config) {
  using P = CatalogBuilder::Pattern;
  CatalogBuilder b(config);
  Catalog cat;
  const char* pattern_name[] = {"single-joint sweeps",
                                "adjacent pairs in phase",
                                "adjacent pairs opposite phase"};
  for (const std::string posture : {"A", "B", "C"}) {
    const std::string family = "P" + posture;
    for (int p = 0; p < 3; ++p) {
      for (int level = 0; level < 3; ++level) {
        TrajectorySpec s{family + two_digits(3 * p + level + 1), family,
                         std::string(pattern_name[p]) + ", posture " + posture +
                             ", speed level " + std::to_string(level + 1),
                         false, {}};
        b.add(s.primitives, static_cast<P>(p), posture, level);
        cat.identification.push_back(std::move(s));
      }
    }
    const std::string primed = posture + "'";
    TrajectorySpec s10{family + "10", family,
                       "single-joint sweeps at " + posture + " then " + primed,
                       false, {}};
    b.add(s10.primitives, P::kSingles, posture, 1);
    b.add(s10.primitives, P::kSingles, primed, 1);
    cat.identification.push_back(std::move(s10));
    TrajectorySpec s11{family + "11", family,
                       "adjacent pairs in and opposite phase at " + primed,
                       false, {}};
    b.add(s11.primitives, P::kInPhase, primed, 1);
    b.add(s11.primitives, P::kOpposite, primed, 1);
    cat.identification.push_back(std::move(s11));
  }

  const std::pair<std::string, int> ap[] = {{"A", 2}, {"B", 2}, {"C", 2},
                                            {"C", 0}, {"C", 1}};
  for (int i = 0; i < 5; ++i) {
    const auto& [posture, level] = ap[i];
    TrajectorySpec s{"AP" + two_digits(i + 1), "AP",
                     "adjacent pairs only, posture " + posture +
                         ", speed level " + std::to_string(level + 1),
                     false, {}};
    b.add(s.primitives, P::kInPhase, posture, level);
    b.add(s.primitives, P::kOpposite, posture, level);
    cat.identification.push_back(std::move(s));
  }

  TrajectorySpec ag1{"AG01", "AG", "adjacent pairs at postures A, B, C", false,
                     {}};
  for (const char* posture : {"A", "B", "C"})
    b.add(ag1.primitives, P::kInPhase, posture, 1);
  cat.identification.push_back(std::move(ag1));
  TrajectorySpec ag2{"AG02", "AG",
                     "single-joint sweeps and adjacent pairs at postures A, B, C",
                     false, {}};
  for (const char* posture : {"A", "B", "C"})
    b.add(ag2.primitives, P::kSingles, posture, 1);
  b.add(ag2.primitives, P::kInPhase, "A", 1);
  b.add(ag2.primitives, P::kOpposite, "B", 1);
  b.add(ag2.primitives, P::kInPhase, "C", 1);
  cat.identification.push_back(std::move(ag2));

  TrajectorySpec v1{"V01", "V", "all axes at posture A, three sign patterns",
                    true, {}};
  for (int period : {1, 2, 4}) b.multi(v1.primitives, "A", 1, period, 0.8);
  TrajectorySpec v2{"V02", "V", "all axes at posture B, three sign patterns",
                    true, {}};
  for (int period : {1, 2, 4}) b.multi(v2.primitives, "B", 1, period, 0.8);
  TrajectorySpec v3{"V03", "V", "all axes at postures C, A' and B'", true, {}};
  b.multi(v3.primitives, "C", 1, 1, 0.8);
  b.multi(v3.primitives, "A'", 1, 2, 0.8);
  b.multi(v3.primitives, "B'", 1, 4, 0.8);
  cat.validation = {std::move(v1), std::move(v2), std::move(v3)};
  return cat;
}

}  // namespace dynid
