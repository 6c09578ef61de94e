#include "dynid/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>

#include "dynid/errors.hpp"
#include "dynid/text.hpp"

namespace dynid {

namespace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

void check_state(const JointState& s, int dof) {
  if (s.q.size() != dof || s.qd.size() != dof || s.qdd.size() != dof)
    throw DimensionError("joint state does not match the chain dof " +
                         std::to_string(dof));
}

// Per-link kinematics of one state, expressed in each link frame.
struct Kinematics {
  std::array<Mat3, kMaxDof> rot;  // parent <- link
  std::array<Vec3, kMaxDof> w, wd, vd;
};

void forward_pass(const RigidBodyChain& chain, const JointState& s,
                  double gravity, Kinematics& k) {
  Vec3 w = Vec3::Zero(), wd = Vec3::Zero(), vd(0.0, 0.0, gravity);
  for (int i = 0; i < chain.n_links(); ++i) {
    const auto& L = chain.link(i);
    const Mat3 r = chain.rotation(i, s.q[i]);
    const Mat3 rt = r.transpose();
    const double qd = L.sign * s.qd[i];
    const double qdd = L.sign * s.qdd[i];
    const Vec3 w_in = rt * w;
    Vec3 vd_new = rt * (vd + wd.cross(L.origin) + w.cross(w.cross(L.origin)));
    Vec3 wd_new = rt * wd;
    wd_new += Vec3(w_in.y() * qd, -w_in.x() * qd, qdd);  // w_in x qd*z + qdd*z
    w = w_in + Vec3(0.0, 0.0, qd);
    wd = wd_new;
    vd = vd_new;
    k.rot[i] = r;
    k.w[i] = w;
    k.wd[i] = wd;
    k.vd[i] = vd;
  }
}

}  // namespace

RigidBodyChain::RigidBodyChain(const ChainDescription& chain)
    : dof_(chain.dof()), gravity_(chain.gravity) {
  if (chain.n_axes > kMaxDof)
    throw DimensionError("chain exceeds the supported axis count");
  if (chain.n_axes < chain.n_links())
    throw DimensionError("chain has fewer axes than links");
  for (const auto& dh : chain.links) {
    Link l;
    l.cos_alpha = std::cos(dh.alpha);
    l.sin_alpha = std::sin(dh.alpha);
    l.a = dh.a;
    l.d = dh.d;
    l.theta_offset = dh.theta_offset;
    l.sign = dh.axis_sign;
    l.origin = Vec3(dh.a, -l.sin_alpha * dh.d, l.cos_alpha * dh.d);
    links_.push_back(l);
  }
}

Eigen::Matrix3d RigidBodyChain::rotation(int i, double q) const {
  const Link& l = links_[i];
  const double th = l.sign * q + l.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = l.cos_alpha, sa = l.sin_alpha;
  Mat3 r;
  r << ct, -st, 0.0, ca * st, ca * ct, -sa, sa * st, sa * ct, ca;
  return r;
}

CompiledParams compile(const StandardInertialParams& params, int dof) {
  if (static_cast<int>(params.rotor_inertia.size()) != dof ||
      static_cast<int>(params.viscous_friction.size()) != dof)
    throw DimensionError("rotor/friction entries do not match dof");
  CompiledParams c;
  for (const auto& li : params.links) {
    Mat3 in;
    in << li.xx, li.xy, li.xz, li.xy, li.yy, li.yz, li.xz, li.yz, li.zz;
    c.inertia.push_back(in);
    c.first_moment.push_back(Vec3(li.mx, li.my, li.mz));
    c.mass.push_back(li.mass);
  }
  c.rotor = Eigen::Map<const Eigen::VectorXd>(params.rotor_inertia.data(), dof);
  c.friction =
      Eigen::Map<const Eigen::VectorXd>(params.viscous_friction.data(), dof);
  return c;
}

CompiledParams compile(const Eigen::VectorXd& standard,
                       const StandardLayout& layout) {
  return compile(from_vector(standard, layout), layout.n_axes());
}

JointVector rnea(const RigidBodyChain& chain, const CompiledParams& p,
                 const JointState& s, double gravity) {
  const int dof = chain.dof();
  check_state(s, dof);
  const int nl = chain.n_links();
  if (static_cast<int>(p.mass.size()) != nl)
    throw DimensionError("parameter link count does not match the chain");
  Kinematics k;
  forward_pass(chain, s, gravity, k);
  JointVector tau = JointVector::Zero(dof);
  Vec3 f = Vec3::Zero(), n = Vec3::Zero();
  for (int i = nl - 1; i >= 0; --i) {
    const Vec3& w = k.w[i];
    const Vec3& wd = k.wd[i];
    const Vec3& vd = k.vd[i];
    const Vec3& ms = p.first_moment[i];
    const Mat3& in = p.inertia[i];
    Vec3 fi = p.mass[i] * vd + wd.cross(ms) + w.cross(w.cross(ms));
    Vec3 ni = in * wd + w.cross(in * w) + ms.cross(vd);
    if (i + 1 < nl) {
      const Vec3 f_child = k.rot[i + 1] * f;
      ni += k.rot[i + 1] * n + chain.link(i + 1).origin.cross(f_child);
      fi += f_child;
    }
    f = fi;
    n = ni;
    tau[i] = chain.link(i).sign * n.z();
  }
  for (int i = 0; i < dof; ++i)
    tau[i] += p.rotor[i] * s.qdd[i] + p.friction[i] * s.qd[i];
  return tau;
}

JointMatrix crba(const RigidBodyChain& chain, const CompiledParams& p,
                 const JointVector& q) {
  const int dof = chain.dof();
  const int nl = chain.n_links();
  if (q.size() != dof) throw DimensionError("pose does not match the chain dof");
  std::array<Mat3, kMaxDof> rot;
  for (int i = 0; i < nl; ++i) rot[i] = chain.rotation(i, q[i]);

  // Composite bodies about each link origin, in the link frame.
  std::array<double, kMaxDof> cm;
  std::array<Vec3, kMaxDof> ch;
  std::array<Mat3, kMaxDof> cj;
  for (int i = nl - 1; i >= 0; --i) {
    cm[i] = p.mass[i];
    ch[i] = p.first_moment[i];
    cj[i] = p.inertia[i];
    if (i + 1 < nl) {
      const Mat3& r = rot[i + 1];
      const Vec3& o = chain.link(i + 1).origin;
      const Vec3 h = r * ch[i + 1];
      const Mat3 so = skew(o), sh = skew(h);
      cm[i] += cm[i + 1];
      ch[i] += h + cm[i + 1] * o;
      cj[i] += r * cj[i + 1] * r.transpose() - so * sh - sh * so -
               cm[i + 1] * so * so;
    }
  }

  JointMatrix m = JointMatrix::Zero(dof, dof);
  for (int j = 0; j < nl; ++j) {
    const double sj = chain.link(j).sign;
    // Momentum of composite j for a unit rate about its joint axis.
    Vec3 f = sj * Vec3(-ch[j].y(), ch[j].x(), 0.0);  // z x h
    Vec3 n = sj * cj[j].col(2);
    m(j, j) = sj * n.z();
    for (int i = j - 1; i >= 0; --i) {
      const Vec3 fp = rot[i + 1] * f;
      n = rot[i + 1] * n + chain.link(i + 1).origin.cross(fp);
      f = fp;
      m(i, j) = m(j, i) = chain.link(i).sign * n.z();
    }
  }
  for (int i = 0; i < dof; ++i) m(i, i) += p.rotor[i];
  return m;
}

void full_regressor(const RigidBodyChain& chain, const StandardLayout& layout,
                    const JointState& s, double gravity,
                    Eigen::Ref<Eigen::MatrixXd> out) {
  const int dof = chain.dof();
  check_state(s, dof);
  const int nl = chain.n_links();
  if (layout.n_links() != nl || layout.n_axes() != dof)
    throw DimensionError("layout does not match the chain");
  if (out.rows() != dof || out.cols() != layout.size())
    throw DimensionError("regressor output has the wrong shape");
  Kinematics k;
  forward_pass(chain, s, gravity, k);
  out.setZero();
  for (int col = 0; col < layout.size(); ++col) {
    const auto& e = layout.entry(col);
    if (e.kind == StandardLayout::Entry::Kind::kRotor) {
      out(e.index, col) = s.qdd[e.index];
      continue;
    }
    if (e.kind == StandardLayout::Entry::Kind::kFriction) {
      out(e.index, col) = s.qd[e.index];
      continue;
    }
    const int j = e.index;
    const Vec3& w = k.w[j];
    const Vec3& wd = k.wd[j];
    const Vec3& vd = k.vd[j];
    Vec3 f = Vec3::Zero(), n = Vec3::Zero();
    auto inertia_term = [&](int r, int c) {
      Mat3 in = Mat3::Zero();
      in(r, c) = 1.0;
      in(c, r) = 1.0;
      n = in * wd + w.cross(in * w);
    };
    auto moment_term = [&](int axis) {
      const Vec3 ms = Vec3::Unit(axis);
      f = wd.cross(ms) + w.cross(w.cross(ms));
      n = ms.cross(vd);
    };
    switch (e.param) {
      case LinkParam::kXX: inertia_term(0, 0); break;
      case LinkParam::kXY: inertia_term(0, 1); break;
      case LinkParam::kXZ: inertia_term(0, 2); break;
      case LinkParam::kYY: inertia_term(1, 1); break;
      case LinkParam::kYZ: inertia_term(1, 2); break;
      case LinkParam::kZZ: inertia_term(2, 2); break;
      case LinkParam::kMX: moment_term(0); break;
      case LinkParam::kMY: moment_term(1); break;
      case LinkParam::kMZ: moment_term(2); break;
      case LinkParam::kM: f = vd; break;
    }
    out(j, col) = chain.link(j).sign * n.z();
    for (int i = j - 1; i >= 0; --i) {
      const Vec3 fp = k.rot[i + 1] * f;
      n = k.rot[i + 1] * n + chain.link(i + 1).origin.cross(fp);
      f = fp;
      out(i, col) = chain.link(i).sign * n.z();
    }
  }
}

JointVector rnea_torque(const ChainDescription& chain,
                        const StandardInertialParams& params,
                        const JointState& state) {
  RigidBodyChain body(chain);
  if (static_cast<int>(params.links.size()) != chain.n_links())
    throw DimensionError("parameter link count does not match the chain");
  return rnea(body, compile(params, chain.dof()), state, chain.gravity);
}

RegressorEvaluator::RegressorEvaluator(const ChainDescription& chain,
                                       const BaseParamMapping& mapping)
    : body_(chain),
      layout_(mapping.layout),
      columns_(mapping.base_columns),
      scratch_(chain.dof(), mapping.layout.size()) {
  if (layout_.n_links() != chain.n_links() || layout_.n_axes() != chain.dof())
    throw DimensionError("mapping was built for a different chain");
}

void RegressorEvaluator::evaluate(const JointState& state,
                                  Eigen::Ref<Eigen::MatrixXd> out,
                                  bool with_gravity) const {
  if (out.rows() != dof() || out.cols() != columns())
    throw DimensionError("regressor output has the wrong shape");
  full_regressor(body_, layout_, state, with_gravity ? body_.gravity() : 0.0,
                 scratch_);
  for (int k = 0; k < columns(); ++k) out.col(k) = scratch_.col(columns_[k]);
}

Eigen::MatrixXd regressor(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const JointState& state) {
  RegressorEvaluator ev(chain, mapping);
  Eigen::MatrixXd w(chain.dof(), mapping.size());
  ev.evaluate(state, w);
  return w;
}

std::vector<JointMatrix> inertia_basis(const ChainDescription& chain,
                                       const BaseParamMapping& mapping,
                                       const JointVector& q) {
  const int dof = chain.dof();
  if (q.size() != dof) throw DimensionError("pose does not match the chain dof");
  RegressorEvaluator ev(chain, mapping);
  std::vector<JointMatrix> basis(mapping.size(), JointMatrix::Zero(dof, dof));
  JointState s{q, JointVector::Zero(dof), JointVector::Zero(dof)};
  Eigen::MatrixXd w(dof, mapping.size());
  for (int j = 0; j < dof; ++j) {
    s.qdd.setZero();
    s.qdd[j] = 1.0;
    ev.evaluate(s, w, false);
    for (int k = 0; k < mapping.size(); ++k) basis[k].col(j) = w.col(k);
  }
  return basis;
}

JointMatrix inertia_matrix(const ChainDescription& chain,
                           const BaseParamMapping& mapping,
                           const Eigen::VectorXd& phi, const JointVector& q) {
  if (phi.size() != mapping.size())
    throw DimensionError("parameter vector does not match the mapping");
  const int dof = chain.dof();
  if (q.size() != dof) throw DimensionError("pose does not match the chain dof");
  RegressorEvaluator ev(chain, mapping);
  JointMatrix m(dof, dof);
  JointState s{q, JointVector::Zero(dof), JointVector::Zero(dof)};
  Eigen::MatrixXd w(dof, mapping.size());
  for (int j = 0; j < dof; ++j) {
    s.qdd.setZero();
    s.qdd[j] = 1.0;
    ev.evaluate(s, w, false);
    m.col(j) = w * phi;
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale)
    throw Error("inertia matrix asymmetry " + text::format_double(asym) +
                " exceeds tolerance");
  return 0.5 * (m + m.transpose());
}

DynamicsModel::DynamicsModel(const ChainDescription& chain,
                             const BaseParamMapping& mapping,
                             const Eigen::VectorXd& phi)
    : body_(chain), params_(compile(mapping.expand(phi), mapping.layout)) {}

JointMatrix DynamicsModel::mass_matrix(const JointVector& q) const {
  return crba(body_, params_, q);
}

JointVector DynamicsModel::inverse_dynamics(const JointVector& q,
                                            const JointVector& qd,
                                            const JointVector& qdd) const {
  return rnea(body_, params_, JointState{q, qd, qdd}, body_.gravity());
}

JointVector DynamicsModel::bias(const JointVector& q,
                                const JointVector& qd) const {
  return rnea(body_, params_, JointState{q, qd, JointVector::Zero(dof())},
              body_.gravity());
}

JointVector DynamicsModel::forward(const JointVector& q, const JointVector& qd,
                                   const JointVector& tau) const {
  if (tau.size() != dof()) throw DimensionError("torque does not match dof");
  const JointMatrix m = mass_matrix(q);
  Eigen::LLT<JointMatrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw InfeasibleSimulationError("inertia matrix is not positive definite",
                                    min_eigenvalue(m), q);
  return llt.solve(tau - bias(q, qd));
}

JointVector forward_accel(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const Eigen::VectorXd& phi, const JointVector& q,
                          const JointVector& qd, const JointVector& tau) {
  return DynamicsModel(chain, mapping, phi).forward(q, qd, tau);
}

double min_eigenvalue(const JointMatrix& m) {
  Eigen::SelfAdjointEigenSolver<JointMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

AuditDomain default_audit_domain(const ChainDescription& chain,
                                 int points_per_joint) {
  return AuditDomain{chain.audit_domain, points_per_joint};
}

std::size_t grid_size(const AuditDomain& domain) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < domain.intervals.size(); ++i)
    n *= static_cast<std::size_t>(domain.points_per_joint);
  return n;
}

JointVector grid_pose(const AuditDomain& domain, std::size_t index, int dof) {
  const int pts = domain.points_per_joint;
  const int nj = static_cast<int>(domain.intervals.size());
  JointVector q = JointVector::Zero(dof);
  for (int j = nj - 1; j >= 0; --j) {
    const int i = static_cast<int>(index % pts);
    index /= pts;
    const auto& iv = domain.intervals[j];
    q[j] = iv.lower + (iv.upper - iv.lower) * i / (pts - 1);
  }
  return q;
}

AuditResult min_eig_audit(const ChainDescription& chain,
                          const BaseParamMapping& mapping,
                          const Eigen::VectorXd& phi, const AuditDomain& domain,
                          int worst_k) {
  if (domain.points_per_joint < 2)
    throw ConfigError("audit grid needs at least 2 points per joint");
  if (static_cast<int>(domain.intervals.size()) != chain.n_links())
    throw DimensionError("audit domain needs one interval per link");
  DynamicsModel model(chain, mapping, phi);
  const int dof = chain.dof();
  const std::size_t total = grid_size(domain);

  auto worse = [](const PoseEigenvalue& a, const PoseEigenvalue& b) {
    return a.min_eigenvalue < b.min_eigenvalue ||
           (a.min_eigenvalue == b.min_eigenvalue && a.index < b.index);
  };
  // Max-heap on "least bad" so the top is evicted first.
  std::priority_queue<PoseEigenvalue, std::vector<PoseEigenvalue>,
                      decltype(worse)>
      heap(worse);

  AuditResult res;
  res.poses = total;
  res.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t idx = 0; idx < total; ++idx) {
    JointVector q = grid_pose(domain, idx, dof);
    const double lam = min_eigenvalue(model.mass_matrix(q));
    if (lam < res.min_eigenvalue) {
      res.min_eigenvalue = lam;
      res.argmin_pose = q;
    }
    if (worst_k > 0) {
      PoseEigenvalue pe{lam, idx, q};
      if (static_cast<int>(heap.size()) < worst_k) {
        heap.push(std::move(pe));
      } else if (worse(pe, heap.top())) {
        heap.pop();
        heap.push(std::move(pe));
      }
    }
  }
  while (!heap.empty()) {
    res.worst.push_back(heap.top());
    heap.pop();
  }
  std::reverse(res.worst.begin(), res.worst.end());
  return res;
}

void write_worst_poses_csv(const AuditResult& result,
                           const std::filesystem::path& path) {
  std::string out = "rank,grid_index,min_eigenvalue";
  const int dof = result.worst.empty()
                      ? static_cast<int>(result.argmin_pose.size())
                      : static_cast<int>(result.worst.front().pose.size());
  for (int j = 0; j < dof; ++j) out += ",q" + std::to_string(j + 1) + "_deg";
  out += "\n";
  int rank = 1;
  for (const auto& pe : result.worst) {
    out += std::to_string(rank++) + "," + std::to_string(pe.index) + "," +
           text::format_double(pe.min_eigenvalue);
    for (int j = 0; j < pe.pose.size(); ++j)
      out += "," + text::format_double(rad2deg(pe.pose[j]), 10);
    out += "\n";
  }
  text::write_file(path, out);
}

}  // namespace dynid
