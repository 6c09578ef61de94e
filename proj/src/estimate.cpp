#include "dynid/estimate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "dynid/errors.hpp"
#include "dynid/text.hpp"

namespace dynid {

// ---------------------------------------------------------------- OLS

Eigen::VectorXd ols_solve(const Eigen::MatrixXd& w, const Eigen::VectorXd& tau,
                          const std::vector<std::string>& names) {
  if (w.rows() != tau.size()) throw DimensionError("W and tau disagree in rows");
  if (w.rows() < w.cols())
    throw RankDeficiencyError("fewer equations than parameters", {});
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-8 * sv[0];
  std::vector<std::string> details;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > tol) continue;
    const Eigen::VectorXd v = svd.matrixV().col(i);
    std::vector<Eigen::Index> order(v.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::abs(v[a]) > std::abs(v[b]);
    });
    std::string line = "null direction:";
    for (int k = 0; k < 4 && k < v.size(); ++k) {
      if (std::abs(v[order[k]]) < 1e-3) break;
      const std::string name = order[k] < static_cast<Eigen::Index>(names.size())
                                   ? names[order[k]]
                                   : "p" + std::to_string(order[k] + 1);
      line += " " + text::format_double(v[order[k]], 3) + "*" + name;
    }
    details.push_back(line);
  }
  if (!details.empty())
    throw RankDeficiencyError("regressor is rank deficient (" +
                                  std::to_string(details.size()) +
                                  " null directions)",
                              details);
  return w.colPivHouseholderQr().solve(tau);
}

Eigen::VectorXd ols_solve(const RegressionProblem& problem,
                          const std::vector<std::string>& names) {
  return ols_solve(problem.w, problem.tau, names);
}

double condition_number(const Eigen::MatrixXd& w) {
  if (w.size() == 0) throw DimensionError("empty regressor");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
  const auto& sv = svd.singularValues();
  const double lo = sv[sv.size() - 1];
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return sv[0] / lo;
}

double condition_number(const RegressionProblem& problem) {
  return condition_number(problem.w);
}

// ---------------------------------------------------------------- PD audit

PdAuditor::PdAuditor(ChainDescription chain, BaseParamMapping mapping,
                     AuditDomain domain)
    : chain_(std::move(chain)),
      mapping_(std::move(mapping)),
      domain_(std::move(domain)) {}

AuditResult PdAuditor::audit(const Eigen::VectorXd& phi, int worst_k) const {
  return min_eig_audit(chain_, mapping_, phi, domain_, worst_k);
}

bool PdAuditor::is_pd(const Eigen::VectorXd& phi, double margin) const {
  return audit(phi).min_eigenvalue > margin;
}

std::vector<JointMatrix> PdAuditor::basis(const JointVector& q) const {
  return inertia_basis(chain_, mapping_, q);
}

std::string_view route_name(Route r) {
  return r == Route::kOlsClie ? "O-C" : "O-S-C";
}

Route pd_route(const AuditResult& audit) {
  return audit.min_eigenvalue > 0.0 ? Route::kOlsClie : Route::kOlsSdpClie;
}

Route pd_route(const Eigen::VectorXd& phi, const PdAuditor& auditor) {
  return pd_route(auditor.audit(phi));
}

// ---------------------------------------------------------------- LMI

namespace {

// Blocks flattened to (n^2 x vars); an optional slack variable (last) adds
// the identity to every block.
struct BarrierSet {
  std::vector<Eigen::MatrixXd> g;
  std::vector<int> n;
  double offset = 0.0;
  bool slack = false;
  int vars = 0;
  int total_dim = 0;
};

struct BarrierEval {
  bool ok = false;
  double value = 0.0;  // -sum log det
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

Eigen::MatrixXd block_matrix(const BarrierSet& b, std::size_t i,
                             const Eigen::VectorXd& y) {
  const int n = b.n[i];
  const int px = static_cast<int>(b.g[i].cols());
  Eigen::VectorXd v = b.g[i] * y.head(px);
  Eigen::MatrixXd f = Eigen::Map<Eigen::MatrixXd>(v.data(), n, n);
  double diag = b.offset + (b.slack ? y[y.size() - 1] : 0.0);
  f.diagonal().array() += diag;
  return 0.5 * (f + f.transpose());
}

// Value only; false when some block is not positive definite.
bool barrier_value(const BarrierSet& b, const Eigen::VectorXd& y, double& value) {
  value = 0.0;
  for (std::size_t i = 0; i < b.g.size(); ++i) {
    Eigen::LLT<Eigen::MatrixXd> llt(block_matrix(b, i, y));
    if (llt.info() != Eigen::Success) return false;
    const auto d = llt.matrixL().toDenseMatrix().diagonal();
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      if (!(d[k] > 0.0)) return false;
      value -= 2.0 * std::log(d[k]);
    }
  }
  return std::isfinite(value);
}

BarrierEval barrier_eval(const BarrierSet& b, const Eigen::VectorXd& y) {
  BarrierEval e;
  const int m = static_cast<int>(y.size());
  e.grad = Eigen::VectorXd::Zero(m);
  e.hess = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < b.g.size(); ++i) {
    const int n = b.n[i];
    const int px = static_cast<int>(b.g[i].cols());
    Eigen::LLT<Eigen::MatrixXd> llt(block_matrix(b, i, y));
    if (llt.info() != Eigen::Success) return e;
    const Eigen::MatrixXd l = llt.matrixL();
    for (int k = 0; k < n; ++k) {
      if (!(l(k, k) > 0.0)) return e;
      e.value -= 2.0 * std::log(l(k, k));
    }
    const Eigen::MatrixXd linv =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd bm(n * n, m);
    bm.setZero();
    for (int k = 0; k < px; ++k) {
      Eigen::Map<const Eigen::MatrixXd> a(b.g[i].col(k).data(), n, n);
      Eigen::MatrixXd t = linv * a * linv.transpose();
      bm.col(k) = Eigen::Map<Eigen::VectorXd>(t.data(), n * n);
    }
    if (b.slack) {
      Eigen::MatrixXd t = linv * linv.transpose();
      bm.col(m - 1) = Eigen::Map<Eigen::VectorXd>(t.data(), n * n);
    }
    for (int k = 0; k < m; ++k) {
      Eigen::Map<const Eigen::MatrixXd> t(bm.col(k).data(), n, n);
      e.grad[k] -= t.trace();
    }
    e.hess.noalias() += bm.transpose() * bm;
  }
  e.ok = std::isfinite(e.value);
  return e;
}

// Objective times t: phase II uses 0.5 t ||x - x0||^2, phase I uses
// t s - log(R^2 - ||x - x0||^2).
struct Objective {
  bool phase1 = false;
  Eigen::VectorXd x0;
  double radius2 = 0.0;

  bool value(const Eigen::VectorXd& y, double t, double& v) const {
    const int px = static_cast<int>(x0.size());
    const double r2 = (y.head(px) - x0).squaredNorm();
    if (!phase1) {
      v = 0.5 * t * r2;
      return true;
    }
    if (!(r2 < radius2)) return false;
    v = t * y[px] - std::log(radius2 - r2);
    return true;
  }

  void derivatives(const Eigen::VectorXd& y, double t, Eigen::VectorXd& g,
                   Eigen::MatrixXd& h) const {
    const int px = static_cast<int>(x0.size());
    const Eigen::VectorXd dx = y.head(px) - x0;
    if (!phase1) {
      g.head(px) += t * dx;
      h.topLeftCorner(px, px).diagonal().array() += t;
      return;
    }
    const double gap = radius2 - dx.squaredNorm();
    g[px] += t;
    g.head(px) += 2.0 * dx / gap;
    h.topLeftCorner(px, px).diagonal().array() += 2.0 / gap;
    h.topLeftCorner(px, px) += 4.0 * dx * dx.transpose() / (gap * gap);
  }
};

// Damped Newton centering of t*f + barrier. `stop` lets phase I quit as
// soon as the slack turns negative.
struct Centering {
  int steps = 0;
  bool converged = false;
};

Centering center(const BarrierSet& b, const Objective& obj, double t,
                 Eigen::VectorXd& y, int max_steps,
                 const std::function<bool(const Eigen::VectorXd&)>& stop) {
  Centering c;
  int& steps = c.steps;
  for (; steps < max_steps; ++steps) {
    BarrierEval e = barrier_eval(b, y);
    if (!e.ok) throw EstimationError("barrier iterate left the interior");
    obj.derivatives(y, t, e.grad, e.hess);
    const Eigen::VectorXd dy = -e.hess.ldlt().solve(e.grad);
    const double decrement = -e.grad.dot(dy);
    if (!(decrement > 1e-9)) {
      c.converged = true;
      break;
    }
    // Both objectives are self-concordant: the damped step 1/(1+lambda)
    // decreases them without comparing large absolute values, which lose
    // the decrease to rounding once t is large. Halving only guards the domain.
    const double lambda = std::sqrt(decrement);
    double alpha = lambda > 0.25 ? 1.0 / (1.0 + lambda) : 1.0;
    bool moved = false;
    while (alpha > 1e-16) {
      const Eigen::VectorXd cand = y + alpha * dy;
      double bv = 0.0, ov = 0.0;
      if (obj.value(cand, t, ov) && barrier_value(b, cand, bv)) {
        y = cand;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
    if (stop && stop(y)) {
      ++steps;
      return c;
    }
  }
  return c;
}

double min_block_eigenvalue(const BarrierSet& b, const Eigen::VectorXd& y) {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.g.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block_matrix(b, i, y),
                                                      Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues()[0]);
  }
  return lo;
}

}  // namespace

LmiSolution project_lmi(const std::vector<LmiBlock>& blocks,
                        const Eigen::VectorXd& x0, double margin,
                        const LmiOptions& options) {
  const int p = static_cast<int>(x0.size());
  if (blocks.empty()) return {x0, true, 0};
  BarrierSet set;
  set.offset = -margin;
  set.vars = p;
  for (const auto& blk : blocks) {
    if (static_cast<int>(blk.basis.size()) != p)
      throw DimensionError("LMI basis size differs from the parameter count");
    const int n = static_cast<int>(blk.basis.front().rows());
    Eigen::MatrixXd g(n * n, p);
    for (int k = 0; k < p; ++k)
      g.col(k) = Eigen::Map<const Eigen::VectorXd>(blk.basis[k].data(), n * n);
    set.g.push_back(std::move(g));
    set.n.push_back(n);
    set.total_dim += n;
  }

  LmiSolution sol;
  Eigen::VectorXd x = x0;
  const double lam0 = min_block_eigenvalue(set, x0);
  if (!(lam0 > 0.0)) {
    // Phase I: minimize the slack s with M_i(x) - margin I + s I > 0 inside a
    // ball around x0.
    BarrierSet ph1 = set;
    ph1.slack = true;
    Objective obj{true, x0, std::pow(10.0 * x0.norm() + 1.0, 2)};
    Eigen::VectorXd y(p + 1);
    y.head(p) = x0;
    y[p] = -lam0 + 0.1 * std::abs(lam0) + 1e-6;
    const double m = ph1.total_dim + 1.0;
    double t = m / std::max(std::abs(y[p]), 1e-12);
    bool found = false;
    for (int outer = 0; outer < options.max_outer; ++outer) {
      const Centering c = center(ph1, obj, t, y, options.max_newton,
                                 [&](const Eigen::VectorXd& v) { return v[p] < 0.0; });
      sol.newton_steps += c.steps;
      if (y[p] < 0.0) {
        found = true;
        break;
      }
      // On the central path s - m/t bounds the optimal slack from below.
      const double gap = m / t;
      if ((c.converged && y[p] - gap > 0.0) || gap < options.gap_abs) break;
      t *= options.mu;
    }
    if (!found) {
      sol.x = y.head(p);
      sol.feasible = false;
      return sol;
    }
    x = y.head(p);
  }

  Objective obj{false, x0, 0.0};
  const double m = set.total_dim;
  BarrierEval e = barrier_eval(set, x);
  const double dist = (x - x0).norm();
  double t = dist > 0.0 ? e.grad.norm() / dist
                        : e.grad.norm() / (1e-6 * (1.0 + x0.norm()));
  t = std::clamp(t, 1e-3, 1e12);
  for (int outer = 0; outer < options.max_outer; ++outer) {
    sol.newton_steps += center(set, obj, t, x, options.max_newton, nullptr).steps;
    const double f = 0.5 * (x - x0).squaredNorm();
    if (m / t <= std::max(options.gap_abs, options.gap_rel * f)) break;
    t *= options.mu;
  }
  sol.x = x;
  sol.feasible = true;
  return sol;
}

// ---------------------------------------------------------------- SDP

std::optional<SdpResult> project_at_margin(const Eigen::VectorXd& phi0,
                                           double margin,
                                           const PdAuditor& auditor,
                                           const SdpOptions& options) {
  const int dof = auditor.chain().dof();
  AuditResult a = auditor.audit(phi0, options.initial_poses);
  SdpResult r;
  if (a.min_eigenvalue >= margin) {
    r.phi = phi0;
    r.margin = margin;
    r.min_eigenvalue = a.min_eigenvalue;
    r.unchanged = true;
    return r;
  }
  std::set<std::size_t> active;
  std::vector<LmiBlock> blocks;
  auto add = [&](const AuditResult& res, double below) {
    int added = 0;
    for (const auto& w : res.worst) {
      if (w.min_eigenvalue >= below) break;
      if (!active.insert(w.index).second) continue;
      blocks.push_back({auditor.basis(grid_pose(auditor.domain(), w.index, dof))});
      ++added;
    }
    return added;
  };
  // Seed with the worst poses of the anchor regardless of sign.
  add(a, std::numeric_limits<double>::infinity());
  for (int round = 1; round <= options.max_rounds; ++round) {
    const LmiSolution s = project_lmi(blocks, phi0, margin, options.lmi);
    if (!s.feasible) return std::nullopt;
    const AuditResult check = auditor.audit(s.x, options.poses_per_round);
    if (check.min_eigenvalue >= margin - options.verify_tol) {
      r.phi = s.x;
      r.margin = margin;
      r.min_eigenvalue = check.min_eigenvalue;
      r.rounds = round;
      r.constraint_poses = static_cast<int>(active.size());
      return r;
    }
    if (add(check, margin - options.verify_tol) == 0) return std::nullopt;
  }
  return std::nullopt;
}

SdpResult sdp_project(const Eigen::VectorXd& phi0, const PdAuditor& auditor,
                      const SdpOptions& options) {
  std::vector<double> ladder = options.ladder;
  std::sort(ladder.begin(), ladder.end());
  for (double eps : ladder)
    if (auto r = project_at_margin(phi0, eps, auditor, options)) return *r;
  throw LadderExhaustedError("no margin in the ladder could be verified");
}

SdpResult pd_rescue(const Eigen::VectorXd& phi, const PdAuditor& auditor,
                    const SdpOptions& options) {
  const AuditResult a = auditor.audit(phi);
  if (a.min_eigenvalue > 0.0) {
    SdpResult r;
    r.phi = phi;
    r.min_eigenvalue = a.min_eigenvalue;
    r.unchanged = true;
    return r;
  }
  auto r = project_at_margin(phi, 0.0, auditor, options);
  if (!r) throw EstimationError("PD rescue failed to find a feasible point");
  return *r;
}

// ---------------------------------------------------------------- CLIE

Bounds clie_bounds(const Eigen::VectorXd& phi0,
                   const std::vector<std::string>& names,
                   double min_half_width, double positive_floor) {
  const Eigen::Index p = phi0.size();
  Bounds b{Eigen::VectorXd(p), Eigen::VectorXd(p)};
  for (Eigen::Index k = 0; k < p; ++k) {
    const double half = std::max(100.0 * std::abs(phi0[k]), min_half_width);
    b.lower[k] = -half;
    b.upper[k] = half;
    if (k < static_cast<Eigen::Index>(names.size())) {
      const ParamGroup g = group_of(names[k]);
      if (g == ParamGroup::kRotor || g == ParamGroup::kFriction)
        b.lower[k] = positive_floor;
    }
  }
  return b;
}

Eigen::VectorXd clie_residual(const ClieCase& c, const Eigen::VectorXd& phi) {
  SimLog sim = simulate_closed_loop(*c.chain, *c.mapping, phi, *c.reference,
                                    *c.gains, *c.plant, Imperfections::none());
  sim.tau = sim.u;
  const DecimatedLog d = lowpass_and_resample(sim, c.ts_ms);
  const DecimatedLog& m = *c.measured;
  if (d.tau.rows() != m.tau.rows() || d.tau.cols() != m.tau.cols())
    throw DimensionError("simulated and measured records differ in length");
  const Eigen::MatrixXd diff = (d.tau - m.tau).transpose();
  return Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size());
}

ClieResult bounded_levenberg_marquardt(const ResidualFn& residual,
                                       const Eigen::VectorXd& x0,
                                       const Bounds& bounds,
                                       const ClieOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index p = x0.size();
  if (bounds.lower.size() != p || bounds.upper.size() != p)
    throw DimensionError("bounds disagree with the parameter count");
  auto clamp = [&](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.cwiseMax(bounds.lower).cwiseMin(bounds.upper));
  };

  ClieResult res;
  Eigen::VectorXd x = clamp(x0);
  Eigen::VectorXd r = residual(x);
  ++res.simulations;
  const Eigen::Index n = r.size();
  if (n == 0) throw EstimationError("empty residual");
  // Empty when the simulation fails (divergent or non-PD model).
  auto attempt = [&](const Eigen::VectorXd& xx) -> std::optional<Eigen::VectorXd> {
    ++res.simulations;
    try {
      Eigen::VectorXd v = residual(xx);
      if (v.size() == n && v.allFinite()) return v;
    } catch (const Error&) {
    }
    return std::nullopt;
  };
  auto safe = [&](const Eigen::VectorXd& xx) {
    auto v = attempt(xx);
    return v ? *v : Eigen::VectorXd::Constant(n, options.failure_residual);
  };
  auto rms = [&](double cost) { return std::sqrt(2.0 * cost / n); };

  double cost = 0.5 * r.squaredNorm();
  res.initial_rms = rms(cost);
  res.cost_history.push_back(cost);
  double lambda = options.lambda0;

  if (res.initial_rms <= options.atol) {
    res.converged = true;
  } else {
    // Steps are damped in variables scaled by the seed magnitudes so that a
    // weakly excited parameter cannot take an unbounded step.
    const Eigen::VectorXd scale = x.cwiseAbs().cwiseMax(options.jacobian_floor);
    Eigen::MatrixXd jac(n, p);
    while (res.iterations < options.max_iterations && !res.converged) {
      ++res.iterations;
      for (Eigen::Index k = 0; k < p; ++k) {
        const double h =
            options.jacobian_step * std::max(std::abs(x[k]), options.jacobian_floor);
        Eigen::VectorXd xp = x;
        double step = h;
        if (x[k] + h > bounds.upper[k]) step = -h;
        xp[k] = x[k] + step;
        auto rp = attempt(xp);
        if (!rp) {
          xp[k] = x[k] - step;
          step = -step;
          rp = attempt(xp);
        }
        jac.col(k) = rp ? Eigen::VectorXd((*rp - r) / step) : Eigen::VectorXd::Zero(n);
      }
      const Eigen::MatrixXd js = jac * scale.asDiagonal();
      const Eigen::MatrixXd a = js.transpose() * js;
      const Eigen::VectorXd g = js.transpose() * r;
      Eigen::VectorXd d = a.diagonal();
      const double dfloor = std::max(1e-30, options.damping_floor * d.maxCoeff());
      d = d.cwiseMax(dfloor);
      bool accepted = false;
      while (lambda < 1e16) {
        Eigen::MatrixXd lhs = a;
        lhs.diagonal() += lambda * d;
        const Eigen::VectorXd delta = scale.cwiseProduct(lhs.ldlt().solve(-g));
        const Eigen::VectorXd xn = clamp(x + delta);
        if ((xn - x).norm() <= options.xtol * (x.norm() + options.xtol)) {
          res.converged = true;
          break;
        }
        const Eigen::VectorXd rn = safe(xn);
        const double cn = 0.5 * rn.squaredNorm();
        if (cn < cost) {
          const double drop = cost - cn;
          x = xn;
          r = rn;
          cost = cn;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          res.cost_history.push_back(cost);
          if (drop <= options.ftol * (cost + drop) || rms(cost) <= options.atol)
            res.converged = true;
          break;
        }
        lambda *= 10.0;
      }
      if (!accepted && !res.converged) res.converged = true;  // no descent left
    }
  }
  res.phi = x;
  res.residual_rms = rms(cost);
  res.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return res;
}

ClieResult clie_refine(const ClieCase& c, const Eigen::VectorXd& phi_init,
                       const Bounds& bounds, const PdAuditor& auditor,
                       const ClieOptions& options) {
  if (!c.chain || !c.mapping || !c.reference || !c.gains || !c.plant ||
      !c.measured)
    throw EstimationError("CLIE case is incomplete");
  if (!auditor.is_pd(phi_init))
    throw EstimationError("CLIE seed is not PD over the audit grid");
  return bounded_levenberg_marquardt(
      [&](const Eigen::VectorXd& phi) { return clie_residual(c, phi); },
      phi_init, bounds, options);
}

std::string routing_csv(const std::vector<RouteRecord>& records) {
  std::string out = "Tr,Ts_ms,kappa,PD,Route,eps_PD,t_CLIE_s,status\n";
  for (const auto& r : records) {
    const bool routed = r.phi_ols.size() > 0;
    out += r.label + "," + text::format_double(r.ts_ms) + ",";
    out += (routed ? text::format_double(r.kappa, 6) : std::string()) + ",";
    out += routed ? (r.ols_pd ? "yes," : "no,") : ",";
    out += (routed ? std::string(route_name(r.route)) : std::string()) + ",";
    out += (r.eps_pd ? text::format_double(*r.eps_pd) : std::string()) + ",";
    out += (r.has_clie() ? text::format_double(r.clie_runtime_s, 4) : std::string()) + ",";
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out += status + "\n";
  }
  return out;
}

}  // namespace dynid
