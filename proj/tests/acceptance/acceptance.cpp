// Acceptance checks: one PASS/FAIL line per criterion.
#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "dynid/chain_model.hpp"
#include "dynid/dynamics.hpp"
#include "dynid/errors.hpp"
#include "dynid/estimate.hpp"
#include "dynid/excitation.hpp"
#include "dynid/pipeline.hpp"
#include "dynid/preprocess.hpp"
#include "dynid/text.hpp"

namespace fs = std::filesystem;
using namespace dynid;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Settings {
  fs::path scratch;
  double c7_ts = 40.0;
  int c7_iterations = 3;
  std::vector<std::uint64_t> c6_seeds{1, 2, 3};
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Shared {
  PipelineConfig config;
  PipelineContext ctx;
  PdAuditor auditor;
  Shared()
      : config(load_pipeline_config(default_config_dir() / "pipeline.json")),
        ctx(load_context(config)),
        auditor(ctx.auditor()) {}
};

const Shared& shared() {
  static const Shared s;
  return s;
}

// 1. Base regressor against recursive Newton-Euler on 1000 random states.
Verdict regressor_oracle(const Settings&) {
  const auto& s = shared();
  const DynamicsModel model(s.ctx.chain, s.ctx.mapping, s.ctx.truth);
  const RegressorEvaluator ev(s.ctx.chain, s.ctx.mapping);
  Eigen::MatrixXd w(ev.dof(), ev.columns());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = ev.dof();
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    JointState st{JointVector(n), JointVector(n), JointVector(n)};
    for (int j = 0; j < n; ++j) {
      st.q[j] = kPi * u(rng);
      st.qd[j] = 3.0 * u(rng);
      st.qdd[j] = 10.0 * u(rng);
    }
    ev.evaluate(st, w);
    const JointVector tau = model.inverse_dynamics(st.q, st.qd, st.qdd);
    worst = std::max(worst, (w * s.ctx.truth - tau).cwiseAbs().maxCoeff() /
                                std::max(1.0, tau.cwiseAbs().maxCoeff()));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-9 && t < 10.0,
          "max rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

// 2. Numerical base reduction of the default chain.
Verdict base_count(const Settings&) {
  const BaseParamMapping m = numerical_base_reduction(build_default_chain(), 2000, 1);
  std::map<ParamGroup, int> g;
  for (const auto& n : m.names) ++g[group_of(n)];
  const int i = g[ParamGroup::kInertia], f = g[ParamGroup::kFirstMoment],
            r = g[ParamGroup::kRotor], v = g[ParamGroup::kFriction];
  std::ostringstream os;
  os << m.size() << " params, groups " << i << "/" << f << "/" << r << "/" << v;
  return {m.size() == 39 && i == 13 && f == 12 && r == 6 && v == 8, os.str()};
}

// 3. Noiseless AG02 through the full pipeline recovers the planted vector.
Verdict planted_truth(const Settings& st) {
  const auto& s = shared();
  PipelineConfig c = s.config;
  c.ts_ms = {10};
  c.trajectories = {"AG02"};
  c.imperfections = Imperfections::none();
  c.output_dir = st.scratch / "planted";
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult r = run_pipeline(c, s.ctx);
  const double t = seconds_since(t0);
  const Eigen::VectorXd& truth = s.ctx.truth;
  int bad = 0;
  double worst = 0.0;
  std::string worst_name;
  for (int i = 0; i < truth.size(); ++i) {
    const double tol = std::max(0.01 * std::abs(truth[i]), 1e-5);
    const double err = std::abs(r.phi_final[i] - truth[i]);
    if (err > tol) ++bad;
    if (err / tol > worst) worst = err / tol, worst_name = s.ctx.mapping.names[i];
  }
  const int iterations = r.records.empty() ? 0 : r.records.front().clie_iterations;
  std::ostringstream os;
  os << bad << " of " << truth.size() << " outside tolerance, worst " << worst_name << " at "
     << fmt("%.3f", worst) << " x tol, CLIE iterations " << iterations << ", rescue "
     << (r.rescue.unchanged ? "no-op" : "moved") << ", " << fmt("%.0f", t) << " s";
  return {bad == 0 && r.rescue.unchanged && t < 1800.0, os.str()};
}

// Minimum eigenvalue over the audit grid by direct eigendecomposition.
double brute_min_eig(const Eigen::VectorXd& phi) {
  const auto& s = shared();
  const DynamicsModel model(s.ctx.chain, s.ctx.mapping, phi);
  const AuditDomain& d = s.auditor.domain();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid_size(d); ++k) {
    const JointMatrix m = model.mass_matrix(grid_pose(d, k, s.ctx.chain.dof()));
    lo = std::min(lo, Eigen::SelfAdjointEigenSolver<JointMatrix>(m, Eigen::EigenvaluesOnly)
                          .eigenvalues()[0]);
  }
  return lo;
}

// 4. Audit verdicts on the reference vector and with ZZR6 = -0.01.
Verdict audit_flip(const Settings&) {
  const auto& s = shared();
  Eigen::VectorXd flipped = s.ctx.truth;
  flipped[s.ctx.mapping.index_of("ZZR6")] = -0.01;
  const double a = s.auditor.audit(s.ctx.truth).min_eigenvalue;
  const double b = s.auditor.audit(flipped).min_eigenvalue;
  const double ba = brute_min_eig(s.ctx.truth), bb = brute_min_eig(flipped);
  const bool agree = std::abs(a - ba) <= 1e-9 && std::abs(b - bb) <= 1e-9;
  return {a > 0.0 && b < 0.0 && agree,
          "lambda_min " + fmt("%.4e", a) + " -> " + fmt("%.4e", b) + ", brute force " +
              fmt("%.4e", ba) + " / " + fmt("%.4e", bb)};
}

JointMatrix sym2(double a, double b, double c) {
  JointMatrix m(2, 2);
  m << a, b, b, c;
  return m;
}

double block_min_eig(const std::vector<LmiBlock>& blocks, const Eigen::VectorXd& x) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) {
    JointMatrix m = JointMatrix::Zero(2, 2);
    for (std::size_t k = 0; k < b.basis.size(); ++k) m += x[k] * b.basis[k];
    lo = std::min(lo, Eigen::SelfAdjointEigenSolver<JointMatrix>(m).eigenvalues()[0]);
  }
  return lo;
}

// Grid search for the nearest feasible point, refined twice around the best.
Eigen::Vector2d brute_project(const std::vector<LmiBlock>& blocks, const Eigen::Vector2d& x0,
                              double margin, double lo, double hi) {
  Eigen::Vector2d best(0, 0), center(0.5 * (lo + hi), 0.5 * (lo + hi));
  double half = 0.5 * (hi - lo);
  for (int level = 0; level < 3; ++level) {
    const int n = 1000;
    double bd = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const Eigen::Vector2d x(center[0] - half + 2 * half * i / n,
                                center[1] - half + 2 * half * j / n);
        const double d = (x - x0).norm();
        if (d < bd && block_min_eig(blocks, x) >= margin) bd = d, best = x;
      }
    center = best;
    half *= 0.01;
  }
  return best;
}

// 5. LMI projection against brute force, idempotence and verified margins.
Verdict sdp_contract(const Settings&) {
  struct Toy {
    std::vector<LmiBlock> blocks;
    Eigen::Vector2d x0;
    double margin, lo, hi;
  };
  const std::vector<Toy> toys{
      {{LmiBlock{{sym2(1, 0, 1), sym2(0, 1, 0)}}}, {0.5, 1.0}, 0.001, 0.0, 1.5},
      {{LmiBlock{{sym2(1, 0, 0), sym2(0, 0.5, 1)}}, LmiBlock{{sym2(1, 0, 2), sym2(1, 0, -1)}}},
       {0.1, 0.5},
       0.0,
       -1.0,
       2.0},
      {{LmiBlock{{sym2(2, 0, 1), sym2(1, 0, -1)}}}, {0.2, 0.4}, 0.002, -1.0, 2.0}};
  double dist_gap = 0.0, toy_margin = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (const Toy& t : toys) {
    const LmiSolution s = project_lmi(t.blocks, t.x0, t.margin);
    if (!s.feasible) {
      ok = false;
      continue;
    }
    const Eigen::Vector2d bf = brute_project(t.blocks, t.x0, t.margin, t.lo, t.hi);
    dist_gap = std::max(dist_gap, std::abs((s.x - t.x0).norm() - (bf - t.x0).norm()));
    toy_margin = std::min(toy_margin, block_min_eig(t.blocks, s.x) - t.margin);
  }

  const auto& sh = shared();
  const LmiBlock anchor_block{{sym2(1, 0, 1), sym2(0, 1, 0)}};
  const Eigen::Vector2d feasible_x(1.0, 0.2);
  double idem = (project_lmi({anchor_block}, feasible_x, 0.001).x - feasible_x)
                    .cwiseAbs().maxCoeff();
  const SdpResult same = sdp_project(sh.ctx.truth, sh.auditor);
  idem = std::max(idem, (same.phi - sh.ctx.truth).cwiseAbs().maxCoeff());

  Eigen::VectorXd flipped = sh.ctx.truth;
  flipped[sh.ctx.mapping.index_of("ZZR6")] = -0.01;
  const SdpResult proj = sdp_project(flipped, sh.auditor);
  const double full_grid = sh.auditor.audit(proj.phi).min_eigenvalue - proj.margin;
  const double slack = std::min(toy_margin, full_grid);

  ok = ok && dist_gap <= 1e-4 && idem <= 1e-9 && slack >= -1e-9;
  return {ok, "distance gap " + fmt("%.2e", dist_gap) + ", idempotence " + fmt("%.1e", idem) +
                  ", worst margin slack " + fmt("%.2e", slack)};
}

// 6. Non-PD OLS counts per Ts with every imperfection enabled.
Verdict routing_trend(const Settings& st) {
  const auto& s = shared();
  const std::vector<double> ts{10, 20, 40, 80};
  bool ok = true;
  std::ostringstream os;
  for (std::uint64_t seed : st.c6_seeds) {
    PipelineConfig c = s.config;
    c.seed = seed;
    c.imperfections = Imperfections::all();
    std::vector<int> non_pd(ts.size(), 0), failed(ts.size(), 0);
    for (const auto& spec : s.ctx.catalog.identification) {
      const SimLog log = measure(s.ctx, c, spec);
      for (std::size_t i = 0; i < ts.size(); ++i) {
        try {
          DecimatedLog dec = lowpass_and_resample(log, ts[i]);
          differentiate(dec);
          const RegressionProblem p = stack(s.ctx.chain, s.ctx.mapping, dec);
          const Eigen::VectorXd phi = ols_solve(p, s.ctx.mapping.names);
          if (pd_route(phi, s.auditor) == Route::kOlsSdpClie) ++non_pd[i];
        } catch (const Error&) {
          ++failed[i];
        }
      }
    }
    os << "seed " << seed << ":";
    for (std::size_t i = 0; i < ts.size(); ++i) {
      os << (i ? "/" : " ") << non_pd[i];
      if (i && non_pd[i] > non_pd[i - 1]) ok = false;
    }
    int f = 0;
    for (int x : failed) f += x;
    if (f) os << " (" << f << " failed)";
    os << "; ";
  }
  return {ok, os.str() + "non-PD at 10/20/40/80 ms"};
}

// 7. Dispersion of the OLS, SDP and CLIE clouds on the 40-trajectory run.
Verdict cloud_contraction(const Settings& st) {
  const auto& s = shared();
  PipelineConfig c = s.config;
  c.ts_ms = {st.c7_ts};
  c.clie.max_iterations = st.c7_iterations;
  c.output_dir = st.scratch / "contraction";
  const PipelineResult r = run_pipeline(c, s.ctx);
  const double o = r.dispersion_ols, p = r.dispersion_sdp, q = r.dispersion_clie;
  std::ostringstream os;
  os << "Ts " << st.c7_ts << " ms, " << r.clie.size() << " cases, CLIE cap " << st.c7_iterations
     << ": OLS " << fmt("%.4f", o) << ", SDP " << fmt("%.4f", p) << ", CLIE "
     << fmt("%.4f", q);
  return {o >= p / 1.05 && p / 1.05 >= q / (1.05 * 1.05), os.str()};
}

// 8. Rescue moves near-boundary candidates by a few times their depth.
Verdict rescue_locality(const Settings&) {
  const auto& s = shared();
  const Eigen::VectorXd& ref = s.ctx.truth;
  auto lam = [&](const Eigen::VectorXd& p) { return s.auditor.audit(p).min_eigenvalue; };
  std::vector<Eigen::VectorXd> directions;
  for (const char* name : {"ZZR6", "ZZ7", "IA6", "XXR6"}) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(ref.size());
    d[s.ctx.mapping.index_of(name)] = -1.0;
    directions.push_back(d);
  }
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd d(ref.size());
    for (int i = 0; i < d.size(); ++i) d[i] = g(rng) * std::max(std::abs(ref[i]), 1e-4);
    directions.push_back(d / d.cwiseAbs().maxCoeff());
  }
  double worst_ratio = 0.0;
  int n = 0;
  bool ok = true;
  for (const Eigen::VectorXd& d : directions) {
    for (double target : {-1e-4, -5e-4}) {
      // Secant search along d for the target audit minimum.
      double t0 = 0.0, l0 = lam(ref), t1 = 1e-3, l1 = lam(ref + t1 * d);
      for (int it = 0; it < 20 && std::abs(l1 - target) > 0.1 * std::abs(target); ++it) {
        if (l1 == l0) break;
        const double t2 = std::max(0.0, t1 + (target - l1) * (t1 - t0) / (l1 - l0));
        t0 = t1, l0 = l1, t1 = t2, l1 = lam(ref + t1 * d);
      }
      if (!(l1 < 0.0)) continue;  // direction never leaves the PD set
      const Eigen::VectorXd cand = ref + t1 * d;
      const SdpResult r = pd_rescue(cand, s.auditor);
      const double moved = (r.phi - cand).cwiseAbs().maxCoeff();
      worst_ratio = std::max(worst_ratio, moved / -l1);
      ok = ok && r.min_eigenvalue >= -1e-9;
      ++n;
    }
  }
  return {ok && n > 0 && worst_ratio <= 5.0,
          std::to_string(n) + " candidates, worst move/depth " + fmt("%.3f", worst_ratio)};
}

// 9. Catalog structure and AG02 duration.
Verdict catalog_structure(const Settings&) {
  const auto& s = shared();
  std::map<std::string, int> fam;
  for (const auto& t : s.ctx.catalog.identification) ++fam[t.family];
  const double ag02 = realize(s.ctx.catalog.find("AG02"), s.ctx.catalog_config).duration();
  const bool families = fam == std::map<std::string, int>{
                                   {"PA", 11}, {"PB", 11}, {"PC", 11}, {"AP", 5}, {"AG", 2}};
  std::ostringstream os;
  os << s.ctx.catalog.identification.size() << " + " << s.ctx.catalog.validation.size()
     << ", families PA/PB/PC/AP/AG " << fam["PA"] << "/" << fam["PB"] << "/" << fam["PC"] << "/"
     << fam["AP"] << "/" << fam["AG"] << ", AG02 " << fmt("%.1f", ag02) << " s";
  return {s.ctx.catalog.identification.size() == 40 && s.ctx.catalog.validation.size() == 3 &&
              families && std::abs(ag02 - 110.0) <= 15.0,
          os.str()};
}

// routing.csv with its runtime column blanked.
std::string masked_routing(const fs::path& p) {
  std::string out;
  for (const auto& line : text::split_lines(text::read_file(p))) {
    auto cells = text::split(line, ',');
    if (cells.size() > 6) cells[6] = "*";
    for (const auto& c : cells) out += c + ",";
    out += "\n";
  }
  return out;
}

// 10. Two runs of one config and seed give byte-identical report CSVs.
Verdict determinism(const Settings& st) {
  const auto& s = shared();
  std::vector<fs::path> dirs{st.scratch / "det_a", st.scratch / "det_b"};
  for (const fs::path& d : dirs) {
    fs::remove_all(d);
    PipelineConfig c = s.config;
    c.ts_ms = {20, 40};
    c.trajectories = {"PA06", "PA09", "PB06", "PC06"};
    c.clie.max_iterations = 1;
    c.output_dir = d;
    emit_report(run_pipeline(c, s.ctx), c, s.ctx, d);
  }
  int files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    if (e.path().extension() != ".csv") continue;
    const std::string name = e.path().filename().string();
    ++files;
    const fs::path other = dirs[1] / name;
    const bool same = name == "routing.csv"
                          ? masked_routing(e.path()) == masked_routing(other)
                          : text::read_file(e.path()) == text::read_file(other);
    if (!same) ++differ;
  }
  return {files > 0 && differ == 0,
          std::to_string(files) + " CSVs compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  Settings st;
  st.scratch = fs::temp_directory_path() / "dynid_acceptance";
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 10));
  app.add_option("--scratch", st.scratch, "Directory for intermediate reports");
  app.add_option("--c7-ts", st.c7_ts, "Ts of the contraction run [ms]");
  app.add_option("--c7-iterations", st.c7_iterations, "CLIE cap of the contraction run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict(const Settings&)>>> criteria{
      {"regressor matches RNEA", regressor_oracle},
      {"39 base parameters, groups 13/12/6/8", base_count},
      {"noiseless AG02 recovers the planted vector", planted_truth},
      {"audit verdict flips with ZZR6", audit_flip},
      {"SDP projection contract", sdp_contract},
      {"non-PD count non-increasing in Ts", routing_trend},
      {"cloud contraction OLS >= SDP >= CLIE", cloud_contraction},
      {"rescue locality", rescue_locality},
      {"catalog structure", catalog_structure},
      {"determinism of report CSVs", determinism}};

  std::set<int> selected(only.begin(), only.end());
  fs::create_directories(st.scratch);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second(st);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
