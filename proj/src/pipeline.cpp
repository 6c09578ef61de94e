#include "dynid/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include "dynid/errors.hpp"
#include "dynid/preprocess.hpp"
#include "dynid/text.hpp"

namespace dynid {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path PipelineConfig::resolve(const std::string& file) const {
  const fs::path p(file);
  return p.is_absolute() ? p : config_dir / p;
}

bool PipelineConfig::runs_clie_at(double ts) const {
  return clie_ts_ms.empty() ||
         std::find(clie_ts_ms.begin(), clie_ts_ms.end(), ts) != clie_ts_ms.end();
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json imperfections_json(const Imperfections& i) {
  return {{"quantization", i.quantization},
          {"dead_time", i.dead_time},
          {"noise", i.noise}};
}

// Synthetic-measurement defaults of the pipeline (the plant model itself
// defaults to a noiseless channel).
json default_plant_json() {
  return {{"torque_noise_std", 0.01}, {"current_lsb_A", 0.00269}};
}

void check_ts(const std::vector<double>& ts, double period, const char* what) {
  for (double t : ts) {
    const double ratio = t * 1e-3 / period;
    if (!(t > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9)
      throw ConfigError(std::string(what) + " " + text::format_double(t) +
                        " ms is not a positive multiple of the control period");
  }
}

}  // namespace

PipelineConfig::PipelineConfig()
    : config_dir(default_config_dir()),
      plant(parse_plant_config(default_plant_json(), 8)) {}

PipelineConfig parse_pipeline_config(const json& doc, const fs::path& config_dir) {
  PipelineConfig c;
  c.config_dir = config_dir;
  try {
    c.chain_file = doc.value("chain_file", c.chain_file);
    c.catalog_file = doc.value("catalog_file", c.catalog_file);
    c.reference_params = doc.value("reference_params", c.reference_params);
    c.ts_ms = doc.value("ts_ms", c.ts_ms);
    c.clie_ts_ms = doc.value("clie_ts_ms", c.clie_ts_ms);
    c.trajectories = doc.value("trajectories", c.trajectories);
    c.audit_points = doc.value("audit_points", c.audit_points);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("imperfections")) {
      const json& i = doc.at("imperfections");
      c.imperfections.quantization = i.value("quantization", true);
      c.imperfections.dead_time = i.value("dead_time", true);
      c.imperfections.noise = i.value("noise", true);
    }
    json plant = default_plant_json();
    if (doc.contains("plant")) plant.update(doc.at("plant"));
    c.plant = parse_plant_config(plant, 8);
    if (doc.contains("sdp")) {
      const json& s = doc.at("sdp");
      c.sdp.ladder = s.value("ladder", c.sdp.ladder);
      c.sdp.initial_poses = s.value("initial_poses", c.sdp.initial_poses);
      c.sdp.poses_per_round = s.value("poses_per_round", c.sdp.poses_per_round);
      c.sdp.max_rounds = s.value("max_rounds", c.sdp.max_rounds);
      c.sdp.verify_tol = s.value("verify_tol", c.sdp.verify_tol);
    }
    if (doc.contains("clie")) {
      const json& s = doc.at("clie");
      c.clie.max_iterations = s.value("max_iterations", c.clie.max_iterations);
      c.clie.lambda0 = s.value("lambda0", c.clie.lambda0);
      c.clie.jacobian_step = s.value("jacobian_step", c.clie.jacobian_step);
      c.clie.atol = s.value("atol", c.clie.atol);
      c.clie.ftol = s.value("ftol", c.clie.ftol);
      c.clie.xtol = s.value("xtol", c.clie.xtol);
      c.clie.jacobian_floor = s.value("jacobian_floor", c.clie.jacobian_floor);
      c.clie.damping_floor = s.value("damping_floor", c.clie.damping_floor);
    }
    c.pca_variance = doc.value("pca_variance", c.pca_variance);
    c.pca_components = doc.value("pca_components", c.pca_components);
    c.preferred_ts_tolerance =
        doc.value("preferred_ts_tolerance", c.preferred_ts_tolerance);
    c.speed_scale = doc.value("speed_scale", c.speed_scale);
    c.reduction_samples = doc.value("reduction_samples", c.reduction_samples);
    c.reduction_seed = doc.value("reduction_seed", c.reduction_seed);
    c.output_dir = doc.value("output_dir", c.output_dir.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  if (c.ts_ms.empty()) throw ConfigError("pipeline config: empty Ts set");
  check_ts(c.ts_ms, c.plant.control_period, "Ts");
  check_ts(c.clie_ts_ms, c.plant.control_period, "CLIE Ts");
  for (double t : c.clie_ts_ms)
    if (std::find(c.ts_ms.begin(), c.ts_ms.end(), t) == c.ts_ms.end())
      throw ConfigError("CLIE Ts " + text::format_double(t) + " ms is not in the Ts set");
  if (c.audit_points < 2) throw ConfigError("audit grid needs 2 points per joint");
  if (c.sdp.ladder.empty()) throw ConfigError("empty margin ladder");
  if (!std::is_sorted(c.sdp.ladder.begin(), c.sdp.ladder.end()))
    throw ConfigError("margin ladder must ascend");
  if (!(c.pca_variance > 0.0 && c.pca_variance <= 1.0))
    throw ConfigError("pca_variance must lie in (0, 1]");
  if (!(c.speed_scale > 0.0)) throw ConfigError("speed_scale must be positive");
  if (c.clie.max_iterations < 0) throw ConfigError("negative CLIE iteration cap");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_pipeline_config(doc, path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json plant = {{"dead_time_s", c.plant.dead_time},
                {"control_period_s", c.plant.control_period},
                {"integration_step_s", c.plant.integration_step},
                {"encoder_bits", c.plant.encoder_bits},
                {"torque_noise_std", c.plant.torque_noise_std},
                {"current_lsb_A", c.plant.current_lsb},
                {"velocity_bound", c.plant.velocity_bound},
                {"torque_clamp", c.plant.torque_clamp},
                {"kp", c.plant.kp},
                {"kv", c.plant.kv},
                {"t_f_s", c.plant.t_f}};
  std::vector<double> kt(c.plant.torque_constants.data(),
                         c.plant.torque_constants.data() +
                             c.plant.torque_constants.size());
  plant["torque_constants"] = kt;
  return {{"chain_file", c.chain_file},
          {"catalog_file", c.catalog_file},
          {"reference_params", c.reference_params},
          {"ts_ms", c.ts_ms},
          {"clie_ts_ms", c.clie_ts_ms},
          {"trajectories", c.trajectories},
          {"audit_points", c.audit_points},
          {"seed", c.seed},
          {"imperfections", imperfections_json(c.imperfections)},
          {"plant", plant},
          {"sdp",
           {{"ladder", c.sdp.ladder},
            {"initial_poses", c.sdp.initial_poses},
            {"poses_per_round", c.sdp.poses_per_round},
            {"max_rounds", c.sdp.max_rounds},
            {"verify_tol", c.sdp.verify_tol}}},
          {"clie",
           {{"max_iterations", c.clie.max_iterations},
            {"lambda0", c.clie.lambda0},
            {"jacobian_step", c.clie.jacobian_step},
            {"atol", c.clie.atol},
            {"ftol", c.clie.ftol},
            {"xtol", c.clie.xtol},
            {"jacobian_floor", c.clie.jacobian_floor},
            {"damping_floor", c.clie.damping_floor}}},
          {"pca_variance", c.pca_variance},
          {"pca_components", c.pca_components},
          {"preferred_ts_tolerance", c.preferred_ts_tolerance},
          {"speed_scale", c.speed_scale},
          {"reduction_samples", c.reduction_samples},
          {"reduction_seed", c.reduction_seed}};
}

std::string config_hash(const PipelineConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(config).dump())));
  return buf;
}

PipelineContext load_context(const PipelineConfig& config) {
  PipelineContext ctx;
  ctx.chain = load_chain(config.resolve(config.chain_file));
  ctx.mapping = numerical_base_reduction(ctx.chain, config.reduction_samples,
                                         config.reduction_seed);
  ctx.truth = align_to(load_reduced_params(config.resolve(config.reference_params)),
                       ctx.mapping);
  ctx.catalog_config = load_catalog_config(config.resolve(config.catalog_file));
  ctx.catalog_config.speed_scale = config.speed_scale;
  ctx.catalog = build_catalog(ctx.catalog_config);
  ctx.gains = default_gains(ctx.chain, ctx.mapping, ctx.truth, config.plant);
  ctx.audit_domain = default_audit_domain(ctx.chain, config.audit_points);
  return ctx;
}

std::uint64_t case_seed(std::uint64_t seed, const std::string& label) {
  return fnv1a(label, fnv1a(std::to_string(seed)));
}

SimLog measure(const PipelineContext& ctx, const PipelineConfig& config,
               const TrajectorySpec& spec) {
  const SampledTrajectory ref = realize(spec, ctx.catalog_config)
                                    .sample(config.plant.control_period, spec.label);
  return simulate_closed_loop(ctx.chain, ctx.mapping, ctx.truth, ref, ctx.gains,
                              config.plant, config.imperfections,
                              case_seed(config.seed, spec.label));
}

double torque_rmse(const Eigen::MatrixXd& measured,
                   const Eigen::MatrixXd& predicted) {
  if (measured.rows() != predicted.rows() || measured.cols() != predicted.cols())
    throw DimensionError("torque records differ in shape");
  if (measured.size() == 0) throw DimensionError("empty torque record");
  return std::sqrt((measured - predicted).squaredNorm() / double(measured.size()));
}

double torque_mne(const Eigen::MatrixXd& measured,
                  const Eigen::MatrixXd& predicted) {
  if (measured.rows() != predicted.rows() || measured.cols() != predicted.cols())
    throw DimensionError("torque records differ in shape");
  if (measured.size() == 0) throw DimensionError("empty torque record");
  double sum = 0.0;
  int joints = 0;
  for (Eigen::Index j = 0; j < measured.cols(); ++j) {
    const double peak = measured.col(j).cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) continue;
    sum += (measured.col(j) - predicted.col(j)).cwiseAbs().mean() / peak;
    ++joints;
  }
  return joints ? sum / joints : 0.0;
}

std::vector<ValidationMetrics> validation_metrics(
    const PipelineContext& ctx, const PipelineConfig& config,
    const std::vector<StageParams>& stages, const std::vector<SimLog>& logs) {
  if (logs.empty()) throw EstimationError("no validation logs");
  std::set<std::string> identification;
  for (const auto& s : ctx.catalog.identification) identification.insert(s.label);
  std::vector<ValidationMetrics> out;
  for (const SimLog& log : logs) {
    if (identification.count(log.label))
      throw EstimationError(log.label + " is an identification trajectory");
    const SampledTrajectory ref =
        realize(ctx.catalog.find(log.label), ctx.catalog_config)
            .sample(config.plant.control_period, log.label);
    for (const StageParams& st : stages) {
      const SimLog pred =
          simulate_closed_loop(ctx.chain, ctx.mapping, st.phi, ref, ctx.gains,
                               config.plant, Imperfections::none());
      out.push_back({log.label, st.stage, torque_rmse(log.tau, pred.u),
                     torque_mne(log.tau, pred.u)});
    }
  }
  return out;
}

namespace {

void say(std::ostream* os, const std::string& line) {
  if (os) *os << line << std::endl;
}

RouteRecord run_case(const PipelineConfig& config, const PipelineContext& ctx,
                     const PdAuditor& auditor, const SimLog& log,
                     const SampledTrajectory& ref, double ts) {
  RouteRecord r;
  r.label = log.label;
  r.ts_ms = ts;
  try {
    DecimatedLog dec = lowpass_and_resample(log, ts);
    differentiate(dec);
    const RegressionProblem prob = stack(ctx.chain, ctx.mapping, dec);
    r.kappa = condition_number(prob);
    r.phi_ols = ols_solve(prob, ctx.mapping.names);
    const AuditResult audit = auditor.audit(r.phi_ols);
    r.ols_min_eigenvalue = audit.min_eigenvalue;
    r.ols_pd = audit.min_eigenvalue > 0.0;
    r.route = pd_route(audit);
    Eigen::VectorXd seed = r.phi_ols;
    if (r.route == Route::kOlsSdpClie) {
      const SdpResult s = sdp_project(r.phi_ols, auditor, config.sdp);
      r.eps_pd = s.margin;
      r.phi_sdp = s.phi;
      seed = s.phi;
    }
    if (config.runs_clie_at(ts)) {
      ClieCase c;
      c.chain = &ctx.chain;
      c.mapping = &ctx.mapping;
      c.reference = &ref;
      c.gains = &ctx.gains;
      c.plant = &config.plant;
      c.measured = &dec;
      c.ts_ms = ts;
      const ClieResult res =
          clie_refine(c, seed, clie_bounds(seed, ctx.mapping.names), auditor,
                      config.clie);
      r.phi_clie = res.phi;
      r.clie_runtime_s = res.runtime_s;
      r.clie_residual = res.residual_rms;
      r.clie_iterations = res.iterations;
      r.clie_converged = res.converged;
    }
  } catch (const RankDeficiencyError& e) {
    r.status = std::string("rank deficient: ") + e.what();
  } catch (const LadderExhaustedError& e) {
    r.status = std::string("ladder exhausted: ") + e.what();
  } catch (const Error& e) {
    r.status = std::string("failed: ") + e.what();
  }
  return r;
}

struct StageClouds {
  ParameterCloud ols{"OLS", {}, {}}, sdp{"SDP", {}, {}}, clie{"CLIE", {}, {}};
};

StageClouds clouds_at(const std::vector<RouteRecord>& records, double ts) {
  StageClouds c;
  for (const auto& r : records) {
    if (r.ts_ms != ts || !r.ok() || !r.has_clie()) continue;
    c.ols.add(r.label, r.phi_ols);
    c.sdp.add(r.label, r.phi_sdp ? *r.phi_sdp : r.phi_ols);
    c.clie.add(r.label, r.phi_clie);
  }
  return c;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config,
                            const PipelineContext& ctx, std::ostream* progress) {
  const PdAuditor auditor = ctx.auditor();
  std::vector<const TrajectorySpec*> specs;
  if (config.trajectories.empty()) {
    for (const auto& s : ctx.catalog.identification) specs.push_back(&s);
  } else {
    for (const auto& label : config.trajectories) {
      const TrajectorySpec& s = ctx.catalog.find(label);
      if (s.validation)
        throw ConfigError(label + " is held out for validation");
      specs.push_back(&s);
    }
  }

  PipelineResult out;
  std::vector<double> ts_set = config.ts_ms;
  std::sort(ts_set.begin(), ts_set.end());
  for (const TrajectorySpec* spec : specs) {
    const SampledTrajectory ref = realize(*spec, ctx.catalog_config)
                                      .sample(config.plant.control_period, spec->label);
    SimLog log;
    try {
      log = simulate_closed_loop(ctx.chain, ctx.mapping, ctx.truth, ref, ctx.gains,
                                 config.plant, config.imperfections,
                                 case_seed(config.seed, spec->label));
    } catch (const Error& e) {
      for (double ts : ts_set) {
        RouteRecord r;
        r.label = spec->label;
        r.ts_ms = ts;
        r.status = std::string("measurement failed: ") + e.what();
        out.records.push_back(r);
      }
      continue;
    }
    for (double ts : ts_set) {
      RouteRecord r = run_case(config, ctx, auditor, log, ref, ts);
      std::string line = spec->label + " Ts=" + text::format_double(ts) + " ";
      if (r.phi_ols.size())
        line += std::string(route_name(r.route)) + " kappa=" +
                text::format_double(r.kappa, 4);
      if (r.has_clie())
        line += " clie_rms=" + text::format_double(r.clie_residual, 4) +
                " it=" + std::to_string(r.clie_iterations);
      if (!r.ok()) line += " " + r.status;
      say(progress, line);
      out.records.push_back(std::move(r));
    }
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const RouteRecord& a, const RouteRecord& b) {
                     return a.ts_ms < b.ts_ms;
                   });

  // Preferred Ts: CLIE clouds compared under one pooled standardization.
  Eigen::MatrixXd pooled;
  std::vector<double> clie_ts;
  for (double ts : ts_set) {
    const StageClouds c = clouds_at(out.records, ts);
    if (c.clie.size() == 0) continue;
    clie_ts.push_back(ts);
    pooled.conservativeResize(pooled.rows() + c.clie.size(), c.clie.rows.cols());
    pooled.bottomRows(c.clie.size()) = c.clie.rows;
  }
  if (clie_ts.empty()) throw EstimationError("every case failed before CLIE");
  std::vector<double> candidates = clie_ts;
  if (clie_ts.size() > 1 && pooled.rows() >= 2) {
    const Standardization common = Standardization::fit(pooled);
    double best = std::numeric_limits<double>::infinity();
    for (double ts : clie_ts) {
      const StageClouds c = clouds_at(out.records, ts);
      const double d = dispersion(c.clie, common);
      out.clie_dispersion_by_ts.emplace_back(ts, d);
      best = std::min(best, d);
    }
    candidates.clear();
    for (const auto& [ts, d] : out.clie_dispersion_by_ts)
      if (d <= (1.0 + config.preferred_ts_tolerance) * best) candidates.push_back(ts);
    // The remaining Ts act as fallbacks if no candidate can be rescued.
    for (double ts : clie_ts)
      if (std::find(candidates.begin(), candidates.end(), ts) == candidates.end())
        candidates.push_back(ts);
  }

  std::string last_error;
  for (double ts : candidates) {
    StageClouds c = clouds_at(out.records, ts);
    Representative rep =
        select_representative(c.clie, config.pca_variance, config.pca_components);
    const Eigen::VectorXd phi_rep = c.clie.rows.row(rep.index).transpose();
    SdpResult rescue;
    try {
      rescue = pd_rescue(phi_rep, auditor, config.sdp);
    } catch (const Error& e) {
      last_error = e.what();
      say(progress, "Ts=" + text::format_double(ts) + " representative " +
                        rep.label + " not rescuable: " + e.what());
      continue;
    }
    out.preferred_ts_ms = ts;
    out.representative = rep;
    out.phi_representative = phi_rep;
    out.representative_min_eigenvalue = auditor.audit(phi_rep).min_eigenvalue;
    out.rescue = rescue;
    out.phi_final = rescue.phi;
    out.ols = std::move(c.ols);
    out.sdp = std::move(c.sdp);
    out.clie = std::move(c.clie);
    break;
  }
  if (out.phi_final.size() == 0)
    throw EstimationError("no representative could be rescued: " + last_error);

  if (out.clie.size() >= 2) {
    out.standardization = Standardization::fit(out.clie.rows);
    out.dispersion_ols = dispersion(out.ols, out.standardization);
    out.dispersion_sdp = dispersion(out.sdp, out.standardization);
    out.dispersion_clie = dispersion(out.clie, out.standardization);
  }
  if (out.clie.size() >= 3) out.pca = pca_fit(out.clie, out.standardization);
  say(progress, "preferred Ts=" + text::format_double(out.preferred_ts_ms) +
                    " representative " + out.representative.label +
                    (out.rescue.unchanged ? " (PD, no rescue)" : " (rescued)"));

  std::vector<SimLog> validation_logs;
  for (const auto& spec : ctx.catalog.validation)
    validation_logs.push_back(measure(ctx, config, spec));
  out.validation = validation_metrics(
      ctx, config, {{"CLIE", out.phi_representative}, {"rescue", out.phi_final}},
      validation_logs);
  return out;
}

std::string params_csv(const std::vector<std::string>& names,
                       const Eigen::VectorXd& phi) {
  if (static_cast<Eigen::Index>(names.size()) != phi.size())
    throw DimensionError("parameter names and values differ in length");
  std::string out = "name,unit,value\n";
  for (std::size_t k = 0; k < names.size(); ++k)
    out += names[k] + "," + std::string(unit_of(names[k])) + "," +
           text::format_double(phi[static_cast<Eigen::Index>(k)]) + "\n";
  return out;
}

void emit_report(const PipelineResult& result, const PipelineConfig& config,
                 const PipelineContext& ctx, const fs::path& outdir) {
  fs::create_directories(outdir);
  const auto& names = ctx.mapping.names;
  text::write_file(outdir / "routing.csv", routing_csv(result.records));

  std::string summary = "Ts_ms,PD,non_PD,failed,total\n";
  for (const RoutingRow& row : routing_summary(result.records))
    summary += text::format_double(row.ts_ms) + "," + std::to_string(row.pd) +
               "," + std::to_string(row.non_pd) + "," +
               std::to_string(row.failed) + "," + std::to_string(row.total()) +
               "\n";
  text::write_file(outdir / "routing_summary.csv", summary);

  std::string clouds = "stage,Tr";
  for (const auto& n : names) clouds += "," + n;
  clouds += "\n";
  for (const ParameterCloud* c : {&result.ols, &result.sdp, &result.clie})
    for (int i = 0; i < c->size(); ++i) {
      clouds += c->stage + "," + c->labels[i];
      for (Eigen::Index k = 0; k < c->rows.cols(); ++k)
        clouds += "," + text::format_double(c->rows(i, k));
      clouds += "\n";
    }
  text::write_file(outdir / "clouds.csv", clouds);

  std::string disp = "scope,Ts_ms,stage,dispersion\n";
  const std::string pts = text::format_double(result.preferred_ts_ms);
  if (result.clie.size() >= 2) {
    disp += "stage," + pts + ",OLS," + text::format_double(result.dispersion_ols) + "\n";
    disp += "stage," + pts + ",SDP," + text::format_double(result.dispersion_sdp) + "\n";
    disp += "stage," + pts + ",CLIE," + text::format_double(result.dispersion_clie) + "\n";
  }
  for (const auto& [ts, d] : result.clie_dispersion_by_ts)
    disp += "ts," + text::format_double(ts) + ",CLIE," + text::format_double(d) + "\n";
  text::write_file(outdir / "dispersion.csv", disp);

  std::string scores = "stage,Tr";
  std::string variance = "component,variance,cumulative_fraction\n";
  if (result.pca) {
    const PcaModel& m = *result.pca;
    const int k = std::max(result.representative.components,
                           std::min<int>(2, static_cast<int>(m.variances.size())));
    for (int j = 0; j < k; ++j) scores += ",PC" + std::to_string(j + 1);
    scores += "\n";
    for (const ParameterCloud* c : {&result.ols, &result.sdp, &result.clie}) {
      const Eigen::MatrixXd s = m.scores(c->rows);
      for (int i = 0; i < c->size(); ++i) {
        scores += c->stage + "," + c->labels[i];
        for (int j = 0; j < k; ++j) scores += "," + text::format_double(s(i, j));
        scores += "\n";
      }
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m.variances.size(); ++j) {
      acc += m.variances[j];
      variance += "PC" + std::to_string(j + 1) + "," +
                  text::format_double(m.variances[j]) + "," +
                  text::format_double(acc / m.total_variance()) + "\n";
    }
  } else {
    scores += "\n";
  }
  text::write_file(outdir / "pca_scores.csv", scores);
  text::write_file(outdir / "pca_variance.csv", variance);

  text::write_file(outdir / "representative_params.csv",
                   params_csv(names, result.phi_representative));
  text::write_file(outdir / "final_params.csv", params_csv(names, result.phi_final));

  std::string val = "trajectory,stage,RMSE_Nm,MNE\n";
  for (const auto& v : result.validation)
    val += v.trajectory + "," + v.stage + "," + text::format_double(v.rmse) +
           "," + text::format_double(v.mne) + "\n";
  text::write_file(outdir / "validation.csv", val);

  json seeds = json::object();
  for (const auto& r : result.records)
    seeds[r.label] = case_seed(config.seed, r.label);
  for (const auto& s : ctx.catalog.validation)
    seeds[s.label] = case_seed(config.seed, s.label);
  const double correction =
      (result.phi_final - result.phi_representative).cwiseAbs().maxCoeff();
  json manifest = {
      {"config", to_json(config)},
      {"config_hash", config_hash(config)},
      {"seed", config.seed},
      {"case_seeds", seeds},
      {"parameters", names.size()},
      {"preferred_ts_ms", result.preferred_ts_ms},
      {"representative", result.representative.label},
      {"pca_components_used", result.representative.components},
      {"representative_min_eigenvalue", result.representative_min_eigenvalue},
      {"rescue_applied", !result.rescue.unchanged},
      {"rescue_min_eigenvalue", result.rescue.min_eigenvalue},
      {"rescue_correction_inf", correction},
      {"mne_definition",
       "mean over joints of mean|tau_m - tau_pred| / max|tau_m|"},
      {"nondeterministic_columns", {"routing.csv:t_CLIE_s"}},
      {"files",
       {"routing.csv", "routing_summary.csv", "clouds.csv", "dispersion.csv",
        "pca_scores.csv", "pca_variance.csv", "representative_params.csv",
        "final_params.csv", "validation.csv"}}};
  text::write_file(outdir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace dynid
