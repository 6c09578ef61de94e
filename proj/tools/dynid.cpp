// dynid: catalog, simulate, identify, audit, validate, report.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dynid/errors.hpp"
#include "dynid/pipeline.hpp"
#include "dynid/text.hpp"

namespace fs = std::filesystem;
using namespace dynid;

namespace {

struct Common {
  std::string config_dir;
  std::string pipeline;
  std::optional<std::uint64_t> seed;
};

PipelineConfig load_config(const Common& c) {
  const fs::path dir = c.config_dir.empty() ? default_config_dir() : fs::path(c.config_dir);
  const fs::path file = c.pipeline.empty() ? dir / "pipeline.json" : fs::path(c.pipeline);
  PipelineConfig cfg;
  if (fs::exists(file)) {
    cfg = load_pipeline_config(file);
    if (!c.config_dir.empty()) cfg.config_dir = dir;
  } else if (!c.pipeline.empty()) {
    throw ConfigError("no such pipeline config: " + file.string());
  } else {
    cfg.config_dir = dir;
  }
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

Eigen::VectorXd load_params(const std::string& path, const PipelineContext& ctx) {
  return align_to(load_reduced_params(path), ctx.mapping);
}

const TrajectorySpec& find_spec(const PipelineContext& ctx, const std::string& label) {
  return ctx.catalog.find(label);
}

void print_csv_file(const fs::path& p) { std::cout << text::read_file(p); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-wise dynamic parameter identification"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config-dir", common.config_dir,
                 "Directory with chain, catalog and reference files "
                 "(default: $DYNID_CONFIG_DIR or the built-in config)");
  app.add_option("--pipeline", common.pipeline,
                 "Pipeline config JSON (default: <config-dir>/pipeline.json)");
  app.add_option("--seed", common.seed, "Seed for all synthetic noise");

  // catalog
  auto* cat = app.add_subcommand("catalog", "List the trajectory catalog");
  std::string cat_out;
  bool cat_samples = false;
  cat->add_option("--out", cat_out, "Directory for catalog.csv and samples");
  cat->add_flag("--samples", cat_samples, "Also write sampled references");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Closed-loop log of one trajectory");
  std::string sim_label, sim_out, sim_params;
  bool sim_ideal = false;
  sim->add_option("--trajectory", sim_label, "Catalog label")->required();
  sim->add_option("--out", sim_out, "Output CSV")->required();
  sim->add_option("--params", sim_params, "Plant parameters (default: reference)");
  sim->add_flag("--ideal", sim_ideal, "No quantization, dead time or noise");

  // identify
  auto* idf = app.add_subcommand("identify", "Run the full identification pipeline");
  std::string idf_out;
  std::vector<double> idf_ts, idf_clie_ts;
  std::vector<std::string> idf_traj;
  std::optional<int> idf_iter;
  std::optional<double> idf_speed;
  bool idf_ideal = false, idf_quiet = false;
  idf->add_option("--out", idf_out, "Report directory (default from config)");
  idf->add_option("--ts", idf_ts, "Sampling intervals [ms]");
  idf->add_option("--clie-ts", idf_clie_ts, "Sampling intervals that run CLIE");
  idf->add_option("--trajectories", idf_traj, "Subset of identification labels");
  idf->add_option("--max-iterations", idf_iter, "CLIE iteration cap");
  idf->add_option("--speed-scale", idf_speed, "Global speed factor multiplier");
  idf->add_flag("--ideal", idf_ideal, "Noiseless synthetic measurements");
  idf->add_flag("--quiet", idf_quiet, "No per-case progress");

  // audit
  auto* aud = app.add_subcommand("audit", "PD audit of a parameter file");
  std::string aud_params, aud_worst_out;
  std::optional<int> aud_points;
  int aud_worst = 10;
  aud->add_option("--params", aud_params, "name[,unit],value CSV")->required();
  aud->add_option("--points", aud_points, "Grid points per joint");
  aud->add_option("--worst", aud_worst, "Number of worst poses to report");
  aud->add_option("--worst-out", aud_worst_out, "CSV for the worst poses");

  // validate
  auto* val = app.add_subcommand("validate", "Validation metrics of a parameter file");
  std::string val_params;
  val->add_option("--params", val_params, "name[,unit],value CSV")->required();

  // report
  auto* rep = app.add_subcommand("report", "Summarize a finished run");
  std::string rep_dir;
  rep->add_option("--run", rep_dir, "Report directory of an identify run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rep) {
      const fs::path d(rep_dir);
      std::cout << "routing summary\n";
      print_csv_file(d / "routing_summary.csv");
      std::cout << "\ndispersion\n";
      print_csv_file(d / "dispersion.csv");
      std::cout << "\nvalidation\n";
      print_csv_file(d / "validation.csv");
      std::cout << "\nmanifest\n";
      print_csv_file(d / "manifest.json");
      return 0;
    }

    PipelineConfig cfg = load_config(common);
    if (*idf) {
      if (!idf_ts.empty()) cfg.ts_ms = idf_ts;
      if (!idf_clie_ts.empty()) cfg.clie_ts_ms = idf_clie_ts;
      if (!idf_traj.empty()) cfg.trajectories = idf_traj;
      if (idf_iter) cfg.clie.max_iterations = *idf_iter;
      if (idf_speed) cfg.speed_scale = *idf_speed;
      if (idf_ideal) cfg.imperfections = Imperfections::none();
      if (!idf_out.empty()) cfg.output_dir = idf_out;
      // Re-run the checks on the overridden values.
      cfg = parse_pipeline_config(to_json(cfg), cfg.config_dir);
      if (!idf_out.empty()) cfg.output_dir = idf_out;
    }
    const PipelineContext ctx = load_context(cfg);

    if (*cat) {
      std::string table = "label,family,validation,duration_s,primitives,description\n";
      for (const auto* set : {&ctx.catalog.identification, &ctx.catalog.validation})
        for (const auto& s : *set) {
          const TrajectoryPlan plan = realize(s, ctx.catalog_config);
          table += s.label + "," + s.family + "," + (s.validation ? "yes" : "no") +
                   "," + text::format_double(plan.duration(), 6) + "," +
                   std::to_string(s.primitives.size()) + ",\"" + s.description + "\"\n";
          if (cat_samples && !cat_out.empty())
            text::write_file(fs::path(cat_out) / "trajectories" / (s.label + ".csv"),
                             plan.sample(cfg.plant.control_period, s.label).to_csv());
        }
      if (cat_out.empty())
        std::cout << table;
      else
        text::write_file(fs::path(cat_out) / "catalog.csv", table);
      return 0;
    }

    if (*sim) {
      const TrajectorySpec& spec = find_spec(ctx, sim_label);
      const Eigen::VectorXd phi =
          sim_params.empty() ? ctx.truth : load_params(sim_params, ctx);
      const SampledTrajectory ref =
          realize(spec, ctx.catalog_config).sample(cfg.plant.control_period, spec.label);
      const SimLog log = simulate_closed_loop(
          ctx.chain, ctx.mapping, phi, ref, ctx.gains, cfg.plant,
          sim_ideal ? Imperfections::none() : cfg.imperfections,
          case_seed(cfg.seed, spec.label));
      text::write_file(sim_out, log.to_csv());
      std::cout << spec.label << ": " << log.samples() << " samples -> " << sim_out
                << "\n";
      return 0;
    }

    if (*idf) {
      const PipelineResult result =
          run_pipeline(cfg, ctx, idf_quiet ? nullptr : &std::cerr);
      emit_report(result, cfg, ctx, cfg.output_dir);
      std::cout << "report written to " << cfg.output_dir.string() << "\n";
      return 0;
    }

    if (*aud) {
      AuditDomain domain = ctx.audit_domain;
      if (aud_points) domain = default_audit_domain(ctx.chain, *aud_points);
      const Eigen::VectorXd phi = load_params(aud_params, ctx);
      const PdAuditor auditor(ctx.chain, ctx.mapping, domain);
      const AuditResult r = auditor.audit(phi, aud_worst);
      std::cout << "poses " << r.poses << "\nmin_eigenvalue "
                << text::format_double(r.min_eigenvalue) << "\nverdict "
                << (r.min_eigenvalue > 0.0 ? "PD" : "not PD") << "\n";
      if (!aud_worst_out.empty()) write_worst_poses_csv(r, aud_worst_out);
      return r.min_eigenvalue > 0.0 ? 0 : 2;
    }

    if (*val) {
      const Eigen::VectorXd phi = load_params(val_params, ctx);
      std::vector<SimLog> logs;
      for (const auto& s : ctx.catalog.validation) logs.push_back(measure(ctx, cfg, s));
      std::cout << "trajectory,stage,RMSE_Nm,MNE\n";
      for (const auto& m : validation_metrics(ctx, cfg, {{"params", phi}}, logs))
        std::cout << m.trajectory << "," << m.stage << ","
                  << text::format_double(m.rmse) << "," << text::format_double(m.mne)
                  << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
