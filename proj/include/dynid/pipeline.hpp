#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynid/chain_model.hpp"
#include "dynid/cloud.hpp"
#include "dynid/estimate.hpp"
#include "dynid/excitation.hpp"
#include "dynid/plant_sim.hpp"

namespace dynid {

/// Defaults give the synthetic measurement channel torque noise 0.01 N m and
/// a 2.69 mA current LSB on the 8-axis arm.
struct PipelineConfig {
  PipelineConfig();

  std::filesystem::path config_dir;  // relative file names resolve here
  std::string chain_file = "crane_x7.json";
  std::string catalog_file = "catalog.json";
  std::string reference_params = "reference_params.csv";
  std::vector<double> ts_ms{10.0, 20.0, 40.0, 80.0};
  std::vector<double> clie_ts_ms;         // empty: CLIE at every Ts
  std::vector<std::string> trajectories;  // empty: all 40
  int audit_points = 5;
  std::uint64_t seed = 1;
  Imperfections imperfections;
  PlantConfig plant;
  SdpOptions sdp;
  ClieOptions clie;
  double pca_variance = 0.9;
  int pca_components = 0;  // > 0 overrides pca_variance
  double preferred_ts_tolerance = 0.10;
  double speed_scale = 1.0;
  int reduction_samples = 2000;
  std::uint64_t reduction_seed = 1;
  std::filesystem::path output_dir = "dynid_out";

  std::filesystem::path resolve(const std::string& file) const;
  bool runs_clie_at(double ts) const;
};

/// Missing keys keep their defaults. Throws ConfigError on bad values.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc,
                                     const std::filesystem::path& config_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Canonical form used for hashing and the manifest.
nlohmann::json to_json(const PipelineConfig& config);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

/// Models shared by every stage, loaded once from the config.
struct PipelineContext {
  ChainDescription chain;
  BaseParamMapping mapping;
  Eigen::VectorXd truth;  // plant parameters of the synthetic robot
  CatalogConfig catalog_config;
  Catalog catalog;
  ControllerGains gains;
  AuditDomain audit_domain;

  PdAuditor auditor() const { return PdAuditor(chain, mapping, audit_domain); }
};

PipelineContext load_context(const PipelineConfig& config);

/// Per-case noise seed: FNV-1a of the label mixed with the run seed.
std::uint64_t case_seed(std::uint64_t seed, const std::string& label);

/// Synthetic measurement of one trajectory on the plant (truth parameters).
SimLog measure(const PipelineContext& ctx, const PipelineConfig& config,
               const TrajectorySpec& spec);

struct ValidationMetrics {
  std::string trajectory;
  std::string stage;  // CLIE or rescue
  double rmse = 0.0;  // [N m]
  double mne = 0.0;
};

/// sqrt(mean over samples and joints of e^2).
double torque_rmse(const Eigen::MatrixXd& measured,
                   const Eigen::MatrixXd& predicted);
/// Mean over joints of mean|e_j| / max|tau_m,j|; joints with no measured
/// torque are skipped.
double torque_mne(const Eigen::MatrixXd& measured,
                  const Eigen::MatrixXd& predicted);

struct StageParams {
  std::string stage;
  Eigen::VectorXd phi;
};

/// Metrics of every stage on every validation log; the prediction is the
/// ideal-mode closed-loop command torque. Throws on an empty log set or a
/// log whose label belongs to the identification set.
std::vector<ValidationMetrics> validation_metrics(
    const PipelineContext& ctx, const PipelineConfig& config,
    const std::vector<StageParams>& stages, const std::vector<SimLog>& logs);

struct PipelineResult {
  std::vector<RouteRecord> records;  // Ts-major, catalog order within a Ts
  double preferred_ts_ms = 0.0;
  std::vector<std::pair<double, double>> clie_dispersion_by_ts;
  ParameterCloud ols, sdp, clie;  // at the preferred Ts, same cases
  Standardization standardization;  // CLIE-stage, shared by all stages
  std::optional<PcaModel> pca;
  Representative representative;
  double dispersion_ols = 0.0, dispersion_sdp = 0.0, dispersion_clie = 0.0;
  Eigen::VectorXd phi_representative;
  Eigen::VectorXd phi_final;
  double representative_min_eigenvalue = 0.0;
  SdpResult rescue;
  std::vector<ValidationMetrics> validation;
};

/// Every selected trajectory at every Ts: preprocess, OLS, route, optional
/// SDP, CLIE. Case failures are recorded and skipped. Then medoid selection at
/// the preferred Ts, audit, rescue and validation. Throws only when no case
/// produced a CLIE estimate.
PipelineResult run_pipeline(const PipelineConfig& config,
                            const PipelineContext& ctx,
                            std::ostream* progress = nullptr);

/// Writes routing.csv, routing_summary.csv, clouds.csv, dispersion.csv,
/// pca_scores.csv, pca_variance.csv, representative_params.csv,
/// final_params.csv, validation.csv and manifest.json.
void emit_report(const PipelineResult& result, const PipelineConfig& config,
                 const PipelineContext& ctx,
                 const std::filesystem::path& outdir);

/// name,unit,value with round-trip values.
std::string params_csv(const std::vector<std::string>& names,
                       const Eigen::VectorXd& phi);

}  // namespace dynid
