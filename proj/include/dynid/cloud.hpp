#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dynid/estimate.hpp"

namespace dynid {

/// Labeled candidate vectors of one estimation stage (OLS, SDP or CLIE).
struct ParameterCloud {
  std::string stage;
  std::vector<std::string> labels;
  Eigen::MatrixXd rows;  // one candidate per row

  int size() const { return static_cast<int>(rows.rows()); }
  void add(const std::string& label, const Eigen::VectorXd& phi);
};

/// Per-column centering and scaling; scale = sample std with floor 1e-12.
struct Standardization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardization fit(const Eigen::MatrixXd& rows);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
};

struct PcaModel {
  Standardization standardization;
  Eigen::MatrixXd components;  // columns, by descending variance
  Eigen::VectorXd variances;   // eigenvalues of the standardized covariance

  Eigen::MatrixXd scores(const Eigen::MatrixXd& rows) const;
  double total_variance() const { return variances.sum(); }
  /// Smallest k whose leading variances reach `fraction` of the total.
  int components_for(double fraction) const;
};

/// PCA of the standardized rows. The standardization defaults to the cloud's
/// own; pass another to project onto a common basis. Needs at least 3 rows.
PcaModel pca_fit(const ParameterCloud& cloud);
PcaModel pca_fit(const ParameterCloud& cloud, const Standardization& common);

struct Representative {
  int index = -1;
  std::string label;
  int components = 0;  // score-space dimension used
};

/// Medoid in the leading-k score space (k covers `variance_fraction` unless
/// `k` > 0); ties go to the lexicographically first label.
Representative select_representative(const ParameterCloud& cloud,
                                     double variance_fraction = 0.9,
                                     int k = 0);

/// Mean Euclidean distance to the centroid after standardization.
double dispersion(const ParameterCloud& cloud, const Standardization& common);
double dispersion(const Eigen::MatrixXd& standardized_rows);

struct RoutingRow {
  double ts_ms = 0.0;
  int pd = 0;       // O-C
  int non_pd = 0;   // O-S-C
  int failed = 0;   // no route (rank deficiency, too short)
  int total() const { return pd + non_pd + failed; }
};

/// Per-Ts counts in ascending Ts order.
std::vector<RoutingRow> routing_summary(const std::vector<RouteRecord>& records);

}  // namespace dynid
