#include "dynid/cloud.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dynid/errors.hpp"

namespace dynid {

void ParameterCloud::add(const std::string& label, const Eigen::VectorXd& phi) {
  if (rows.rows() > 0 && rows.cols() != phi.size())
    throw DimensionError(stage + ": candidate length differs from the cloud");
  rows.conservativeResize(rows.rows() + 1, phi.size());
  rows.row(rows.rows() - 1) = phi.transpose();
  labels.push_back(label);
}

Standardization Standardization::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw DimensionError("standardization needs two rows");
  Standardization s;
  s.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean;
  s.scale = (centered.colwise().squaredNorm() / double(rows.rows() - 1))
                .cwiseSqrt()
                .cwiseMax(1e-12);
  return s;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size())
    throw DimensionError("standardization width mismatch");
  return (rows.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::MatrixXd PcaModel::scores(const Eigen::MatrixXd& rows) const {
  return standardization.apply(rows) * components;
}

int PcaModel::components_for(double fraction) const {
  const double total = total_variance();
  if (!(total > 0.0)) return 1;
  double acc = 0.0;
  for (int k = 0; k < variances.size(); ++k) {
    acc += std::max(variances[k], 0.0);
    if (acc >= fraction * total - 1e-12 * total) return k + 1;
  }
  return static_cast<int>(variances.size());
}

PcaModel pca_fit(const ParameterCloud& cloud) {
  if (cloud.size() < 3)
    throw DimensionError(cloud.stage + ": PCA needs at least 3 candidates");
  return pca_fit(cloud, Standardization::fit(cloud.rows));
}

PcaModel pca_fit(const ParameterCloud& cloud, const Standardization& common) {
  if (cloud.size() < 3)
    throw DimensionError(cloud.stage + ": PCA needs at least 3 candidates");
  PcaModel m;
  m.standardization = common;
  const Eigen::MatrixXd z = common.apply(cloud.rows);
  const Eigen::MatrixXd centered = z.rowwise() - z.colwise().mean();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / double(cloud.size() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const int p = static_cast<int>(cov.rows());
  m.components.resize(p, p);
  m.variances.resize(p);
  // Eigen returns ascending eigenvalues.
  for (int k = 0; k < p; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(p - 1 - k);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v[big] < 0.0) v = -v;
    m.components.col(k) = v;
    m.variances[k] = es.eigenvalues()[p - 1 - k];
  }
  return m;
}

Representative select_representative(const ParameterCloud& cloud,
                                     double variance_fraction, int k) {
  const int n = cloud.size();
  if (n == 0) throw DimensionError(cloud.stage + ": empty cloud");
  Representative r;
  if (n < 3) {
    // Too few candidates for a score space; take the first label.
    r.index = static_cast<int>(
        std::min_element(cloud.labels.begin(), cloud.labels.end()) -
        cloud.labels.begin());
    r.label = cloud.labels[r.index];
    return r;
  }
  const PcaModel m = pca_fit(cloud);
  r.components = k > 0 ? std::min<int>(k, static_cast<int>(m.variances.size()))
                       : m.components_for(variance_fraction);
  const Eigen::MatrixXd s = m.scores(cloud.rows).leftCols(r.components);
  double best = 0.0;
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += (s.row(i) - s.row(j)).norm();
    const bool better =
        r.index < 0 || total < best - 1e-12 * std::max(1.0, best) ||
        (std::abs(total - best) <= 1e-12 * std::max(1.0, best) &&
         cloud.labels[i] < cloud.labels[r.index]);
    if (better) {
      best = total;
      r.index = i;
    }
  }
  r.label = cloud.labels[r.index];
  return r;
}

double dispersion(const Eigen::MatrixXd& z) {
  if (z.rows() == 0) throw DimensionError("dispersion of an empty cloud");
  const Eigen::RowVectorXd c = z.colwise().mean();
  return (z.rowwise() - c).rowwise().norm().mean();
}

double dispersion(const ParameterCloud& cloud, const Standardization& common) {
  return dispersion(common.apply(cloud.rows));
}

std::vector<RoutingRow> routing_summary(const std::vector<RouteRecord>& records) {
  std::map<double, RoutingRow> by_ts;
  for (const auto& r : records) {
    RoutingRow& row = by_ts[r.ts_ms];
    row.ts_ms = r.ts_ms;
    if (!r.ok() && r.phi_ols.size() == 0)
      ++row.failed;
    else if (r.route == Route::kOlsClie)
      ++row.pd;
    else
      ++row.non_pd;
  }
  std::vector<RoutingRow> out;
  for (const auto& [ts, row] : by_ts) out.push_back(row);
  return out;
}

}  // namespace dynid
