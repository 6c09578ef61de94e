#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dynid/types.hpp"

namespace dynid {

/// One row of a modified Denavit-Hartenberg table (Craig convention):
/// T = RotX(alpha) * TransX(a) * RotZ(theta) * TransZ(d), with
/// theta = axis_sign * q + theta_offset.
struct DhLink {
  double alpha = 0.0;
  double a = 0.0;
  double d = 0.0;
  double theta_offset = 0.0;
  int axis_sign = 1;
};

/// Inertial parameters of one link in its own DH frame. The inertia tensor is
/// taken about the frame origin; products of inertia use the tensor-entry
/// convention [[XX, XY, XZ], [XY, YY, YZ], [XZ, YZ, ZZ]].
struct LinkInertia {
  double xx = 0.0, xy = 0.0, xz = 0.0, yy = 0.0, yz = 0.0, zz = 0.0;
  double mx = 0.0, my = 0.0, mz = 0.0, mass = 0.0;
};

struct StandardInertialParams {
  std::vector<LinkInertia> links;
  std::vector<double> rotor_inertia;     // one per axis
  std::vector<double> viscous_friction;  // one per axis
};

/// Serial chain with `links.size()` rigid links and `n_axes` actuated axes.
/// Axes beyond the last link are decoupled rotors (rotor inertia and viscous
/// friction only), e.g. a gripper axis.
struct ChainDescription {
  std::string name;
  std::vector<DhLink> links;
  int n_axes = 0;
  StandardInertialParams nominal;
  double gravity = 9.80665;
  std::vector<JointInterval> audit_domain;  // one per link [rad]
  std::vector<double> nominal_posture;      // one per axis [rad]
  std::vector<std::string> base_order;      // optional published ordering
  std::map<std::string, std::string> base_aliases;

  int dof() const { return n_axes; }
  int n_links() const { return static_cast<int>(links.size()); }
};

enum class InertiaModel {
  kNoProducts,  // XX YY ZZ MX MY MZ M per link (products of inertia removed)
  kFull,        // XX XY XZ YY YZ ZZ MX MY MZ M per link
};

enum class LinkParam { kXX, kXY, kXZ, kYY, kYZ, kZZ, kMX, kMY, kMZ, kM };

/// Index layout of the standard parameter vector: link blocks first, then the
/// rotor inertias IA1..IAn, then the viscous frictions FV1..FVn.
class StandardLayout {
 public:
  struct Entry {
    enum class Kind { kLink, kRotor, kFriction } kind;
    int index;        // link or axis, zero based
    LinkParam param;  // meaningful for kLink only
  };

  StandardLayout() = default;
  StandardLayout(int n_links, int n_axes, InertiaModel model);

  int size() const { return static_cast<int>(entries_.size()); }
  int n_links() const { return n_links_; }
  int n_axes() const { return n_axes_; }
  InertiaModel model() const { return model_; }
  const Entry& entry(int i) const { return entries_.at(i); }
  /// -1 when `p` is not part of this model (products under kNoProducts).
  int link_index(int link, LinkParam p) const;
  int rotor_index(int axis) const { return n_links_ * per_link() + axis; }
  int friction_index(int axis) const {
    return n_links_ * per_link() + n_axes_ + axis;
  }
  int per_link() const { return model_ == InertiaModel::kFull ? 10 : 7; }
  std::string name(int i) const;

 private:
  int n_links_ = 0;
  int n_axes_ = 0;
  InertiaModel model_ = InertiaModel::kNoProducts;
  std::vector<Entry> entries_;
};

std::string_view link_param_name(LinkParam p);

Eigen::VectorXd to_vector(const StandardInertialParams& params,
                          const StandardLayout& layout);
StandardInertialParams from_vector(const Eigen::VectorXd& v,
                                   const StandardLayout& layout);
StandardInertialParams zero_params(const ChainDescription& chain);

/// Linear grouping of the standard vector onto the identifiable base set.
/// Each base parameter is realized by one standard column (`base_columns`),
/// so `expand` is a right inverse of `grouping`.
struct BaseParamMapping {
  StandardLayout layout;
  std::vector<std::string> names;
  std::vector<int> base_columns;
  Eigen::MatrixXd grouping;  // size() x layout.size()
  std::vector<std::string> provenance;
  std::vector<int> zero_columns;       // no torque contribution at all
  std::vector<int> dependent_columns;  // absorbed into base parameters

  int size() const { return static_cast<int>(names.size()); }
  int index_of(std::string_view name) const;
  Eigen::VectorXd expand(const Eigen::VectorXd& base) const;
};

enum class ParamGroup { kInertia, kFirstMoment, kRotor, kFriction };

ParamGroup group_of(std::string_view name);
std::string_view unit_of(std::string_view name);

/// Named base-parameter vector. Names are kept alongside the values so a
/// vector can be written, read back and checked against a mapping.
class ReducedParamVector {
 public:
  ReducedParamVector() = default;
  ReducedParamVector(std::vector<std::string> names, Eigen::VectorXd values);

  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  double operator[](std::string_view name) const;
  double& operator[](std::string_view name);

  /// "name,value" lines with round-trip precision.
  std::string to_csv() const;
  static ReducedParamVector from_csv(std::string_view text);

 private:
  int find(std::string_view name) const;
  std::vector<std::string> names_;
  Eigen::VectorXd values_;
};

std::filesystem::path default_config_dir();
ChainDescription parse_chain(const nlohmann::json& doc);
ChainDescription load_chain(const std::filesystem::path& path);
ChainDescription build_default_chain();

ReducedParamVector load_reduced_params(const std::filesystem::path& path);
void save_reduced_params(const ReducedParamVector& params,
                         const std::filesystem::path& path);
/// Values for `mapping.names`, in mapping order; throws if a name is missing.
Eigen::VectorXd align_to(const ReducedParamVector& params,
                         const BaseParamMapping& mapping);

/// Base-parameter reduction by greedy column selection on a stacked random
/// full regressor. Columns are visited link by link in the order
/// XX ZZ MX MY MZ XY XZ YZ YY M, then rotors and frictions, and kept when they
/// raise the numerical rank (threshold 1e-8 * sigma_max). Dependent columns are
/// regressed onto the kept ones to form the grouping matrix.
BaseParamMapping numerical_base_reduction(
    const ChainDescription& chain, int n_samples, std::uint64_t seed,
    InertiaModel model = InertiaModel::kNoProducts);

/// Applies the grouping matrix: exact linear map, no tolerance.
ReducedParamVector reduce(const StandardInertialParams& params,
                          const BaseParamMapping& mapping);

}  // namespace dynid
