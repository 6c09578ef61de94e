#include "dynid/chain_model.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dynid/dynamics.hpp"
#include "dynid/errors.hpp"
#include "dynid/text.hpp"

#ifndef DYNID_DEFAULT_CONFIG_DIR
#define DYNID_DEFAULT_CONFIG_DIR "config"
#endif

namespace dynid {

namespace {

constexpr LinkParam kNoProductParams[] = {LinkParam::kXX, LinkParam::kYY,
                                          LinkParam::kZZ, LinkParam::kMX,
                                          LinkParam::kMY, LinkParam::kMZ,
                                          LinkParam::kM};
constexpr LinkParam kFullParams[] = {
    LinkParam::kXX, LinkParam::kXY, LinkParam::kXZ, LinkParam::kYY,
    LinkParam::kYZ, LinkParam::kZZ, LinkParam::kMX, LinkParam::kMY,
    LinkParam::kMZ, LinkParam::kM};

// Visiting order for the greedy selection. Keeping XX and ZZ ahead of YY lets
// YY fold into them, and keeping M last lets it fold into first moments.
constexpr LinkParam kSelectionOrder[] = {
    LinkParam::kXX, LinkParam::kZZ, LinkParam::kMX, LinkParam::kMY,
    LinkParam::kMZ, LinkParam::kXY, LinkParam::kXZ, LinkParam::kYZ,
    LinkParam::kYY, LinkParam::kM};

double& field(LinkInertia& li, LinkParam p) {
  switch (p) {
    case LinkParam::kXX: return li.xx;
    case LinkParam::kXY: return li.xy;
    case LinkParam::kXZ: return li.xz;
    case LinkParam::kYY: return li.yy;
    case LinkParam::kYZ: return li.yz;
    case LinkParam::kZZ: return li.zz;
    case LinkParam::kMX: return li.mx;
    case LinkParam::kMY: return li.my;
    case LinkParam::kMZ: return li.mz;
    case LinkParam::kM: return li.mass;
  }
  throw Error("bad link parameter");
}

double field(const LinkInertia& li, LinkParam p) {
  return field(const_cast<LinkInertia&>(li), p);
}

std::vector<double> read_doubles(const nlohmann::json& arr,
                                 const std::string& key) {
  if (!arr.is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError("'" + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::string format_coeff(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", c);
  return buf;
}

// "ZZ6" -> "ZZR6", "M3" -> "MR3".
std::string grouped_name(const std::string& raw) {
  auto pos = raw.find_first_of("0123456789");
  if (pos == std::string::npos) return raw + "R";
  return raw.substr(0, pos) + "R" + raw.substr(pos);
}

}  // namespace

std::string_view link_param_name(LinkParam p) {
  switch (p) {
    case LinkParam::kXX: return "XX";
    case LinkParam::kXY: return "XY";
    case LinkParam::kXZ: return "XZ";
    case LinkParam::kYY: return "YY";
    case LinkParam::kYZ: return "YZ";
    case LinkParam::kZZ: return "ZZ";
    case LinkParam::kMX: return "MX";
    case LinkParam::kMY: return "MY";
    case LinkParam::kMZ: return "MZ";
    case LinkParam::kM: return "M";
  }
  return "?";
}

StandardLayout::StandardLayout(int n_links, int n_axes, InertiaModel model)
    : n_links_(n_links), n_axes_(n_axes), model_(model) {
  if (n_links < 0 || n_axes < n_links)
    throw DimensionError("chain needs at least one axis per link");
  for (int l = 0; l < n_links; ++l) {
    if (model == InertiaModel::kFull) {
      for (auto p : kFullParams) entries_.push_back({Entry::Kind::kLink, l, p});
    } else {
      for (auto p : kNoProductParams)
        entries_.push_back({Entry::Kind::kLink, l, p});
    }
  }
  for (int a = 0; a < n_axes; ++a)
    entries_.push_back({Entry::Kind::kRotor, a, LinkParam::kM});
  for (int a = 0; a < n_axes; ++a)
    entries_.push_back({Entry::Kind::kFriction, a, LinkParam::kM});
}

int StandardLayout::link_index(int link, LinkParam p) const {
  const int base = link * per_link();
  if (model_ == InertiaModel::kFull) {
    for (int k = 0; k < 10; ++k)
      if (kFullParams[k] == p) return base + k;
  } else {
    for (int k = 0; k < 7; ++k)
      if (kNoProductParams[k] == p) return base + k;
  }
  return -1;
}

std::string StandardLayout::name(int i) const {
  const Entry& e = entry(i);
  const std::string idx = std::to_string(e.index + 1);
  switch (e.kind) {
    case Entry::Kind::kLink: return std::string(link_param_name(e.param)) + idx;
    case Entry::Kind::kRotor: return "IA" + idx;
    case Entry::Kind::kFriction: return "FV" + idx;
  }
  return "?";
}

Eigen::VectorXd to_vector(const StandardInertialParams& params,
                          const StandardLayout& layout) {
  if (static_cast<int>(params.links.size()) != layout.n_links() ||
      static_cast<int>(params.rotor_inertia.size()) != layout.n_axes() ||
      static_cast<int>(params.viscous_friction.size()) != layout.n_axes())
    throw DimensionError("standard parameters do not match the layout");
  Eigen::VectorXd v(layout.size());
  for (int i = 0; i < layout.size(); ++i) {
    const auto& e = layout.entry(i);
    switch (e.kind) {
      case StandardLayout::Entry::Kind::kLink:
        v[i] = field(params.links[e.index], e.param);
        break;
      case StandardLayout::Entry::Kind::kRotor:
        v[i] = params.rotor_inertia[e.index];
        break;
      case StandardLayout::Entry::Kind::kFriction:
        v[i] = params.viscous_friction[e.index];
        break;
    }
  }
  return v;
}

StandardInertialParams from_vector(const Eigen::VectorXd& v,
                                   const StandardLayout& layout) {
  if (v.size() != layout.size())
    throw DimensionError("standard vector has " + std::to_string(v.size()) +
                         " entries, layout expects " +
                         std::to_string(layout.size()));
  StandardInertialParams p;
  p.links.resize(layout.n_links());
  p.rotor_inertia.assign(layout.n_axes(), 0.0);
  p.viscous_friction.assign(layout.n_axes(), 0.0);
  for (int i = 0; i < layout.size(); ++i) {
    const auto& e = layout.entry(i);
    switch (e.kind) {
      case StandardLayout::Entry::Kind::kLink:
        field(p.links[e.index], e.param) = v[i];
        break;
      case StandardLayout::Entry::Kind::kRotor:
        p.rotor_inertia[e.index] = v[i];
        break;
      case StandardLayout::Entry::Kind::kFriction:
        p.viscous_friction[e.index] = v[i];
        break;
    }
  }
  return p;
}

StandardInertialParams zero_params(const ChainDescription& chain) {
  StandardInertialParams p;
  p.links.resize(chain.n_links());
  p.rotor_inertia.assign(chain.n_axes, 0.0);
  p.viscous_friction.assign(chain.n_axes, 0.0);
  return p;
}

int BaseParamMapping::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (names[i] == name) return i;
  return -1;
}

Eigen::VectorXd BaseParamMapping::expand(const Eigen::VectorXd& base) const {
  if (base.size() != size())
    throw DimensionError("base vector has " + std::to_string(base.size()) +
                         " entries, mapping expects " + std::to_string(size()));
  Eigen::VectorXd full = Eigen::VectorXd::Zero(layout.size());
  for (int k = 0; k < size(); ++k) full[base_columns[k]] = base[k];
  return full;
}

ParamGroup group_of(std::string_view name) {
  if (name.starts_with("IA")) return ParamGroup::kRotor;
  if (name.starts_with("FV")) return ParamGroup::kFriction;
  if (name.starts_with("M")) return ParamGroup::kFirstMoment;
  return ParamGroup::kInertia;
}

std::string_view unit_of(std::string_view name) {
  switch (group_of(name)) {
    case ParamGroup::kInertia:
    case ParamGroup::kRotor: return "kg*m^2";
    case ParamGroup::kFirstMoment:
      return (name.size() > 1 && (name[1] == 'X' || name[1] == 'Y' ||
                                  name[1] == 'Z'))
                 ? "kg*m"
                 : "kg";
    case ParamGroup::kFriction: return "N*m*s/rad";
  }
  return "";
}

ReducedParamVector::ReducedParamVector(std::vector<std::string> names,
                                       Eigen::VectorXd values)
    : names_(std::move(names)), values_(std::move(values)) {
  if (static_cast<int>(names_.size()) != values_.size())
    throw DimensionError("name and value counts differ");
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size())
    throw ConfigError("duplicate parameter names");
}

int ReducedParamVector::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[i] == name) return i;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

double ReducedParamVector::operator[](std::string_view name) const {
  return values_[find(name)];
}

double& ReducedParamVector::operator[](std::string_view name) {
  return values_[find(name)];
}

std::string ReducedParamVector::to_csv() const {
  std::string out = "name,value\n";
  for (int i = 0; i < size(); ++i)
    out += names_[i] + "," + text::format_double(values_[i]) + "\n";
  return out;
}

ReducedParamVector ReducedParamVector::from_csv(std::string_view text) {
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& line : text::split_lines(text)) {
    auto cells = text::split(line, ',');
    if (cells.size() < 2) throw ConfigError("malformed parameter line: " + line);
    if (cells.front() == "name") continue;
    names.push_back(cells.front());
    values.push_back(text::parse_double(cells.back()));
  }
  return ReducedParamVector(
      std::move(names),
      Eigen::Map<Eigen::VectorXd>(values.data(),
                                  static_cast<Eigen::Index>(values.size())));
}

std::filesystem::path default_config_dir() {
  if (const char* env = std::getenv("DYNID_CONFIG_DIR"); env && *env)
    return env;
  return DYNID_DEFAULT_CONFIG_DIR;
}

ChainDescription parse_chain(const nlohmann::json& doc) {
  try {
    ChainDescription c;
    c.name = doc.value("name", "chain");
    c.gravity = doc.value("gravity", 9.80665);
    const auto& links = doc.at("links");
    if (!links.is_array() || links.empty())
      throw ConfigError("'links' must be a non-empty array");
    c.n_axes = doc.value("axes", static_cast<int>(links.size()));
    if (c.n_axes < static_cast<int>(links.size()) || c.n_axes > kMaxDof)
      throw ConfigError("'axes' must lie in [links, " +
                        std::to_string(kMaxDof) + "]");
    for (const auto& row : links) {
      DhLink dh;
      dh.alpha = deg2rad(row.at("alpha_deg").get<double>());
      dh.a = row.at("a").get<double>();
      dh.d = row.at("d").get<double>();
      dh.theta_offset = deg2rad(row.value("theta_offset_deg", 0.0));
      dh.axis_sign = row.value("sign", 1);
      if (dh.axis_sign != 1 && dh.axis_sign != -1)
        throw ConfigError("'sign' must be +1 or -1");
      if (!std::isfinite(dh.alpha) || !std::isfinite(dh.a) ||
          !std::isfinite(dh.d) || !std::isfinite(dh.theta_offset))
        throw ConfigError("DH entries must be finite");
      c.links.push_back(dh);
      LinkInertia li;
      if (row.contains("inertia")) {
        const auto& in = row.at("inertia");
        for (auto p : kFullParams) {
          std::string key(link_param_name(p));
          if (in.contains(key)) field(li, p) = in.at(key).get<double>();
        }
      }
      c.nominal.links.push_back(li);
    }
    const int n = c.n_axes;
    c.nominal.rotor_inertia =
        doc.contains("rotor_inertia")
            ? read_doubles(doc.at("rotor_inertia"), "rotor_inertia")
            : std::vector<double>(n, 0.0);
    c.nominal.viscous_friction =
        doc.contains("viscous_friction")
            ? read_doubles(doc.at("viscous_friction"), "viscous_friction")
            : std::vector<double>(n, 0.0);
    if (static_cast<int>(c.nominal.rotor_inertia.size()) != n ||
        static_cast<int>(c.nominal.viscous_friction.size()) != n)
      throw ConfigError("rotor_inertia/viscous_friction need one entry per axis");

    if (doc.contains("audit_domain_deg")) {
      for (const auto& iv : doc.at("audit_domain_deg")) {
        auto v = read_doubles(iv, "audit_domain_deg");
        if (v.size() != 2 || !(v[0] <= v[1]))
          throw ConfigError("audit interval must be [lower, upper]");
        c.audit_domain.push_back({deg2rad(v[0]), deg2rad(v[1])});
      }
      if (c.audit_domain.size() != links.size())
        throw ConfigError("audit_domain_deg needs one interval per link");
    } else {
      c.audit_domain.assign(links.size(), {-kPi / 2, kPi / 2});
    }
    if (doc.contains("nominal_posture_deg")) {
      for (double d :
           read_doubles(doc.at("nominal_posture_deg"), "nominal_posture_deg"))
        c.nominal_posture.push_back(deg2rad(d));
      if (static_cast<int>(c.nominal_posture.size()) != n)
        throw ConfigError("nominal_posture_deg needs one entry per axis");
    } else {
      c.nominal_posture.assign(n, 0.0);
    }
    if (doc.contains("base_order"))
      c.base_order = doc.at("base_order").get<std::vector<std::string>>();
    if (doc.contains("base_aliases"))
      c.base_aliases =
          doc.at("base_aliases").get<std::map<std::string, std::string>>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain config: ") + e.what());
  }
}

ChainDescription load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open chain config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed chain config " + path.string() + ": " +
                      e.what());
  }
  return parse_chain(doc);
}

ChainDescription build_default_chain() {
  return load_chain(default_config_dir() / "crane_x7.json");
}

ReducedParamVector load_reduced_params(const std::filesystem::path& path) {
  return ReducedParamVector::from_csv(text::read_file(path));
}

void save_reduced_params(const ReducedParamVector& params,
                         const std::filesystem::path& path) {
  text::write_file(path, params.to_csv());
}

Eigen::VectorXd align_to(const ReducedParamVector& params,
                         const BaseParamMapping& mapping) {
  Eigen::VectorXd out(mapping.size());
  for (int k = 0; k < mapping.size(); ++k) out[k] = params[mapping.names[k]];
  return out;
}

BaseParamMapping numerical_base_reduction(const ChainDescription& chain,
                                          int n_samples, std::uint64_t seed,
                                          InertiaModel model) {
  BaseParamMapping map;
  map.layout = StandardLayout(chain.n_links(), chain.n_axes, model);
  const StandardLayout& layout = map.layout;
  const int n = layout.size();
  const int dof = chain.dof();
  if (static_cast<long>(n_samples) * dof < n)
    throw DimensionError("need n_samples * dof >= number of standard columns");

  RigidBodyChain body(chain);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(n_samples) * dof, n);
  JointState s{JointVector(dof), JointVector(dof), JointVector(dof)};
  for (int i = 0; i < n_samples; ++i) {
    for (int j = 0; j < dof; ++j) {
      if (j < chain.n_links()) {
        const auto& iv = chain.audit_domain[j];
        s.q[j] = iv.lower + 0.5 * (unit(rng) + 1.0) * (iv.upper - iv.lower);
      } else {
        s.q[j] = unit(rng);
      }
      s.qd[j] = 2.0 * unit(rng);
      s.qdd[j] = 5.0 * unit(rng);
    }
    full_regressor(body, layout, s, chain.gravity, w.middleRows(i * dof, dof));
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd_all(w);
  const Eigen::VectorXd sv = svd_all.singularValues();
  const double sigma_max = sv.size() ? sv[0] : 0.0;
  const double tol = 1e-8 * sigma_max;
  const int full_rank = static_cast<int>((sv.array() > tol).count());

  std::vector<int> order;
  for (int l = 0; l < chain.n_links(); ++l)
    for (auto p : kSelectionOrder)
      if (int idx = layout.link_index(l, p); idx >= 0) order.push_back(idx);
  for (int a = 0; a < chain.n_axes; ++a) order.push_back(layout.rotor_index(a));
  for (int a = 0; a < chain.n_axes; ++a)
    order.push_back(layout.friction_index(a));

  Eigen::MatrixXd q(w.rows(), std::min<Eigen::Index>(w.rows(), n));
  int kept = 0;
  for (int col : order) {
    Eigen::VectorXd r = w.col(col);
    if (r.norm() <= tol) {
      map.zero_columns.push_back(col);
      continue;
    }
    for (int pass = 0; pass < 2 && kept > 0; ++pass)
      r -= q.leftCols(kept) * (q.leftCols(kept).transpose() * r);
    const double rn = r.norm();
    if (rn > tol) {
      q.col(kept++) = r / rn;
      map.base_columns.push_back(col);
    } else {
      map.dependent_columns.push_back(col);
    }
  }
  std::sort(map.zero_columns.begin(), map.zero_columns.end());
  std::sort(map.dependent_columns.begin(), map.dependent_columns.end());

  const int p = static_cast<int>(map.base_columns.size());
  if (p != full_rank) {
    std::vector<std::string> details;
    for (int c : map.base_columns) details.push_back(layout.name(c));
    throw RankDeficiencyError("greedy selection kept " + std::to_string(p) +
                                  " columns but the regressor rank is " +
                                  std::to_string(full_rank),
                              std::move(details));
  }

  Eigen::MatrixXd wb(w.rows(), p);
  for (int k = 0; k < p; ++k) wb.col(k) = w.col(map.base_columns[k]);
  map.grouping = Eigen::MatrixXd::Zero(p, n);
  for (int k = 0; k < p; ++k) map.grouping(k, map.base_columns[k]) = 1.0;
  if (!map.dependent_columns.empty()) {
    Eigen::MatrixXd wd(w.rows(), map.dependent_columns.size());
    for (std::size_t j = 0; j < map.dependent_columns.size(); ++j)
      wd.col(j) = w.col(map.dependent_columns[j]);
    Eigen::MatrixXd beta = wb.colPivHouseholderQr().solve(wd);
    for (std::size_t j = 0; j < map.dependent_columns.size(); ++j)
      for (int k = 0; k < p; ++k)
        if (std::abs(beta(k, j)) >= 1e-10)
          map.grouping(k, map.dependent_columns[j]) = beta(k, j);
  }

  for (int k = 0; k < p; ++k) {
    const int col = map.base_columns[k];
    std::string raw = layout.name(col);
    std::string prov;
    bool grouped = false;
    for (int c : map.dependent_columns) {
      const double g = map.grouping(k, c);
      if (g == 0.0) continue;
      grouped = true;
      prov += (g < 0 ? " - " : " + ");
      if (std::abs(std::abs(g) - 1.0) > 1e-9) prov += format_coeff(std::abs(g)) + "*";
      prov += layout.name(c);
    }
    std::string name = grouped ? grouped_name(raw) : raw;
    if (auto it = chain.base_aliases.find(name); it != chain.base_aliases.end())
      name = it->second;
    map.names.push_back(name);
    map.provenance.push_back(name + " = " + raw + prov);
  }

  if (model == InertiaModel::kNoProducts && !chain.base_order.empty()) {
    std::set<std::string> have(map.names.begin(), map.names.end());
    std::set<std::string> want(chain.base_order.begin(), chain.base_order.end());
    if (have != want) {
      std::vector<std::string> details;
      for (const auto& w_name : want)
        if (!have.count(w_name)) details.push_back("missing " + w_name);
      for (const auto& h_name : have)
        if (!want.count(h_name)) details.push_back("unexpected " + h_name);
      throw RankDeficiencyError(
          "base set (" + std::to_string(p) + " parameters) differs from the "
          "configured base_order (" + std::to_string(chain.base_order.size()) +
          ")", std::move(details));
    }
    std::vector<int> perm;
    for (const auto& nm : chain.base_order) perm.push_back(map.index_of(nm));
    BaseParamMapping sorted = map;
    for (int k = 0; k < p; ++k) {
      sorted.names[k] = map.names[perm[k]];
      sorted.base_columns[k] = map.base_columns[perm[k]];
      sorted.provenance[k] = map.provenance[perm[k]];
      sorted.grouping.row(k) = map.grouping.row(perm[k]);
    }
    map = std::move(sorted);
  }
  return map;
}

ReducedParamVector reduce(const StandardInertialParams& params,
                          const BaseParamMapping& mapping) {
  Eigen::VectorXd v = to_vector(params, mapping.layout);
  return ReducedParamVector(mapping.names, mapping.grouping * v);
}

}  // namespace dynid
