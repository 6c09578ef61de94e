#include <doctest.h>

#include <Eigen/SVD>
#include <map>

#include "dynid/errors.hpp"
#include "support.hpp"

using namespace dynid;
using dynid::testing::reference;

namespace {

int numerical_rank(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 1e-8 * s[0]) ++r;
  return r;
}

StandardInertialParams random_params(std::mt19937_64& rng, const ChainDescription& c) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  StandardInertialParams p = zero_params(c);
  for (auto& l : p.links) {
    l.xx = u(rng); l.xy = u(rng); l.xz = u(rng); l.yy = u(rng); l.yz = u(rng);
    l.zz = u(rng); l.mx = u(rng); l.my = u(rng); l.mz = u(rng); l.mass = 1.0 + u(rng);
  }
  for (auto& v : p.rotor_inertia) v = u(rng);
  for (auto& v : p.viscous_friction) v = u(rng);
  return p;
}

}  // namespace

TEST_CASE("default chain has 8 axes over 7 links and the reference posture") {
  const ChainDescription c = build_default_chain();
  CHECK(c.dof() == 8);
  CHECK(c.n_links() == 7);
  REQUIRE(c.nominal_posture.size() == 8);
  for (int i = 0; i < 8; ++i)
    CHECK(c.nominal_posture[i] == doctest::Approx(i == 3 ? deg2rad(-90.0) : 0.0));
}

TEST_CASE("a three-axis chain parses") {
  const nlohmann::json doc = {
      {"links",
       {{{"alpha_deg", 0}, {"a", 0}, {"d", 0.1}},
        {{"alpha_deg", -90}, {"a", 0}, {"d", 0}},
        {{"alpha_deg", 0}, {"a", 0.3}, {"d", 0}}}}};
  const ChainDescription c = parse_chain(doc);
  CHECK(c.dof() == 3);
  CHECK(c.n_links() == 3);
  const BaseParamMapping m = numerical_base_reduction(c, 500, 3);
  CHECK(m.size() > 0);
}

TEST_CASE("malformed chain configs are rejected") {
  CHECK_THROWS_AS(parse_chain(nlohmann::json{{"links", nlohmann::json::array()}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_chain(nlohmann::json{{"links", {{{"alpha_deg", 0}}}}}),
                  ConfigError);
  const nlohmann::json bad_sign = {
      {"links", {{{"alpha_deg", 0}, {"a", 0}, {"d", 0}, {"sign", 2}}}}};
  CHECK_THROWS_AS(parse_chain(bad_sign), ConfigError);
}

TEST_CASE("reduction yields the 39 published base parameters") {
  const auto& m = reference().mapping;
  const std::vector<std::string> published = {
      "ZZR1", "XXR2", "ZZR2", "MX2",  "MYR2", "XXR3", "ZZR3", "MX3",
      "MYR3", "XXR4", "ZZR4", "MX4",  "MYR4", "IA3",  "IA4",  "IA5",
      "IA6",  "IA7",  "IA8",  "XXR5", "ZZR5", "MX5",  "MYR5", "XXR6",
      "ZZR6", "MX6",  "MYR6", "XXR7", "ZZ7",  "MX7",  "MZ7",  "FV1",
      "FV2",  "FV3",  "FV4",  "FV5",  "FV6",  "FV7",  "FV8"};
  CHECK(m.names == published);
  std::map<ParamGroup, int> groups;
  for (const auto& n : m.names) ++groups[group_of(n)];
  CHECK(groups[ParamGroup::kInertia] == 13);
  CHECK(groups[ParamGroup::kFirstMoment] == 12);
  CHECK(groups[ParamGroup::kRotor] == 6);
  CHECK(groups[ParamGroup::kFriction] == 8);
}

TEST_CASE("base count does not depend on the sampling seed") {
  const ChainDescription c = build_default_chain();
  for (std::uint64_t seed : {2, 3, 4, 5, 6})
    CHECK(numerical_base_reduction(c, 2000, seed).size() == 39);
}

TEST_CASE("products of inertia retained: count is reported and exceeds 39") {
  const ChainDescription c = build_default_chain();
  const BaseParamMapping m = numerical_base_reduction(c, 2000, 1, InertiaModel::kFull);
  MESSAGE("base parameters with products of inertia: " << m.size());
  CHECK(m.size() > 39);
}

TEST_CASE("pendulum base set matches the rank of its analytic regressor") {
  // tau = (ZZ+IA) qdd + g (MX cos q - MY sin q) + FV qd: four independent
  // columns, so MY stays in the base set alongside ZZ+IA, MX and FV.
  const ChainDescription c = dynid::testing::pendulum_chain();
  const BaseParamMapping m = numerical_base_reduction(c, 2000, 1);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd w(200, 4);
  for (int k = 0; k < 200; ++k) {
    const double q = u(rng), qd = u(rng), qdd = u(rng);
    w.row(k) << qdd, c.gravity * std::cos(q), -c.gravity * std::sin(q), qd;
  }
  CHECK(numerical_rank(w) == 4);
  CHECK(m.size() == 4);
  CHECK(m.index_of("FV1") >= 0);
}

TEST_CASE("reduce is linear and groups YY7 into link 6 and XXR7") {
  const auto& r = reference();
  const StandardInertialParams zero = zero_params(r.chain);
  CHECK(reduce(zero, r.mapping).values().isZero(0.0));

  StandardInertialParams p = zero_params(r.chain);
  p.links[6].yy = 0.001;
  p.links[5].zz = 0.002;
  const ReducedParamVector red = reduce(p, r.mapping);
  // Standard groupings for a revolute joint 7 with alpha = +-90 deg:
  // ZZR6 = ZZ6 + YY7, XXR6 = XX6 - YY6 + YY7, XXR7 = XX7 - YY7.
  CHECK(red["ZZR6"] == doctest::Approx(0.003).epsilon(1e-12));
  CHECK(red["XXR6"] == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(red["XXR7"] == doctest::Approx(-0.001).epsilon(1e-12));
  for (const auto& n : r.mapping.names)
    if (n != "ZZR6" && n != "XXR6" && n != "XXR7" && group_of(n) == ParamGroup::kInertia)
      CHECK(std::abs(red[n]) <= 1e-12);
}

TEST_CASE("grouping reproduces inverse dynamics of random standard vectors") {
  const auto& r = reference();
  std::mt19937_64 rng(11);
  RegressorEvaluator ev(r.chain, r.mapping);
  Eigen::MatrixXd w(r.chain.dof(), r.mapping.size());
  for (int trial = 0; trial < 5; ++trial) {
    const StandardInertialParams p = random_params(rng, r.chain);
    // The no-products mapping ignores products of inertia.
    StandardInertialParams np = p;
    for (auto& l : np.links) l.xy = l.xz = l.yz = 0.0;
    const Eigen::VectorXd phi = reduce(np, r.mapping).values();
    for (int k = 0; k < 20; ++k) {
      JointState s{dynid::testing::random_joints(rng, 8, 3.0),
                   dynid::testing::random_joints(rng, 8, 3.0),
                   dynid::testing::random_joints(rng, 8, 3.0)};
      ev.evaluate(s, w);
      const JointVector tau = rnea_torque(r.chain, np, s);
      const double err = (w * phi - tau).cwiseAbs().maxCoeff();
      CHECK(err <= 1e-9 * std::max(1.0, tau.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("expand is a right inverse of the grouping") {
  const auto& r = reference();
  const Eigen::VectorXd back = r.mapping.grouping * r.mapping.expand(r.phi);
  CHECK((back - r.phi).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("reduced parameter CSV round-trips") {
  const auto& r = reference();
  const ReducedParamVector v(r.mapping.names, r.phi);
  const ReducedParamVector back = ReducedParamVector::from_csv(v.to_csv());
  CHECK(back.names() == v.names());
  CHECK(back.values() == v.values());
  CHECK_THROWS(align_to(ReducedParamVector({"ZZR1"}, Eigen::VectorXd::Ones(1)), r.mapping));
}

TEST_CASE("units follow the parameter group") {
  CHECK(unit_of("ZZR1") == "kg*m^2");
  CHECK(unit_of("MX2") == "kg*m");
  CHECK(unit_of("IA3") == "kg*m^2");
  CHECK(unit_of("FV1") == "N*m*s/rad");
}
