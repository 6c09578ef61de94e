#pragma once

#include <random>

#include "dynid/chain_model.hpp"
#include "dynid/dynamics.hpp"

namespace dynid::testing {

/// Default chain, its 39-entry mapping and the reference parameter vector,
/// built once per test binary.
struct Reference {
  ChainDescription chain;
  BaseParamMapping mapping;
  Eigen::VectorXd phi;
};

inline const Reference& reference() {
  static const Reference r = [] {
    Reference out;
    out.chain = build_default_chain();
    out.mapping = numerical_base_reduction(out.chain, 2000, 1);
    out.phi = align_to(
        load_reduced_params(default_config_dir() / "reference_params.csv"),
        out.mapping);
    return out;
  }();
  return r;
}

inline JointVector random_joints(std::mt19937_64& rng, int dof, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  JointVector v(dof);
  for (int i = 0; i < dof; ++i) v[i] = u(rng);
  return v;
}

/// One link rotating about a horizontal axis, x along the rod at q = 0.
inline ChainDescription pendulum_chain() {
  ChainDescription c;
  c.name = "pendulum";
  c.links = {DhLink{kPi / 2, 0.0, 0.0, 0.0, 1}};
  c.n_axes = 1;
  c.nominal.links.resize(1);
  c.nominal.rotor_inertia = {0.0};
  c.nominal.viscous_friction = {0.0};
  c.audit_domain = {{-kPi / 2, kPi / 2}};
  c.nominal_posture = {0.0};
  return c;
}

/// One link about the vertical axis: gravity has no effect and M = ZZ + IA.
inline ChainDescription turntable_chain() {
  ChainDescription c = pendulum_chain();
  c.name = "turntable";
  c.links = {DhLink{0.0, 0.0, 0.0, 0.0, 1}};
  return c;
}

}  // namespace dynid::testing
