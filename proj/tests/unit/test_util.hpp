#pragma once

#include "mcpep/chain_io.hpp"
#include "mcpep/filter.hpp"

#include <Eigen/Geometry>

namespace mcpep::testing {

inline Link point_mass(double m, const Vec3& com) {
  Link l;
  l.inertia.mass = m;
  l.inertia.com = com;
  l.inertia.inertia = m > 0.0 ? Mat3(1e-12 * Mat3::Identity()) : Mat3(Mat3::Zero());
  return l;
}

/// Planar chain about z with unit links along x; masses at the link midpoints.
inline ChainModel planar_chain(int n, double mass = 1.0) {
  std::vector<Joint> joints(static_cast<std::size_t>(n));
  std::vector<Link> links;
  for (int i = 0; i < n; ++i) {
    joints[static_cast<std::size_t>(i)].axis = Vec3::UnitZ();
    if (i > 0) joints[static_cast<std::size_t>(i)].origin.origin = Vec3(1.0, 0.0, 0.0);
    Link l;
    l.inertia.mass = mass;
    l.inertia.com = Vec3(0.5, 0.0, 0.0);
    l.inertia.inertia = mass > 0.0 ? Mat3(Vec3(0.01, mass / 12.0, mass / 12.0).asDiagonal()) : Mat3(Mat3::Zero());
    links.push_back(l);
  }
  return ChainModel(joints, links, Vec3(0.0, -9.81, 0.0));
}

inline VecX random_q(const ChainModel& chain, Rng& rng) {
  VecX q(static_cast<Eigen::Index>(chain.dof()));
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joint(i);
    q[static_cast<Eigen::Index>(i)] = std::uniform_real_distribution<double>(j.lower, j.upper)(rng);
  }
  return q;
}

inline VecX random_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

/// Shared arm model; building the neighbor tables takes a moment.
inline const FilterModel& arm_model() {
  static const FilterModel model = make_synthetic_model(seven_dof_arm());
  return model;
}

}  // namespace mcpep::testing
