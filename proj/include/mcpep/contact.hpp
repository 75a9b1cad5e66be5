#pragma once

#include "mcpep/kinematics.hpp"
#include "mcpep/mesh.hpp"
#include "mcpep/nnls.hpp"

#include <array>
#include <span>
#include <vector>

namespace mcpep {

/// Four-sided pyramid inscribed in the Coulomb cone. Support vectors point
/// into the surface, so nonnegative combinations are admissible contact
/// forces (the printed formulation constrains weights <= 0 with the
/// opposite orientation; the two are equivalent).
struct FrictionConeBasis {
  std::array<Vec3, 4> supports;
  double mu = 0.5;
  Vec3 normal = Vec3::UnitZ();  // outward

  Eigen::Matrix<double, 3, 4> matrix() const;
  /// True when `force` is a nonnegative combination of the supports.
  bool contains(const Vec3& force, double tol = 1e-9) const;
};

/// Tangent t1 = normalize(normal x e) with e the axis of the smallest
/// |normal| component, t2 = normal x t1; supports are ordered t1, t2, -t1, -t2.
FrictionConeBasis cone_basis(const Vec3& normal, double mu);

struct ContactPoint {
  int link = 0;
  Vec3 point = Vec3::Zero();   // world
  Vec3 normal = Vec3::UnitZ(); // world, outward
};

/// Q (4k x (n+6)): rows 4i..4i+3 are [a_j^T J_i, a_j^T, (r_i x a_j)^T].
struct ContactSystem {
  MatX q;
  std::vector<ContactPoint> contacts;
  std::vector<FrictionConeBasis> bases;
};

/// [I; skew(r)], mapping a force at r to its base wrench.
Eigen::Matrix<double, 6, 3> contact_wrench_map(const Vec3& r);

/// Writes the four columns of Q^T for one contact into `qt` starting at `col`.
/// `qt` must have n + 6 rows.
void fill_contact_columns(const ChainModel& chain, std::span<const Pose> frames,
                          const ContactPoint& contact, const FrictionConeBasis& basis, MatX& qt,
                          Eigen::Index col);

ContactSystem assemble_contact_system(const ChainModel& chain, std::span<const Pose> frames,
                                      std::span<const ContactPoint> contacts, double mu);
/// Particles must sit on distinct links.
ContactSystem assemble_contact_system(const ChainModel& chain, const VecX& q,
                                      const SurfaceSet& surfaces, std::span<const Particle> particles,
                                      double mu);

struct ForceSolution {
  VecX weights;               // 4k, all >= 0
  std::vector<Vec3> forces;   // F_i = A_i f_i
  double residual_sq = 0.0;   // ||W_hat - Q^T f||^2
  int iterations = 0;
};

/// min ||w_hat - Q^T f||^2 s.t. f >= 0. Default iteration cap is 3 * 4k.
ForceSolution solve_force_qp(const ContactSystem& system, const VecX& w_hat, int max_iterations = 0);

/// Noise-free measurement [sum J_i^T F_i; sum F_i; sum r_i x F_i].
VecX contact_measurement(const ChainModel& chain, std::span<const Pose> frames,
                         std::span<const ContactPoint> contacts, std::span<const Vec3> forces);

}  // namespace mcpep
