#include "mcpep/contact.hpp"

#include <cmath>
#include <set>

namespace mcpep {

Eigen::Matrix<double, 3, 4> FrictionConeBasis::matrix() const {
  Eigen::Matrix<double, 3, 4> m;
  for (int j = 0; j < 4; ++j) m.col(j) = supports[static_cast<std::size_t>(j)];
  return m;
}

bool FrictionConeBasis::contains(const Vec3& force, double tol) const {
  const Vec3 inward = -normal;
  for (std::size_t j = 0; j < 4; ++j) {
    Vec3 side = supports[j].cross(supports[(j + 1) % 4]);
    if (side.dot(inward) < 0.0) side = -side;
    if (side.dot(force) < -tol * std::max(1.0, force.norm())) return false;
  }
  return true;
}

FrictionConeBasis cone_basis(const Vec3& normal, double mu) {
  const double len = normal.norm();
  if (!(len > 0.0)) throw InputError("cone_basis: zero normal");
  if (!(mu > 0.0)) throw InputError("cone_basis: mu must be positive");
  const Vec3 n = normal / len;

  Eigen::Index axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Vec3 t1 = n.cross(Vec3::Unit(axis)).normalized();
  const Vec3 t2 = n.cross(t1);

  const double half_angle = std::atan(mu);
  const double c = std::cos(half_angle);
  const double s = std::sin(half_angle);
  FrictionConeBasis basis;
  basis.mu = mu;
  basis.normal = n;
  basis.supports = {-c * n + s * t1, -c * n + s * t2, -c * n - s * t1, -c * n - s * t2};
  return basis;
}

Eigen::Matrix<double, 6, 3> contact_wrench_map(const Vec3& r) {
  Eigen::Matrix<double, 6, 3> x;
  x.topRows<3>().setIdentity();
  x.bottomRows<3>() = skew(r);
  return x;
}

void fill_contact_columns(const ChainModel& chain, std::span<const Pose> frames,
                          const ContactPoint& contact, const FrictionConeBasis& basis, MatX& qt,
                          Eigen::Index col) {
  const auto n = static_cast<Eigen::Index>(chain.dof());
  for (int j = 0; j < 4; ++j) {
    const Vec3& a = basis.supports[static_cast<std::size_t>(j)];
    auto column = qt.col(col + j);
    // J^T a, entry i = (z_i x (r - o_i)) . a for joints proximal to the link.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i <= contact.link) {
        const Vec3 z = joint_axis_world(chain, frames, static_cast<std::size_t>(i));
        column[i] = z.cross(contact.point - frames[static_cast<std::size_t>(i)].origin).dot(a);
      } else {
        column[i] = 0.0;
      }
    }
    column.segment<3>(n) = a;
    column.segment<3>(n + 3) = contact.point.cross(a);
  }
}

ContactSystem assemble_contact_system(const ChainModel& chain, std::span<const Pose> frames,
                                      std::span<const ContactPoint> contacts, double mu) {
  if (contacts.empty()) throw InputError("contact system needs at least one contact");
  const auto n = static_cast<Eigen::Index>(chain.dof());
  ContactSystem sys;
  MatX qt(n + 6, static_cast<Eigen::Index>(4 * contacts.size()));
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    if (contacts[i].link < 0 || contacts[i].link >= n) throw InputError("contact link out of range");
    sys.bases.push_back(cone_basis(contacts[i].normal, mu));
    fill_contact_columns(chain, frames, contacts[i], sys.bases.back(), qt, static_cast<Eigen::Index>(4 * i));
    sys.contacts.push_back(contacts[i]);
  }
  sys.q = qt.transpose();
  return sys;
}

ContactSystem assemble_contact_system(const ChainModel& chain, const VecX& q,
                                      const SurfaceSet& surfaces, std::span<const Particle> particles,
                                      double mu) {
  std::set<int> links;
  for (const auto& p : particles) {
    if (!links.insert(p.link).second) {
      throw InputError("at most one contact per link; link " + std::to_string(p.link) + " repeats");
    }
  }
  const auto frames = forward_kinematics(chain, q);
  std::vector<ContactPoint> contacts;
  for (const auto& p : particles) {
    const SurfacePoint sp = particle_to_world(frames, surfaces, p);
    contacts.push_back({p.link, sp.point, sp.normal});
  }
  return assemble_contact_system(chain, frames, contacts, mu);
}

ForceSolution solve_force_qp(const ContactSystem& system, const VecX& w_hat, int max_iterations) {
  if (system.q.cols() != w_hat.size()) {
    throw InputError("measurement length " + std::to_string(w_hat.size()) + " does not match Q (" +
                     std::to_string(system.q.cols()) + " columns)");
  }
  const NnlsResult r = nnls(system.q.transpose(), w_hat, max_iterations);
  ForceSolution sol;
  sol.weights = r.x;
  sol.residual_sq = r.objective;
  sol.iterations = r.iterations;
  for (std::size_t i = 0; i < system.bases.size(); ++i) {
    sol.forces.push_back(system.bases[i].matrix() * r.x.segment<4>(static_cast<Eigen::Index>(4 * i)));
  }
  return sol;
}

VecX contact_measurement(const ChainModel& chain, std::span<const Pose> frames,
                         std::span<const ContactPoint> contacts, std::span<const Vec3> forces) {
  if (contacts.size() != forces.size()) throw InputError("contacts and forces differ in count");
  const auto n = static_cast<Eigen::Index>(chain.dof());
  VecX w = VecX::Zero(n + 6);
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const MatX jac = point_jacobian(chain, frames, contacts[i].link, contacts[i].point);
    w.head(n) += jac.transpose() * forces[i];
    w.tail<6>() += contact_wrench_map(contacts[i].point) * forces[i];
  }
  return w;
}

}  // namespace mcpep
