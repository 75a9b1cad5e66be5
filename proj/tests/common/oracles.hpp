#pragma once

// Reference computations shared by the unit and acceptance tests. They are
// deliberately simple and slow, and do not reuse the library's solvers.

#include "mcpep/contact.hpp"
#include "mcpep/filter.hpp"

#include <algorithm>
#include <random>

namespace mcpep::oracle {

/// Accelerated projected gradient for min |A x - b|^2, x >= 0, with a
/// function-value restart. Returns the final iterate.
inline VecX projected_gradient_nnls(const MatX& a, const VecX& b, int iterations = 100000) {
  const MatX ata = a.transpose() * a;
  const VecX atb = a.transpose() * b;
  const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<MatX>(ata).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(lipschitz, 1e-300);
  VecX x = VecX::Zero(a.cols());
  VecX y = x;
  double t = 1.0;
  double f_prev = b.squaredNorm();
  for (int k = 0; k < iterations; ++k) {
    const VecX grad = 2.0 * (ata * y - atb);
    const VecX x_next = (y - step * grad).cwiseMax(0.0);
    const double f = (a * x_next - b).squaredNorm();
    if (f > f_prev) {
      // Restart momentum.
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    t = t_next;
    f_prev = f;
  }
  return x;
}

/// Largest violation of the KKT conditions of the NNLS problem at x:
/// zero gradient on positive coordinates, nonnegative gradient on zero ones.
inline double kkt_residual(const MatX& a, const VecX& b, const VecX& x) {
  const VecX g = 2.0 * a.transpose() * (a * x - b);
  double worst = (-x).cwiseMax(0.0).maxCoeff();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    worst = std::max(worst, x[i] > 0.0 ? std::abs(g[i]) : std::max(0.0, -g[i]));
  }
  return worst;
}

struct RandomSystem {
  ContactSystem system;
  VecX w_hat;
};

/// k contacts on distinct random links of `model` at a random configuration.
/// The measurement mixes admissible forces, pulling forces and noise so that
/// both zero and positive residuals occur.
inline RandomSystem random_system(const FilterModel& model, int k, std::mt19937_64& rng) {
  const ChainModel& chain = model.chain();
  VecX q(static_cast<Eigen::Index>(chain.dof()));
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    q[static_cast<Eigen::Index>(i)] =
        std::uniform_real_distribution<double>(chain.joint(i).lower, chain.joint(i).upper)(rng);
  }
  std::vector<int> links;
  for (int l = 0; l < static_cast<int>(chain.dof()); ++l) links.push_back(l);
  std::shuffle(links.begin(), links.end(), rng);
  std::vector<Particle> particles;
  for (int i = 0; i < k; ++i) particles.push_back(model.sampler().sample_on_link(links[static_cast<std::size_t>(i)], rng));

  RandomSystem out;
  out.system = assemble_contact_system(chain, q, model.surfaces(), particles, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  const int mode = static_cast<int>(rng() % 3);
  std::vector<Vec3> forces;
  for (int i = 0; i < k; ++i) {
    const auto& basis = out.system.bases[static_cast<std::size_t>(i)];
    if (mode == 0) {
      // Admissible: nonnegative support weights.
      forces.push_back(basis.matrix() * Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)) * 10.0);
    } else {
      forces.push_back(Vec3(g(rng), g(rng), g(rng)) * 10.0);
    }
  }
  out.w_hat = contact_measurement(chain, forward_kinematics(chain, q), out.system.contacts, forces);
  if (mode == 2) {
    for (Eigen::Index r = 0; r < out.w_hat.size(); ++r) out.w_hat[r] += g(rng);
  }
  return out;
}

}  // namespace mcpep::oracle
