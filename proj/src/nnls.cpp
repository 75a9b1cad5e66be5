#include "mcpep/nnls.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace mcpep {

namespace {

// Least squares restricted to the passive columns.
VecX solve_passive(const MatX& a, const VecX& b, const std::vector<Eigen::Index>& passive) {
  MatX sub(a.rows(), static_cast<Eigen::Index>(passive.size()));
  for (std::size_t i = 0; i < passive.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = a.col(passive[i]);
  return sub.colPivHouseholderQr().solve(b);
}

}  // namespace

NnlsResult nnls(const MatX& a, const VecX& b, int max_iterations) {
  if (a.rows() != b.size()) throw InputError("nnls: A and b have different row counts");
  const Eigen::Index n = a.cols();
  if (max_iterations <= 0) max_iterations = static_cast<int>(3 * n);

  NnlsResult res;
  res.x = VecX::Zero(n);
  std::vector<bool> in_passive(static_cast<std::size_t>(n), false);
  std::vector<Eigen::Index> passive;

  const double tol = 10.0 * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff()) *
                     static_cast<double>(std::max<Eigen::Index>(n, a.rows()));

  VecX w = a.transpose() * (b - a * res.x);
  int outer = 0;
  while (true) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!in_passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    }
    if (best < 0) break;
    if (++outer > max_iterations) {
      res.iterations = outer - 1;
      throw SolverError("nnls: iteration cap of " + std::to_string(max_iterations) + " exceeded", res.x);
    }
    in_passive[static_cast<std::size_t>(best)] = true;
    passive.push_back(best);

    // Inner loop: step towards the unconstrained passive solution, dropping
    // coordinates that hit the bound.
    for (int inner = 0; inner <= n; ++inner) {
      const VecX z = solve_passive(a, b, passive);
      bool feasible = true;
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (z[i] <= 0.0) {
          feasible = false;
          break;
        }
      }
      if (feasible) {
        res.x.setZero();
        for (std::size_t i = 0; i < passive.size(); ++i) res.x[passive[i]] = z[static_cast<Eigen::Index>(i)];
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      Eigen::Index blocking = -1;
      for (std::size_t i = 0; i < passive.size(); ++i) {
        const double zi = z[static_cast<Eigen::Index>(i)];
        if (zi <= 0.0) {
          const double xi = res.x[passive[i]];
          const double step = xi > 0.0 ? xi / (xi - zi) : 0.0;
          if (blocking < 0 || step < alpha) {
            alpha = step;
            blocking = passive[i];
          }
        }
      }
      for (std::size_t i = 0; i < passive.size(); ++i) {
        const Eigen::Index j = passive[i];
        res.x[j] += alpha * (z[static_cast<Eigen::Index>(i)] - res.x[j]);
      }
      res.x[blocking] = 0.0;
      std::vector<Eigen::Index> kept;
      for (auto j : passive) {
        if (res.x[j] > 0.0) {
          kept.push_back(j);
        } else {
          res.x[j] = 0.0;
          in_passive[static_cast<std::size_t>(j)] = false;
        }
      }
      passive = std::move(kept);
      if (passive.empty()) break;
    }
    w = a.transpose() * (b - a * res.x);
  }
  res.iterations = outer;
  res.objective = (a * res.x - b).squaredNorm();
  return res;
}

}  // namespace mcpep
