#pragma once

#include "mcpep/common.hpp"

namespace mcpep {

struct NnlsResult {
  VecX x;
  /// ||A x - b||^2 evaluated directly from the residual vector.
  double objective = 0.0;
  int iterations = 0;
};

/// Lawson-Hanson active-set solver for min ||A x - b||^2 s.t. x >= 0.
/// `max_iterations` bounds the outer (constraint-releasing) loop; 0 means
/// 3 * cols. Throws SolverError with the best feasible iterate when exceeded.
NnlsResult nnls(const MatX& a, const VecX& b, int max_iterations = 0);

}  // namespace mcpep
