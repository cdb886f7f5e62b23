// Test-only oracles, kept independent of the implementation paths they check.
#pragma once

#include <limits>
#include <vector>

#include "ddr/discrete.hpp"

namespace test_oracle {

// Exhaustive minimization of the CRF energy over all n_labels^n_points hard
// labelings. Only feasible on tiny grids (the icosahedron test bed).
inline std::vector<int> brute_force_min_labeling(const ddr::KernelTables& tables,
                                                 const std::vector<double>& unary_logp,
                                                 const std::vector<double>& mu, double omega,
                                                 double* best_energy_out) {
  const std::size_t n = tables.n_points;
  const std::size_t nl = tables.n_labels;
  std::vector<int> current(n, 0), best(n, 0);
  double best_energy = std::numeric_limits<double>::infinity();
  while (true) {
    const double e = ddr::crf_energy(current, unary_logp, tables, mu, omega);
    if (e < best_energy) {
      best_energy = e;
      best = current;
    }
    std::size_t k = 0;
    while (k < n && ++current[k] == int(nl)) {
      current[k] = 0;
      ++k;
    }
    if (k == n) break;
  }
  if (best_energy_out) *best_energy_out = best_energy;
  return best;
}

}  // namespace test_oracle
