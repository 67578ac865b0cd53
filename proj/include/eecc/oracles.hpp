#pragma once

// Randomised verification suites shared by the selftest command and the
// test binaries. Each check recomputes its reference independently of the
// code under test (finite differences, brute-force grid search, naive sums).

#include <cstdint>
#include <string>

namespace eecc {

struct SplatCheck {
  std::int64_t splats = 0;
  double max_mass_error = 0.0;  // |sum of weights - 1| and |grid mass delta - 1|
  double min_weight = 0.0;
};

/// Random splats whose 2x2 neighbourhood lies inside the window.
SplatCheck check_splat_conservation(std::uint64_t seed, std::int64_t splats = 100000,
                                    int radius = 15);

struct JacobianCheck {
  int instances = 0;
  std::int64_t rows = 0;
  double max_rel_error_global = 0.0;  // image-frame rows vs finite differences
  double max_rel_error_local = 0.0;   // feature-frame rows vs finite differences
};

/// Templates drawn from random positive bilinear fields a + bx + cy + dxy, for
/// which the interpolated central-difference gradient is the exact derivative
/// of the interpolant away from the border.
JacobianCheck check_jacobian_fd(std::uint64_t seed, int instances = 1000, int radius = 7);

struct OptimalityCheck {
  int instances = 0;
  double max_excess = 0.0;        // max over instances of f(delta*) - min over grid
  double perfect_alignment = 0.0; // |delta*| when the model equals the template
};

/// Random instances with <t, m_hat> - p_m^T C^-1 p_t > 0; the closed-form
/// step is compared with exhaustive search over a 21^3 grid around zero and
/// the neighbours of delta* on a 21^3 grid centred on it.
OptimalityCheck check_step_optimality(std::uint64_t seed, int instances = 50, int radius = 7,
                            int grid = 21);

struct DriftCheck {
  std::int64_t events = 0;
  double max_rel_error = 0.0;  // per event: cached terms vs sums over stored J, t, scaled by the summands
  double final_drift = 0.0;    // cached terms vs a from-scratch template rebuild
  int max_gradient_pixels = 0;
};

DriftCheck check_incremental_drift(std::uint64_t seed, std::int64_t events = 10000,
                                   int radius = 15);

struct PathCheck {
  std::int64_t steps = 0;
  double max_state_diff = 0.0;  // max per-component |incremental - full|
};

/// Runs the tracker with both solver paths over one synthetic stream until
/// `steps` state updates happened.
PathCheck check_solver_paths(std::uint64_t seed, std::int64_t steps = 10000);

}  // namespace eecc
