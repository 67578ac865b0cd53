#pragma once

#include <string>

namespace eecc {

enum class SolverMode {
  Incremental,  // fold the <=12 changed rows into the cached normal terms
  Full,         // rebuild gradients, every Jacobian row and the normal terms
};

const char* to_string(SolverMode mode);
SolverMode parse_solver_mode(const std::string& text);

struct Config {
  int patch_radius = 15;         // N, window side 2N+1
  int buffer_events = 193;       // 2M+1
  double clamp_px = 1.0;         // per-event translation limit, 0 disables
  double clamp_deg = 2.0;        // per-event rotation limit, 0 disables
  double rho_floor = 0.2;
  int rho_patience = 500;        // consecutive low-correlation steps before loss
  double idle_timeout_s = 1.0;
  int refresh_every = 1000;      // full cache rebuild cadence, 0 disables
  double outlier_px = 5.0;
  int width = 240;
  int height = 180;
  SolverMode mode = SolverMode::Incremental;

  int half_buffer() const { return buffer_events / 2; }

  /// Throws Error(Config) describing the first violated invariant.
  void validate() const;
};

}  // namespace eecc
