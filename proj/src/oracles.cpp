#include "eecc/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/LU>

#include "eecc/ecc_solver.hpp"
#include "eecc/synthbench.hpp"
#include "eecc/tracker.hpp"

namespace eecc {

namespace {

// Reference normal terms plus the magnitude of their summands. p_t = J^T t
// largely cancels for near-symmetric templates, so errors are measured
// against sum_i |J_i||t_i| (and sum_i |J_i|^2 for C), the scale at which
// rounding acts, rather than against the possibly tiny result.
struct NaiveTerms {
  NormalTerms terms;
  double c_scale = 0.0;
  double p_scale = 0.0;
};

// Sums over stored rows in extended precision, independent of the cache code.
NaiveTerms naive_terms(const JacobianMatrix& J, std::span<const double> t) {
  long double C[3][3] = {};
  long double p[3] = {};
  long double tt = 0.0L, cs = 0.0L, ps = 0.0L;
  for (Eigen::Index i = 0; i < J.rows(); ++i) {
    const long double ti = t[static_cast<std::size_t>(i)];
    long double row_sq = 0.0L;
    for (int a = 0; a < 3; ++a) {
      p[a] += J(i, a) * ti;
      row_sq += static_cast<long double>(J(i, a)) * J(i, a);
      for (int b = 0; b < 3; ++b) C[a][b] += static_cast<long double>(J(i, a)) * J(i, b);
    }
    tt += ti * ti;
    cs += row_sq;
    ps += std::sqrt(row_sq) * std::abs(ti);
  }
  NaiveTerms out;
  for (int a = 0; a < 3; ++a) {
    out.terms.p_t[a] = static_cast<double>(p[a]);
    for (int b = 0; b < 3; ++b) out.terms.C(a, b) = static_cast<double>(C[a][b]);
  }
  out.terms.t_norm_sq = static_cast<double>(tt);
  out.c_scale = static_cast<double>(cs);
  out.p_scale = static_cast<double>(ps);
  return out;
}

double terms_rel_diff(const NormalTerms& a, const NaiveTerms& ref) {
  const NormalTerms& b = ref.terms;
  const double tiny = 1e-300;
  return std::max({(a.C - b.C).norm() / std::max(ref.c_scale, tiny),
                   (a.p_t - b.p_t).norm() / std::max(ref.p_scale, tiny),
                   std::abs(a.t_norm_sq - b.t_norm_sq) / std::max(std::abs(b.t_norm_sq), tiny)});
}

struct BilinearField {
  double a, b, c, d;
  double operator()(double x, double y) const { return a + b * x + c * y + d * x * y; }
};

BilinearField random_field(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base(2.0, 3.0), lin(-0.1, 0.1), cross(-0.01, 0.01);
  return {base(rng), lin(rng), lin(rng), cross(rng)};
}

DensityMap field_template(const BilinearField& f, int radius) {
  DensityMap m(radius);
  for (int oy = -radius; oy <= radius; ++oy) {
    for (int ox = -radius; ox <= radius; ++ox) m.at(ox, oy) = f(ox, oy);
  }
  return m;
}

double row_rel_error(const Vec3& fd, const Vec3& an) {
  return (fd - an).cwiseAbs().maxCoeff() / std::max(an.cwiseAbs().maxCoeff(), 1e-3);
}

}  // namespace

SplatCheck check_splat_conservation(std::uint64_t seed, std::int64_t splats, int radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-radius, radius - 1e-9);
  DensityMap map(radius);
  SplatCheck out;
  out.min_weight = std::numeric_limits<double>::infinity();
  double mass = 0.0;
  for (std::int64_t k = 0; k < splats; ++k) {
    const Vec2 x(pos(rng), pos(rng));
    const SplatFootprint fp = map.splat(x);
    double w = 0.0;
    for (int j = 0; j < fp.count; ++j) {
      w += fp.weight[static_cast<std::size_t>(j)];
      out.min_weight = std::min(out.min_weight, fp.weight[static_cast<std::size_t>(j)]);
    }
    out.max_mass_error = std::max(out.max_mass_error, std::abs(w - 1.0));
    mass += 1.0;
    ++out.splats;
  }
  // Whole-grid mass after all splats, relative to the count.
  out.max_mass_error = std::max(out.max_mass_error, std::abs(map.sum() - mass) / mass);
  return out;
}

JacobianCheck check_jacobian_fd(std::uint64_t seed, int instances, int radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double h = 1e-5;
  const double safe = radius - 1.5;  // interpolated gradients exact inside this box
  JacobianCheck out;
  for (int inst = 0; inst < instances; ++inst) {
    const BilinearField field = random_field(rng);
    const DensityMap tmpl = field_template(field, radius);

    // Image-frame rows at the pixels of a model window anchored at s_model,
    // evaluated at a nearby state s.
    const FeatureState s_model{100.0 + 5.0 * unit(rng), 80.0 + 5.0 * unit(rng), 3.0 * unit(rng)};
    const FeatureState s{s_model.x + 0.7 * unit(rng), s_model.y + 0.7 * unit(rng),
                         s_model.theta + 0.1 * unit(rng)};
    EventBuffer buffer(193);
    for (int k = 0; k < 193; ++k) {
      const Vec2 o(radius * unit(rng), radius * unit(rng));
      const Vec2 e = warp_from_template(o, s_model);
      buffer.push({k, e.x(), e.y(), 1});
    }
    ModelWindow model(radius);
    model.rebuild(buffer, s_model);
    const TemplateGradient grad = template_gradient(tmpl);
    const JacobianMatrix J = build_jacobian(grad, s, model);
    for (int i : model.active()) {
      const Vec2 n = model.pixel_position(i);
      const Vec2 xp = warp_to_template(n, s);
      if (std::abs(xp.x()) > safe || std::abs(xp.y()) > safe) continue;
      Vec3 fd;
      for (int c = 0; c < 3; ++c) {
        FeatureState sp = s, sm = s;
        double* up = c == 0 ? &sp.x : c == 1 ? &sp.y : &sp.theta;
        double* dn = c == 0 ? &sm.x : c == 1 ? &sm.y : &sm.theta;
        *up += h;
        *dn -= h;
        fd[c] = (sample_template(tmpl, warp_to_template(n, sp)) -
                 sample_template(tmpl, warp_to_template(n, sm))) / (2.0 * h);
      }
      out.max_rel_error_global =
          std::max(out.max_rel_error_global, row_rel_error(fd, J.row(i).transpose()));
      ++out.rows;
    }

    // Feature-frame rows of the tracker cache: increments (dx', dy', dtheta)
    // move a lattice offset o to R^T(dtheta)(o - dx').
    const EccCache cache(tmpl);
    const JacobianMatrix& L = cache.jacobian();
    for (int oy = -radius + 1; oy <= radius - 1; ++oy) {
      for (int ox = -radius + 1; ox <= radius - 1; ++ox) {
        const Vec2 o(ox, oy);
        auto t_at = [&](const Vec3& d) {
          const Vec2 xp = rotation_matrix(d[2]).transpose() * (o - Vec2(d[0], d[1]));
          return sample_template(tmpl, xp);
        };
        Vec3 fd;
        for (int c = 0; c < 3; ++c) {
          Vec3 e = Vec3::Zero();
          e[c] = h;
          fd[c] = (t_at(e) - t_at(-e)) / (2.0 * h);
        }
        const int i = tmpl.index(ox, oy);
        out.max_rel_error_local = std::max(out.max_rel_error_local, row_rel_error(fd, L.row(i).transpose()));
        ++out.rows;
      }
    }
    ++out.instances;
  }
  return out;
}

OptimalityCheck check_step_optimality(std::uint64_t seed, int instances, int radius, int grid) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> tdist(1.0, 2.0), unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int side = 2 * radius + 1;
  const int rows = side * side;
  const Vec3 half(0.5, 0.5, 0.05);  // grid half-widths: px, px, rad
  OptimalityCheck out;
  out.max_excess = -std::numeric_limits<double>::infinity();

  // skip_center leaves out the grid's own centre, so a grid centred on
  // delta* compares it against its neighbours only.
  auto grid_min = [&](const JacobianMatrix& J, const std::vector<double>& t,
                      const std::vector<double>& m, const Vec3& center, bool skip_center) {
    double best = std::numeric_limits<double>::infinity();
    const int mid = (grid - 1) / 2;
    for (int a = 0; a < grid; ++a) {
      for (int b = 0; b < grid; ++b) {
        for (int c = 0; c < grid; ++c) {
          if (skip_center && a == mid && b == mid && c == mid) continue;
          const Vec3 g(-1.0 + 2.0 * a / (grid - 1), -1.0 + 2.0 * b / (grid - 1),
                       -1.0 + 2.0 * c / (grid - 1));
          best = std::min(best, linearized_cost(J, t, m, center + g.cwiseProduct(half)));
        }
      }
    }
    return best;
  };

  while (out.instances < instances) {
    JacobianMatrix J(rows, 3);
    std::vector<double> t(static_cast<std::size_t>(rows)), m(t.size());
    const Vec3 truth(0.4 * unit(rng), 0.4 * unit(rng), 0.04 * unit(rng));
    for (int i = 0; i < rows; ++i) {
      t[static_cast<std::size_t>(i)] = tdist(rng);
      for (int c = 0; c < 3; ++c) J(i, c) = gauss(rng);
    }
    double mm = 0.0;
    for (int i = 0; i < rows; ++i) {
      const double v = t[static_cast<std::size_t>(i)] + J.row(i).dot(truth) + 0.02 * gauss(rng);
      m[static_cast<std::size_t>(i)] = v;
      mm += v * v;
    }
    for (double& v : m) v /= std::sqrt(mm);

    // Precondition: positive lambda denominator.
    const NormalTerms terms = refresh_cache_full(J, t);
    const Vec3 Cinv_pt = terms.C.inverse() * terms.p_t;
    const Eigen::Map<const Eigen::VectorXd> tv(t.data(), rows), mv(m.data(), rows);
    const Vec3 p_m = J.transpose() * mv;
    if (!(tv.dot(mv) - p_m.dot(Cinv_pt) > 0.0)) continue;

    const StepResult step = closed_form_step(J, t, m);
    const double f_star = linearized_cost(J, t, m, step.delta);
    const double best = std::min(grid_min(J, t, m, Vec3::Zero(), false), grid_min(J, t, m, step.delta, true));
    out.max_excess = std::max(out.max_excess, f_star - best);
    ++out.instances;
  }

  // Perfect alignment: template and model built from the same events.
  EventBuffer buffer(193);
  const FeatureState s{60.0, 60.0, 0.3};
  for (int k = 0; k < 193; ++k) {
    const Vec2 e = warp_from_template(Vec2(0.8 * radius * unit(rng), 0.8 * radius * unit(rng)), s);
    buffer.push({k, e.x(), e.y(), 1});
  }
  DensityMap tmpl(radius);
  for (std::size_t k = 0; k < buffer.size(); ++k) tmpl.splat(warp_to_template(buffer[k].position(), s));
  const EccCache cache(tmpl);
  ModelWindow model(radius);
  model.rebuild(buffer, s);
  out.perfect_alignment = closed_form_step(cache.terms(), cache.project(model)).delta.norm();
  return out;
}

DriftCheck check_incremental_drift(std::uint64_t seed, std::int64_t events, int radius) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-radius - 0.5, radius + 0.5);
  std::normal_distribution<double> blob(0.0, radius / 3.0);
  DensityMap tmpl(radius);
  for (int k = 0; k < 193; ++k) tmpl.splat(Vec2(blob(rng), blob(rng)));
  EccCache cache(tmpl);
  DriftCheck out;
  for (std::int64_t k = 0; k < events; ++k) {
    // Mostly central mass with occasional border and out-of-window splats.
    const Vec2 x = k % 8 == 0 ? Vec2(pos(rng), pos(rng)) : Vec2(blob(rng), blob(rng));
    const ChangeSet changes = cache.splat_template(x);
    cache.apply_incremental(changes);
    out.max_gradient_pixels = std::max(out.max_gradient_pixels, static_cast<int>(changes.gradient().size()));
    const NaiveTerms ref = naive_terms(cache.jacobian(), cache.warped_template());
    out.max_rel_error = std::max(out.max_rel_error, terms_rel_diff(cache.terms(), ref));
    ++out.events;
  }
  EccCache fresh(cache.template_map());
  const double j_diff = (cache.jacobian() - fresh.jacobian()).norm() / fresh.jacobian().norm();
  NaiveTerms fresh_ref = naive_terms(fresh.jacobian(), fresh.warped_template());
  fresh_ref.terms = fresh.terms();
  out.final_drift = std::max(terms_rel_diff(cache.terms(), fresh_ref), j_diff);
  return out;
}

PathCheck check_solver_paths(std::uint64_t seed, std::int64_t steps) {
  StarGrid grid;
  SyntheticScene scene = star_grid_scene(grid, {120.0, 90.0}, 240, 180);
  scene.noise_rate = 2000.0;
  const MotionProfile motion({{1.0, 30.0, -10.0, 20.0, 0.0}});
  const std::vector<Event> events = generate_synthetic_events(scene, motion, seed);

  Config inc_cfg;
  Config full_cfg;
  full_cfg.mode = SolverMode::Full;
  const FeatureState seed_state{80.0, 90.0, 0.0};
  FeatureTracker inc(0, seed_state, 0, inc_cfg);
  FeatureTracker full(0, seed_state, 0, full_cfg);
  PathCheck out;
  for (const Event& e : events) {
    if (out.steps >= steps) break;
    const StepOutcome a = inc.feed(e);
    const StepOutcome b = full.feed(e);
    if (a.kind != b.kind) {
      out.max_state_diff = std::numeric_limits<double>::infinity();
      break;
    }
    if (a.kind == StepKind::Terminated) break;
    if (a.kind != StepKind::StateUpdated) continue;
    const double d = std::max({std::abs(a.state.x - b.state.x), std::abs(a.state.y - b.state.y),
                               std::abs(wrap_angle(a.state.theta - b.state.theta))});
    out.max_state_diff = std::max(out.max_state_diff, d);
    ++out.steps;
  }
  return out;
}

}  // namespace eecc
