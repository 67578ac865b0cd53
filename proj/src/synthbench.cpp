#include "eecc/synthbench.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace eecc {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr TimeUs kSliceUs = 1000;

}  // namespace

std::vector<Segment> star_polygon(const Vec2& center, double outer, double inner, int points,
                                  double phase) {
  std::vector<Vec2> ring;
  ring.reserve(static_cast<std::size_t>(2 * points));
  for (int k = 0; k < 2 * points; ++k) {
    const double r = k % 2 == 0 ? outer : inner;
    const double a = phase + k * std::numbers::pi / points;
    ring.push_back(center + r * Vec2(std::cos(a), std::sin(a)));
  }
  std::vector<Segment> out;
  out.reserve(ring.size());
  for (std::size_t k = 0; k < ring.size(); ++k) out.push_back({ring[k], ring[(k + 1) % ring.size()]});
  return out;
}

void SyntheticScene::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
  if (edges.empty()) fail("scene has no edges");
  if (!(edge_rate >= 0.0) || !(noise_rate >= 0.0)) fail("event rates must be non-negative");
  if (!(jitter_px >= 0.0)) fail("jitter must be non-negative");
  if (width <= 0 || height <= 0) fail("sensor size must be positive");
}

SyntheticScene star_grid_scene(const StarGrid& grid, const Vec2& pivot, int width, int height) {
  if (!(grid.spacing > 0.0) || !(grid.outer > grid.inner) || !(grid.inner > 0.0) ||
      grid.points < 3 || !(grid.extent >= 0.0)) {
    throw Error(ErrorKind::Config, "invalid star grid");
  }
  SyntheticScene scene;
  scene.pivot = pivot;
  scene.width = width;
  scene.height = height;
  const int k = static_cast<int>(std::floor(grid.extent / grid.spacing));
  for (int j = -k; j <= k; ++j) {
    for (int i = -k; i <= k; ++i) {
      const Vec2 c(i * grid.spacing, j * grid.spacing);
      scene.star_centers.push_back(c);
      for (const Segment& s : star_polygon(c, grid.outer, grid.inner, grid.points, -std::numbers::pi / 2)) {
        scene.edges.push_back(s);
      }
    }
  }
  return scene;
}

MotionProfile::MotionProfile(std::vector<MotionSegment> segments) : segments_(std::move(segments)) {}

double MotionProfile::duration() const {
  double d = 0.0;
  for (const MotionSegment& s : segments_) d += s.duration_s;
  return d;
}

Pose MotionProfile::at(double t) const {
  Pose p;
  double left = std::max(t, 0.0);
  for (const MotionSegment& s : segments_) {
    const double dt = std::min(left, s.duration_s);
    p.d += dt * Vec2(s.vx, s.vy);
    p.phi += dt * s.omega_deg * kDegToRad;
    p.scale *= std::exp(dt * s.zoom);
    left -= dt;
    if (left <= 0.0) break;
  }
  return p;
}

void MotionProfile::validate() const {
  if (segments_.empty()) throw Error(ErrorKind::Config, "motion profile has no segments");
  for (const MotionSegment& s : segments_) {
    if (!std::isfinite(s.duration_s) || s.duration_s < 0.0 || !std::isfinite(s.vx) ||
        !std::isfinite(s.vy) || !std::isfinite(s.omega_deg) || !std::isfinite(s.zoom)) {
      throw Error(ErrorKind::Config, "motion segment must be finite with non-negative duration");
    }
  }
  if (!(duration() > 0.0)) throw Error(ErrorKind::Config, "motion profile has zero duration");
}

Vec2 pattern_to_image(const SyntheticScene& scene, const Pose& pose, const Vec2& p) {
  return scene.pivot + pose.d + pose.scale * (rotation_matrix(pose.phi) * p);
}

Vec2 image_to_pattern(const SyntheticScene& scene, const Pose& pose, const Vec2& x) {
  return rotation_matrix(pose.phi).transpose() * (x - scene.pivot - pose.d) / pose.scale;
}

std::vector<Event> generate_synthetic_events(const SyntheticScene& scene,
                                             const MotionProfile& motion, std::uint64_t rng_seed) {
  scene.validate();
  motion.validate();
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, scene.jitter_px);
  std::bernoulli_distribution coin(0.5);

  const TimeUs end_us = seconds_to_us(motion.duration());
  const double margin = 3.0 * scene.jitter_px + 2.0;
  std::vector<Event> out;
  std::vector<Event> slice;
  std::vector<std::size_t> visible;
  std::vector<double> cumulative;

  for (TimeUs t0 = 0; t0 < end_us; t0 += kSliceUs) {
    const TimeUs t1 = std::min(t0 + kSliceUs, end_us);
    const double dt = us_to_seconds(t1 - t0);
    const Pose mid = motion.at(us_to_seconds(t0 + (t1 - t0) / 2));

    // Edges that can reach the sensor during this slice.
    visible.clear();
    cumulative.clear();
    double total = 0.0;
    for (std::size_t k = 0; k < scene.edges.size(); ++k) {
      const Vec2 a = pattern_to_image(scene, mid, scene.edges[k].a);
      const Vec2 b = pattern_to_image(scene, mid, scene.edges[k].b);
      if (std::max(a.x(), b.x()) < -margin || std::min(a.x(), b.x()) > scene.width + margin ||
          std::max(a.y(), b.y()) < -margin || std::min(a.y(), b.y()) > scene.height + margin) {
        continue;
      }
      visible.push_back(k);
      total += (b - a).norm();
      cumulative.push_back(total);
    }

    slice.clear();
    if (total > 0.0 && scene.edge_rate > 0.0) {
      std::poisson_distribution<long long> count(scene.edge_rate * total * dt);
      const long long n = count(rng);
      for (long long i = 0; i < n; ++i) {
        const TimeUs t = t0 + std::min<TimeUs>(static_cast<TimeUs>(unit(rng) * (t1 - t0)), t1 - t0 - 1);
        const double pick = unit(rng) * total;
        const std::size_t j = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
        const Segment& seg = scene.edges[visible[std::min(j, visible.size() - 1)]];
        const Vec2 p = seg.a + unit(rng) * (seg.b - seg.a);
        Vec2 x = pattern_to_image(scene, motion.at(us_to_seconds(t)), p);
        x += Vec2(jitter(rng), jitter(rng));
        const auto pol = static_cast<std::int8_t>(coin(rng) ? 1 : -1);
        if (x.x() >= 0.0 && x.y() >= 0.0 && x.x() < scene.width && x.y() < scene.height) {
          slice.push_back({t, x.x(), x.y(), pol});
        }
      }
    }
    if (scene.noise_rate > 0.0) {
      std::poisson_distribution<long long> count(scene.noise_rate * dt);
      const long long n = count(rng);
      for (long long i = 0; i < n; ++i) {
        const TimeUs t = t0 + std::min<TimeUs>(static_cast<TimeUs>(unit(rng) * (t1 - t0)), t1 - t0 - 1);
        const double x = unit(rng) * scene.width;
        const double y = unit(rng) * scene.height;
        slice.push_back({t, x, y, static_cast<std::int8_t>(coin(rng) ? 1 : -1)});
      }
    }
    std::stable_sort(slice.begin(), slice.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    out.insert(out.end(), slice.begin(), slice.end());
  }
  return out;
}

FeatureState ground_truth_state(const SyntheticScene& scene, const MotionProfile& motion,
                                const SeedSpec& seed, double t) {
  const Pose p0 = motion.at(seed.t);
  const Vec2 anchor = image_to_pattern(scene, p0, Vec2(seed.x, seed.y));
  const Pose p = motion.at(t);
  const Vec2 x = pattern_to_image(scene, p, anchor);
  return {x.x(), x.y(), wrap_angle(p.phi - p0.phi)};
}

TrackRecord ground_truth_track(const SyntheticScene& scene, const MotionProfile& motion,
                               int feature_id, const SeedSpec& seed, double period_s) {
  if (!(period_s > 0.0)) throw Error(ErrorKind::Config, "ground-truth period must be positive");
  TrackRecord gt;
  gt.feature_id = feature_id;
  gt.reason = TerminationReason::EndOfStream;
  const TimeUs start = seed.t_us();
  const TimeUs end = seconds_to_us(motion.duration());
  const TimeUs step = std::max<TimeUs>(1, seconds_to_us(period_s));
  for (TimeUs t = start; t <= end; t += step) {
    gt.states.push_back({t, ground_truth_state(scene, motion, seed, us_to_seconds(t))});
  }
  if (gt.states.empty() || gt.states.back().t != end) {
    gt.states.push_back({end, ground_truth_state(scene, motion, seed, us_to_seconds(end))});
  }
  return gt;
}

std::vector<SeedSpec> auto_seeds(const SyntheticScene& scene, const MotionProfile& motion,
                                 double t, double margin, std::size_t max_seeds) {
  std::vector<Vec2> centers = scene.star_centers;
  std::stable_sort(centers.begin(), centers.end(), [](const Vec2& a, const Vec2& b) {
    return a.y() != b.y() ? a.y() < b.y() : a.x() < b.x();
  });
  const double end = motion.duration();
  std::vector<SeedSpec> out;
  for (const Vec2& c : centers) {
    if (out.size() >= max_seeds) break;
    bool keeps_margin = true;
    for (double s = t; keeps_margin; s = std::min(s + 0.01, end)) {
      const Vec2 x = pattern_to_image(scene, motion.at(s), c);
      keeps_margin = x.x() >= margin && x.y() >= margin && x.x() <= scene.width - 1 - margin &&
                     x.y() <= scene.height - 1 - margin;
      if (s >= end) break;
    }
    if (!keeps_margin) continue;
    const Vec2 x = pattern_to_image(scene, motion.at(t), c);
    out.push_back({t, x.x(), x.y(), "star" + std::to_string(out.size())});
  }
  return out;
}

EvalEntry trajectory_error(const TrackRecord& track, const TrackRecord& gt, double outlier_px) {
  EvalEntry e;
  e.feature_id = track.feature_id;
  e.reason = track.reason;
  if (track.states.empty() || gt.states.empty()) {
    throw Error(ErrorKind::ContractViolation,
                "feature " + std::to_string(track.feature_id) + ": empty track or ground truth");
  }
  const TimeUs origin = track.states.front().t;
  const auto& g = gt.states;
  double sum_pos = 0.0, sum_th = 0.0;
  for (const TrackSample& s : track.states) {
    if (s.t < g.front().t || s.t > g.back().t) continue;
    auto hi = std::lower_bound(g.begin(), g.end(), s.t,
                               [](const TrackSample& a, TimeUs t) { return a.t < t; });
    FeatureState ref = hi->state;
    if (hi->t != s.t) {
      const TrackSample& lo = *(hi - 1);
      const double a = static_cast<double>(s.t - lo.t) / static_cast<double>(hi->t - lo.t);
      ref.x = lo.state.x + a * (hi->state.x - lo.state.x);
      ref.y = lo.state.y + a * (hi->state.y - lo.state.y);
      ref.theta = wrap_angle(lo.state.theta + a * wrap_angle(hi->state.theta - lo.state.theta));
    }
    const double err = std::hypot(s.state.x - ref.x, s.state.y - ref.y);
    const double th = std::abs(wrap_angle(s.state.theta - ref.theta));
    e.times_s.push_back(us_to_seconds(s.t - origin));
    e.errors_px.push_back(err);
    sum_pos += err;
    sum_th += th;
    e.max_err_px = std::max(e.max_err_px, err);
    e.max_theta_err_rad = std::max(e.max_theta_err_rad, th);
  }
  if (e.errors_px.empty()) {
    throw Error(ErrorKind::ContractViolation,
                "feature " + std::to_string(track.feature_id) + ": track and ground truth do not overlap in time");
  }
  const double n = static_cast<double>(e.errors_px.size());
  e.mean_err_px = sum_pos / n;
  e.mean_theta_err_rad = sum_th / n;
  e.track_age_s = e.times_s.back();
  e.outlier = e.max_err_px > outlier_px;
  e.age_s = lost_at(e, outlier_px).value_or(e.track_age_s);
  return e;
}

std::optional<double> lost_at(const EvalEntry& entry, double threshold) {
  for (std::size_t i = 0; i < entry.errors_px.size(); ++i) {
    if (entry.errors_px[i] > threshold) return entry.times_s[i];
  }
  if (entry.reason != TerminationReason::EndOfStream && entry.reason != TerminationReason::None) {
    return entry.track_age_s;
  }
  return std::nullopt;
}

std::vector<CdfSample> feature_age_cdf(const std::vector<EvalEntry>& entries, double threshold,
                                       double horizon_s, int bins) {
  if (entries.empty()) throw Error(ErrorKind::ContractViolation, "no features to evaluate");
  if (!(threshold > 0.0) || !(horizon_s > 0.0) || bins < 1) {
    throw Error(ErrorKind::ContractViolation, "threshold, horizon and bin count must be positive");
  }
  std::vector<double> lost;
  for (const EvalEntry& e : entries) {
    if (const auto t = lost_at(e, threshold)) lost.push_back(*t);
  }
  std::sort(lost.begin(), lost.end());
  std::vector<CdfSample> out;
  out.reserve(static_cast<std::size_t>(bins) + 1);
  const double n = static_cast<double>(entries.size());
  for (int k = 0; k <= bins; ++k) {
    const double t = horizon_s * k / bins;
    const auto count = std::upper_bound(lost.begin(), lost.end(), t) - lost.begin();
    out.push_back({t, static_cast<double>(count) / n});
  }
  return out;
}

void write_metrics(std::ostream& out, const std::vector<EvalEntry>& entries) {
  out << "feature_id,age_s,mean_err_px,outlier\n";
  char buf[128];
  for (const EvalEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d\n", e.feature_id, e.age_s, e.mean_err_px,
                  e.outlier ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::Io, "metrics sink failed");
}

void write_cdf(std::ostream& out, const std::vector<CdfSample>& cdf) {
  out << "t,cdf\n";
  char buf[96];
  for (const CdfSample& s : cdf) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", s.t, s.cdf);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::Io, "cdf sink failed");
}

std::vector<SeedSpec> Scenario::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  return auto_seeds(scene, motion, seed_time_s, seed_margin_px, max_seeds);
}

Scenario default_scenario() {
  Scenario sc;
  sc.scene = star_grid_scene(sc.grid, {120.0, 90.0}, 240, 180);
  sc.scene.noise_rate = 500.0;
  sc.motion = MotionProfile({{0.5, 20.0, 10.0, 10.0, 0.0}, {0.5, -15.0, 5.0, -10.0, 0.0}});
  return sc;
}

Scenario parse_scenario(std::istream& in) {
  Scenario sc;
  Vec2 pivot(120.0, 90.0);
  int width = 240, height = 180;
  double edge_rate = 600.0, noise_rate = 0.0, jitter = 0.3;
  std::vector<MotionSegment> segments;
  for (const KeyValue& kv : parse_key_values(in)) {
    const std::string& k = kv.key;
    if (k == "width") width = parse_int(kv);
    else if (k == "height") height = parse_int(kv);
    else if (k == "pivot_x") pivot.x() = parse_double(kv);
    else if (k == "pivot_y") pivot.y() = parse_double(kv);
    else if (k == "edge_rate") edge_rate = parse_double(kv);
    else if (k == "noise_rate") noise_rate = parse_double(kv);
    else if (k == "jitter_px") jitter = parse_double(kv);
    else if (k == "star_spacing") sc.grid.spacing = parse_double(kv);
    else if (k == "star_outer") sc.grid.outer = parse_double(kv);
    else if (k == "star_inner") sc.grid.inner = parse_double(kv);
    else if (k == "star_points") sc.grid.points = parse_int(kv);
    else if (k == "star_extent") sc.grid.extent = parse_double(kv);
    else if (k == "seed_time") sc.seed_time_s = parse_double(kv);
    else if (k == "max_seeds") sc.max_seeds = static_cast<std::size_t>(std::max(0, parse_int(kv)));
    else if (k == "seed_margin") sc.seed_margin_px = parse_double(kv);
    else if (k == "gt_period") sc.gt_period_s = parse_double(kv);
    else if (k == "rng_seed") sc.rng_seed = static_cast<std::uint64_t>(parse_double(kv));
    else if (k == "segment") {
      std::istringstream ss(kv.value);
      MotionSegment m;
      if (!(ss >> m.duration_s >> m.vx >> m.vy >> m.omega_deg)) {
        throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) +
                                           ": segment expects 'duration vx vy omega_deg [zoom]'");
      }
      if (!(ss >> m.zoom)) m.zoom = 0.0;
      segments.push_back(m);
    } else if (k == "seed") {
      std::istringstream ss(kv.value);
      SeedSpec s;
      if (!(ss >> s.t >> s.x >> s.y)) {
        throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": seed expects 't x y [label]'");
      }
      ss >> s.label;
      sc.seeds.push_back(s);
    } else {
      throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": unknown scenario key '" + k + "'");
    }
  }
  if (segments.empty()) throw Error(ErrorKind::Config, "scenario defines no motion segment");
  sc.scene = star_grid_scene(sc.grid, pivot, width, height);
  sc.scene.edge_rate = edge_rate;
  sc.scene.noise_rate = noise_rate;
  sc.scene.jitter_px = jitter;
  sc.motion = MotionProfile(std::move(segments));
  sc.scene.validate();
  sc.motion.validate();
  for (const SeedSpec& s : sc.seeds) {
    if (s.x < 0.0 || s.y < 0.0 || s.x >= width || s.y >= height) {
      throw Error(ErrorKind::Config, "scenario seed outside the sensor");
    }
  }
  return sc;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open scenario '" + path.string() + "'");
  return parse_scenario(in);
}

void write_events(std::ostream& out, const std::vector<Event>& events) {
  char buf[96];
  for (const Event& e : events) {
    const int n = std::snprintf(buf, sizeof buf, "%" PRId64 ".%06" PRId64 " %.3f %.3f %d\n",
                                e.t / 1'000'000, e.t % 1'000'000, e.x, e.y, e.polarity > 0 ? 1 : 0);
    out.write(buf, n);
  }
  if (!out) throw Error(ErrorKind::Io, "event sink failed");
}

void write_seeds(std::ostream& out, const std::vector<SeedSpec>& seeds) {
  char buf[160];
  for (const SeedSpec& s : seeds) {
    std::snprintf(buf, sizeof buf, "%.6f %.3f %.3f", s.t, s.x, s.y);
    out << buf;
    if (!s.label.empty()) out << ' ' << s.label;
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "seed sink failed");
}

}  // namespace eecc
