#pragma once

// Synthetic event streams from a moving star-polygon pattern with exact
// ground truth, plus trajectory error and feature-age evaluation.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eecc/event_core.hpp"
#include "eecc/streams_io.hpp"
#include "eecc/tracker.hpp"

namespace eecc {

struct Segment {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();

  double length() const { return (b - a).norm(); }
};

/// Closed star outline with `points` tips at radius `outer` and notches at
/// `inner`, first tip at angle `phase`.
std::vector<Segment> star_polygon(const Vec2& center, double outer, double inner, int points,
                                  double phase = 0.0);

struct StarGrid {
  double spacing = 40.0;
  double outer = 11.0;
  double inner = 4.0;
  int points = 5;
  double extent = 360.0;  // half-size of the square the stars cover, around the pivot
};

struct SyntheticScene {
  std::vector<Segment> edges;  // pattern frame, origin at the pivot
  std::vector<Vec2> star_centers;
  Vec2 pivot{120.0, 90.0};     // image position of the pattern origin at t = 0
  double edge_rate = 600.0;    // events per pixel of edge per second
  double noise_rate = 0.0;     // background events per second over the sensor
  double jitter_px = 0.3;
  int width = 240;
  int height = 180;

  /// Throws Error(Config).
  void validate() const;
};

SyntheticScene star_grid_scene(const StarGrid& grid, const Vec2& pivot, int width, int height);

struct MotionSegment {
  double duration_s = 1.0;
  double vx = 0.0;         // px/s
  double vy = 0.0;         // px/s
  double omega_deg = 0.0;  // deg/s about the pivot
  double zoom = 0.0;       // relative scale rate (1/s); not representable by the tracker
};

struct Pose {
  Vec2 d = Vec2::Zero();  // pivot displacement
  double phi = 0.0;       // rotation (rad)
  double scale = 1.0;
};

class MotionProfile {
 public:
  MotionProfile() = default;
  explicit MotionProfile(std::vector<MotionSegment> segments);

  const std::vector<MotionSegment>& segments() const { return segments_; }
  double duration() const;

  /// Pose at time t (seconds), constant after the last segment.
  Pose at(double t) const;

  /// Throws Error(Config) for an empty, zero-length or non-finite profile.
  void validate() const;

 private:
  std::vector<MotionSegment> segments_;
};

/// Image position of a pattern-frame point.
Vec2 pattern_to_image(const SyntheticScene& scene, const Pose& pose, const Vec2& p);
Vec2 image_to_pattern(const SyntheticScene& scene, const Pose& pose, const Vec2& x);

/// Poisson events along the moving edges plus uniform background noise,
/// sorted by timestamp. Pure function of its inputs.
std::vector<Event> generate_synthetic_events(const SyntheticScene& scene,
                                             const MotionProfile& motion, std::uint64_t rng_seed);

/// Ground-truth state of the feature seeded at `seed` (image position and
/// time), sampled every `period_s` from the seed time to the end of motion.
TrackRecord ground_truth_track(const SyntheticScene& scene, const MotionProfile& motion,
                               int feature_id, const SeedSpec& seed, double period_s = 1e-3);

/// Exact ground-truth state at time t for the same seed.
FeatureState ground_truth_state(const SyntheticScene& scene, const MotionProfile& motion,
                                const SeedSpec& seed, double t);

/// Star centres that stay at least `margin` px inside the sensor over the
/// whole motion, seeded at time `t`.
std::vector<SeedSpec> auto_seeds(const SyntheticScene& scene, const MotionProfile& motion,
                                 double t, double margin, std::size_t max_seeds);

struct EvalEntry {
  int feature_id = 0;
  std::vector<double> times_s;     // track-relative time of each compared state
  std::vector<double> errors_px;   // position error at each compared state
  double mean_err_px = 0.0;
  double max_err_px = 0.0;
  double mean_theta_err_rad = 0.0;
  double max_theta_err_rad = 0.0;
  double track_age_s = 0.0;        // span of the compared states
  double age_s = 0.0;              // time before the first outlier sample
  bool outlier = false;
  TerminationReason reason = TerminationReason::None;
};

/// Compares a track against ground truth by linear interpolation of the
/// ground truth at each track time inside its range. Throws
/// Error(ContractViolation) when the time ranges do not overlap.
EvalEntry trajectory_error(const TrackRecord& track, const TrackRecord& gt,
                           double outlier_px = 5.0);

/// Track-relative time at which a feature counts as lost: its first sample
/// above `threshold`, or the end of a track cut short by anything but the
/// end of the stream. nullopt when it survives.
std::optional<double> lost_at(const EvalEntry& entry, double threshold);

struct CdfSample {
  double t = 0.0;
  double cdf = 0.0;
};

/// Fraction of features lost by age t, on `bins + 1` uniform samples over
/// [0, horizon]. Throws Error(ContractViolation) on empty input.
std::vector<CdfSample> feature_age_cdf(const std::vector<EvalEntry>& entries, double threshold,
                                       double horizon_s, int bins = 100);

void write_metrics(std::ostream& out, const std::vector<EvalEntry>& entries);
void write_cdf(std::ostream& out, const std::vector<CdfSample>& cdf);

/// Generator inputs as read from a scenario file.
struct Scenario {
  SyntheticScene scene;
  StarGrid grid;
  MotionProfile motion;
  std::vector<SeedSpec> seeds;  // explicit seeds; auto seeds when empty
  double seed_time_s = 0.0;
  std::size_t max_seeds = 10;
  double seed_margin_px = 17.0;
  double gt_period_s = 1e-3;
  std::uint64_t rng_seed = 1;

  /// Explicit seeds, or auto seeds when none were given.
  std::vector<SeedSpec> resolved_seeds() const;
};

/// 1 s of combined translation and rotation over the default star grid.
Scenario default_scenario();

/// Keys: width, height, pivot_x, pivot_y, edge_rate, noise_rate, jitter_px,
/// star_spacing, star_outer, star_inner, star_points, seed_time, max_seeds,
/// seed_margin, gt_period, rng_seed, and the repeatable
/// "segment = duration vx vy omega_deg [zoom]" and "seed = t x y [label]".
Scenario parse_scenario(std::istream& in);
Scenario load_scenario_file(const std::filesystem::path& path);

/// "t x y p" text with microsecond timestamps and 3-decimal coordinates.
void write_events(std::ostream& out, const std::vector<Event>& events);
void write_seeds(std::ostream& out, const std::vector<SeedSpec>& seeds);

}  // namespace eecc
