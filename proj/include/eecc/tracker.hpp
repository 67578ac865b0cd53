#pragma once

// Per-feature event-by-event tracking: buffer fill and template
// initialisation, then one closed-form ECC step per gated event followed by
// the template update with the buffer's central event.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eecc/config.hpp"
#include "eecc/ecc_solver.hpp"
#include "eecc/event_core.hpp"

namespace eecc {

enum class TrackStatus { Initializing, Tracking, Terminated };

enum class TerminationReason {
  None,
  OutOfBounds,
  SolverDegenerate,
  DegenerateModel,
  Lost,          // correlation below the floor for too long
  Idle,          // no gated event within the idle window
  EndOfStream,
  InitStarved,
};

const char* to_string(TerminationReason reason);
TerminationReason parse_termination_reason(const std::string& text);

struct TrackSample {
  TimeUs t = 0;
  FeatureState state;
};

struct TrackRecord {
  int feature_id = 0;
  std::vector<TrackSample> states;
  TerminationReason reason = TerminationReason::None;

  double age_s() const {
    return states.empty() ? 0.0 : us_to_seconds(states.back().t - states.front().t);
  }
};

struct StateUpdate {
  FeatureState state;
  bool clamped = false;
};

/// s + delta with the translation limited to clamp_px and the rotation to
/// clamp_deg (a limit of 0 disables it); theta is wrapped.
StateUpdate apply_state_update(const FeatureState& s, const Vec3& delta, double clamp_px,
                               double clamp_deg);

enum class StepKind { Ignored, Initializing, RejectedGate, StateUpdated, Terminated };

struct StepDiagnostics {
  double lambda = 0.0;
  double rho = 0.0;
  int gradient_pixels = 0;  // |S|
  int rows = 0;
  bool clamped = false;
  double wall_us = 0.0;
};

struct StepOutcome {
  StepKind kind = StepKind::Ignored;
  Vec3 delta = Vec3::Zero();  // image-frame (dx, dy, dtheta) actually applied
  FeatureState state;
  TerminationReason reason = TerminationReason::None;
  StepDiagnostics diag;
};

struct TrackerCounters {
  std::int64_t init_accepted = 0;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t processed = 0;
  std::int64_t iterations = 0;
  std::int64_t clamped = 0;
  std::int64_t template_misses = 0;
  std::int64_t full_refreshes = 0;
  int max_gradient_pixels = 0;
};

class FeatureTracker {
 public:
  /// Throws Error(ContractViolation) if the seed lies within N pixels of the
  /// image border. Events older than `start` are ignored.
  FeatureTracker(int id, const FeatureState& seed, TimeUs start, const Config& config);

  /// Routes an event to initialisation or tracking depending on status.
  StepOutcome feed(const Event& e);

  /// One tracking step. Precondition: status() == Tracking and e is not older
  /// than the last accepted event.
  StepOutcome process_event(const Event& e);

  /// Marks a live or initialising track as ended by the stream.
  void finish();

  /// Ends the track now with `reason` (no-op once terminated).
  void terminate(TerminationReason reason);

  int id() const { return id_; }
  TrackStatus status() const { return status_; }
  TerminationReason reason() const { return record_.reason; }
  const FeatureState& state() const { return state_; }
  const TrackRecord& record() const { return record_; }
  const TrackerCounters& counters() const { return counters_; }
  const EventBuffer& buffer() const { return buffer_; }
  const Config& config() const { return config_; }
  double last_rho() const { return last_rho_; }
  int low_rho_run() const { return low_rho_run_; }
  std::optional<TimeUs> last_accepted() const { return last_accepted_; }

  /// Present once tracking has started.
  const EccCache* cache() const { return cache_ ? &*cache_ : nullptr; }
  const ModelWindow& model() const { return model_; }

 private:
  StepOutcome init_step(const Event& e);
  StepOutcome terminated(TerminationReason reason);

  int id_;
  Config config_;
  TimeUs start_;
  TrackStatus status_ = TrackStatus::Initializing;
  FeatureState state_;
  EventBuffer buffer_;
  ModelWindow model_;
  std::optional<EccCache> cache_;
  TrackRecord record_;
  TrackerCounters counters_;
  std::optional<TimeUs> last_accepted_;
  double last_rho_ = 0.0;
  int low_rho_run_ = 0;
};

/// Health verdict at time `now`: border margin, correlation floor patience
/// and the idle window. Returns TerminationReason::None while alive.
TerminationReason check_health(const FeatureTracker& tracker, TimeUs now);

using EventSource = std::function<std::optional<Event>()>;

/// Pulls events from `source` until the buffer is full and tracking starts.
/// Throws Error(InitStarved) if the source runs dry first.
FeatureTracker init_feature(int id, const FeatureState& seed, TimeUs start, EventSource source,
                            const Config& config);

/// Runs independent trackers over one shared event stream. Batches are handed
/// to every tracker in stream order; trackers may run on worker threads.
class MultiTracker {
 public:
  MultiTracker(const Config& config, unsigned threads);

  /// Returns the tracker id (insertion index).
  int add_seed(const FeatureState& seed, TimeUs start);

  void consume(std::span<const Event> batch);
  void finish();

  std::size_t size() const { return trackers_.size(); }
  const FeatureTracker& tracker(std::size_t i) const { return trackers_[i]; }
  std::vector<TrackRecord> records() const;

 private:
  Config config_;
  unsigned threads_;
  std::vector<FeatureTracker> trackers_;
};

}  // namespace eecc
