#include "eecc/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

namespace eecc {

const char* to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::None: return "none";
    case TerminationReason::OutOfBounds: return "out_of_bounds";
    case TerminationReason::SolverDegenerate: return "solver_degenerate";
    case TerminationReason::DegenerateModel: return "degenerate_model";
    case TerminationReason::Lost: return "lost";
    case TerminationReason::Idle: return "idle";
    case TerminationReason::EndOfStream: return "end_of_stream";
    case TerminationReason::InitStarved: return "init_starved";
  }
  return "none";
}

TerminationReason parse_termination_reason(const std::string& text) {
  for (auto r : {TerminationReason::None, TerminationReason::OutOfBounds,
                 TerminationReason::SolverDegenerate, TerminationReason::DegenerateModel,
                 TerminationReason::Lost, TerminationReason::Idle, TerminationReason::EndOfStream,
                 TerminationReason::InitStarved}) {
    if (text == to_string(r)) return r;
  }
  throw Error(ErrorKind::Parse, "unknown termination reason '" + text + "'");
}

StateUpdate apply_state_update(const FeatureState& s, const Vec3& delta, double clamp_px,
                               double clamp_deg) {
  StateUpdate out;
  double dx = delta[0];
  double dy = delta[1];
  double dth = delta[2];
  if (clamp_px > 0.0) {
    const double len = std::hypot(dx, dy);
    if (len > clamp_px) {
      dx *= clamp_px / len;
      dy *= clamp_px / len;
      out.clamped = true;
    }
  }
  if (clamp_deg > 0.0) {
    const double lim = clamp_deg * std::numbers::pi / 180.0;
    if (std::abs(dth) > lim) {
      dth = std::copysign(lim, dth);
      out.clamped = true;
    }
  }
  out.state = {s.x + dx, s.y + dy, wrap_angle(s.theta + dth)};
  return out;
}

namespace {

bool inside_margin(const FeatureState& s, const Config& cfg) {
  const double n = cfg.patch_radius;
  return s.x >= n && s.x <= cfg.width - 1 - n && s.y >= n && s.y <= cfg.height - 1 - n;
}

}  // namespace

FeatureTracker::FeatureTracker(int id, const FeatureState& seed, TimeUs start,
                               const Config& config)
    : id_(id),
      config_(config),
      start_(start),
      state_{seed.x, seed.y, wrap_angle(seed.theta)},
      buffer_(static_cast<std::size_t>(config.buffer_events)),
      model_(config.patch_radius) {
  config_.validate();
  record_.feature_id = id;
  if (!inside_margin(state_, config_)) {
    throw Error(ErrorKind::ContractViolation,
                "seed (" + std::to_string(seed.x) + ", " + std::to_string(seed.y) +
                    ") lies within the patch radius of the image border");
  }
}

StepOutcome FeatureTracker::feed(const Event& e) {
  switch (status_) {
    case TrackStatus::Initializing: return init_step(e);
    case TrackStatus::Tracking: return process_event(e);
    case TrackStatus::Terminated: break;
  }
  StepOutcome out;
  out.kind = StepKind::Ignored;
  out.state = state_;
  out.reason = record_.reason;
  return out;
}

StepOutcome FeatureTracker::init_step(const Event& e) {
  StepOutcome out;
  out.state = state_;
  if (e.t < start_ || !in_neighborhood(e.position(), state_, config_.patch_radius)) {
    out.kind = StepKind::Ignored;
    return out;
  }
  buffer_.push(e);
  ++counters_.init_accepted;
  out.kind = StepKind::Initializing;
  if (!buffer_.full()) return out;

  // Template and model coincide at theta = 0: both are the buffer splatted
  // around the seed.
  DensityMap tmpl(config_.patch_radius);
  for (std::size_t k = 0; k < buffer_.size(); ++k) {
    tmpl.splat(warp_to_template(buffer_[k].position(), state_));
  }
  cache_.emplace(std::move(tmpl));
  status_ = TrackStatus::Tracking;
  last_accepted_ = e.t;
  record_.states.push_back({e.t, state_});
  return out;
}

StepOutcome FeatureTracker::terminated(TerminationReason reason) {
  terminate(reason);
  StepOutcome out;
  out.kind = StepKind::Terminated;
  out.state = state_;
  out.reason = reason;
  return out;
}

void FeatureTracker::terminate(TerminationReason reason) {
  if (status_ == TrackStatus::Terminated) return;
  status_ = TrackStatus::Terminated;
  record_.reason = reason;
}

void FeatureTracker::finish() {
  if (status_ == TrackStatus::Tracking) terminate(TerminationReason::EndOfStream);
  if (status_ == TrackStatus::Initializing) terminate(TerminationReason::InitStarved);
}

StepOutcome FeatureTracker::process_event(const Event& e) {
  if (status_ != TrackStatus::Tracking) {
    throw Error(ErrorKind::ContractViolation, "process_event on a tracker that is not tracking");
  }
  ++counters_.processed;

  if (last_accepted_ && e.t - *last_accepted_ > seconds_to_us(config_.idle_timeout_s)) {
    return terminated(TerminationReason::Idle);
  }
  if (!in_neighborhood(e.position(), state_, config_.patch_radius)) {
    ++counters_.rejected;
    StepOutcome out;
    out.kind = StepKind::RejectedGate;
    out.state = state_;
    return out;
  }

  const auto t0 = std::chrono::steady_clock::now();
  buffer_.push(e);
  ++counters_.accepted;
  last_accepted_ = e.t;

  StepResult step;
  try {
    model_.rebuild(buffer_, state_);
    ++counters_.iterations;
    step = closed_form_step(cache_->terms(), cache_->project(model_));
  } catch (const Error& err) {
    if (err.kind() == ErrorKind::DegenerateModel) return terminated(TerminationReason::DegenerateModel);
    if (err.kind() == ErrorKind::SolverDegenerate) return terminated(TerminationReason::SolverDegenerate);
    throw;
  }

  // The step is expressed in the feature frame of s_k.
  const double c = std::cos(state_.theta);
  const double s = std::sin(state_.theta);
  const Vec3 delta(c * step.delta[0] - s * step.delta[1], s * step.delta[0] + c * step.delta[1],
                   step.delta[2]);
  const FeatureState before = state_;
  const StateUpdate upd = apply_state_update(state_, delta, config_.clamp_px, config_.clamp_deg);
  state_ = upd.state;
  if (upd.clamped) ++counters_.clamped;

  // Central event, motion-compensated with s_{k+1}, goes into the template.
  const ChangeSet changes = cache_->splat_template(warp_to_template(buffer_.central().position(), state_));
  if (changes.empty()) ++counters_.template_misses;
  const bool refresh = config_.mode == SolverMode::Full ||
                       (config_.refresh_every > 0 && counters_.accepted % config_.refresh_every == 0);
  if (refresh) {
    cache_->refresh_full();
    ++counters_.full_refreshes;
  } else {
    cache_->apply_incremental(changes);
  }
  counters_.max_gradient_pixels =
      std::max(counters_.max_gradient_pixels, static_cast<int>(changes.gradient().size()));

  record_.states.push_back({e.t, state_});
  last_rho_ = step.rho;
  low_rho_run_ = step.rho < config_.rho_floor ? low_rho_run_ + 1 : 0;

  StepOutcome out;
  out.kind = StepKind::StateUpdated;
  out.state = state_;
  out.delta = Vec3(state_.x - before.x, state_.y - before.y, wrap_angle(state_.theta - before.theta));
  out.diag.lambda = step.lambda;
  out.diag.rho = step.rho;
  out.diag.gradient_pixels = static_cast<int>(changes.gradient().size());
  out.diag.rows = static_cast<int>(changes.rows().size());
  out.diag.clamped = upd.clamped;
  out.diag.wall_us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();

  const TerminationReason health = check_health(*this, e.t);
  if (health != TerminationReason::None) {
    terminate(health);
    out.kind = StepKind::Terminated;
    out.reason = health;
  }
  return out;
}

TerminationReason check_health(const FeatureTracker& tracker, TimeUs now) {
  if (tracker.status() == TrackStatus::Terminated) return tracker.reason();
  const Config& cfg = tracker.config();
  if (!inside_margin(tracker.state(), cfg)) return TerminationReason::OutOfBounds;
  if (tracker.low_rho_run() >= cfg.rho_patience) return TerminationReason::Lost;
  if (tracker.last_accepted() && now - *tracker.last_accepted() > seconds_to_us(cfg.idle_timeout_s)) {
    return TerminationReason::Idle;
  }
  return TerminationReason::None;
}

FeatureTracker init_feature(int id, const FeatureState& seed, TimeUs start, EventSource source,
                            const Config& config) {
  FeatureTracker tracker(id, seed, start, config);
  while (tracker.status() == TrackStatus::Initializing) {
    const std::optional<Event> e = source();
    if (!e) {
      throw Error(ErrorKind::InitStarved,
                  "stream ended after " + std::to_string(tracker.counters().init_accepted) + " of " +
                      std::to_string(config.buffer_events) + " initialisation events");
    }
    tracker.feed(*e);
  }
  return tracker;
}

MultiTracker::MultiTracker(const Config& config, unsigned threads)
    : config_(config), threads_(std::max(1u, threads)) {
  config_.validate();
}

int MultiTracker::add_seed(const FeatureState& seed, TimeUs start) {
  const int id = static_cast<int>(trackers_.size());
  trackers_.emplace_back(id, seed, start, config_);
  return id;
}

void MultiTracker::consume(std::span<const Event> batch) {
  std::vector<std::exception_ptr> errors(trackers_.size());
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < trackers_.size(); i += stride) {
      FeatureTracker& tr = trackers_[i];
      try {
        for (const Event& e : batch) {
          if (tr.status() == TrackStatus::Terminated) break;
          tr.feed(e);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(threads_, trackers_.size());
  if (workers <= 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w, workers);
    run(0, workers);
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

void MultiTracker::finish() {
  for (FeatureTracker& tr : trackers_) tr.finish();
}

std::vector<TrackRecord> MultiTracker::records() const {
  std::vector<TrackRecord> out;
  out.reserve(trackers_.size());
  for (const FeatureTracker& tr : trackers_) out.push_back(tr.record());
  return out;
}

}  // namespace eecc
