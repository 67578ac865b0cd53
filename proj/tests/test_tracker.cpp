#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "eecc/synthbench.hpp"
#include "eecc/tracker.hpp"

using namespace eecc;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Fixture {
  SyntheticScene scene;
  MotionProfile motion;
  std::vector<Event> events;
};

Fixture star_fixture(const MotionSegment& seg, std::uint64_t seed = 3) {
  Fixture f;
  f.scene = star_grid_scene(StarGrid{}, Vec2(120.0, 90.0), 240, 180);
  f.motion = MotionProfile({seg});
  f.events = generate_synthetic_events(f.scene, f.motion, seed);
  return f;
}

FeatureTracker run_tracker(const std::vector<Event>& events, const FeatureState& seed,
                           const Config& cfg = {}) {
  FeatureTracker tr(0, seed, 0, cfg);
  for (const Event& e : events) {
    if (tr.status() == TrackStatus::Terminated) break;
    tr.feed(e);
  }
  tr.finish();
  return tr;
}

// Gaussian blob of events around `c`, one microsecond apart.
std::vector<Event> blob_events(const Vec2& c, int count, double sigma, std::uint64_t seed,
                               TimeUs t0 = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<Event> out;
  for (int k = 0; k < count; ++k) out.push_back({t0 + k, c.x() + g(rng), c.y() + g(rng), 1});
  return out;
}

}  // namespace

TEST_CASE("apply_state_update: clamping and wrapping") {
  const FeatureState s{50.0, 60.0, 0.0};
  const StateUpdate big = apply_state_update(s, Vec3(3.0, 0.0, 0.0), 1.0, 2.0);
  CHECK(big.clamped);
  CHECK(big.state.x == doctest::Approx(51.0));
  CHECK(big.state.y == 60.0);

  const StateUpdate small = apply_state_update(s, Vec3(0.3, -0.4, 0.01), 1.0, 2.0);
  CHECK_FALSE(small.clamped);
  CHECK(small.state.x == doctest::Approx(50.3));
  CHECK(small.state.y == doctest::Approx(59.6));
  CHECK(small.state.theta == doctest::Approx(0.01));

  const StateUpdate rot = apply_state_update(s, Vec3(0.0, 0.0, -0.5), 1.0, 2.0);
  CHECK(rot.clamped);
  CHECK(rot.state.theta == doctest::Approx(-2.0 * kDeg));

  const StateUpdate off = apply_state_update(s, Vec3(3.0, 4.0, 0.5), 0.0, 0.0);
  CHECK_FALSE(off.clamped);
  CHECK(off.state.x == doctest::Approx(53.0));

  const FeatureState edge{0.0, 0.0, std::numbers::pi - 0.01};
  const StateUpdate w = apply_state_update(edge, Vec3(0.0, 0.0, 0.02), 0.0, 0.0);
  CHECK(w.state.theta == doctest::Approx(-std::numbers::pi + 0.01));
}

TEST_CASE("FeatureTracker: seeds too close to the border are refused") {
  const Config cfg;
  for (const FeatureState& s : {FeatureState{14.0, 90.0, 0.0}, FeatureState{120.0, 165.5, 0.0},
                                FeatureState{225.0, 90.0, 0.0}, FeatureState{120.0, 14.99, 0.0}}) {
    try {
      FeatureTracker tr(0, s, 0, cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ContractViolation);
    }
  }
  CHECK_NOTHROW(FeatureTracker(0, FeatureState{15.0, 15.0, 0.0}, 0, cfg));
}

TEST_CASE("init_feature: template equals the initial model") {
  const FeatureState seed{100.0, 80.0, 0.0};
  const std::vector<Event> events = blob_events(seed.center(), 400, 3.0, 1);
  std::size_t next = 0;
  const FeatureTracker tr = init_feature(
      7, seed, 0, [&]() -> std::optional<Event> {
        if (next == events.size()) return std::nullopt;
        return events[next++];
      },
      Config{});
  CHECK(tr.status() == TrackStatus::Tracking);
  CHECK(tr.id() == 7);
  REQUIRE(tr.cache() != nullptr);
  CHECK(tr.buffer().full());
  CHECK(tr.record().states.size() == 1);
  const ModelWindow m = build_model_window(tr.buffer(), tr.state(), 15);
  const DensityMap& t = tr.cache()->template_map();
  double diff = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) diff = std::max(diff, std::abs(t[i] - m.density()[i]));
  CHECK(diff < 1e-12);
  CHECK(t.sum() == doctest::Approx(193.0));
}

TEST_CASE("init_feature: stream ending early starves initialisation") {
  const FeatureState seed{100.0, 80.0, 0.0};
  const std::vector<Event> events = blob_events(seed.center(), 100, 3.0, 2);
  std::size_t next = 0;
  try {
    init_feature(0, seed, 0,
                 [&]() -> std::optional<Event> {
                   if (next == events.size()) return std::nullopt;
                   return events[next++];
                 },
                 Config{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InitStarved);
  }
  FeatureTracker tr(0, seed, 0, Config{});
  for (const Event& e : events) tr.feed(e);
  tr.finish();
  CHECK(tr.reason() == TerminationReason::InitStarved);
}

TEST_CASE("FeatureTracker: initialisation ignores early and far events") {
  const FeatureState seed{100.0, 80.0, 0.0};
  FeatureTracker tr(0, seed, 1000, Config{});
  CHECK(tr.feed({999, 100.0, 80.0, 1}).kind == StepKind::Ignored);
  CHECK(tr.feed({1000, 130.0, 80.0, 1}).kind == StepKind::Ignored);
  CHECK(tr.feed({1000, 100.0, 80.0, 1}).kind == StepKind::Initializing);
  CHECK(tr.counters().init_accepted == 1);
}

TEST_CASE("FeatureTracker: replaying the evicted event gives a zero step") {
  const FeatureState seed{100.0, 80.0, 0.0};
  const std::vector<Event> events = blob_events(seed.center(), 193, 3.0, 5);
  FeatureTracker tr(0, seed, 0, Config{});
  for (const Event& e : events) tr.feed(e);
  REQUIRE(tr.status() == TrackStatus::Tracking);
  Event again = events.front();
  again.t = events.back().t + 1;
  const StepOutcome out = tr.process_event(again);
  REQUIRE(out.kind == StepKind::StateUpdated);
  CHECK(out.delta.norm() < 1e-6);
  CHECK(out.diag.rho == doctest::Approx(1.0));
  CHECK(out.diag.gradient_pixels <= 12);
}

TEST_CASE("FeatureTracker: gate rejection leaves everything unchanged") {
  const FeatureState seed{100.0, 80.0, 0.0};
  const std::vector<Event> events = blob_events(seed.center(), 193, 3.0, 6);
  FeatureTracker tr(0, seed, 0, Config{});
  for (const Event& e : events) tr.feed(e);
  const FeatureState before = tr.state();
  const Event newest = tr.buffer().newest();
  const StepOutcome out = tr.process_event({events.back().t + 1, 100.0, 96.0, 1});
  CHECK(out.kind == StepKind::RejectedGate);
  CHECK(tr.state() == before);
  CHECK(tr.buffer().newest() == newest);
  CHECK(tr.counters().rejected == 1);
  CHECK(tr.counters().accepted == 0);
  CHECK(tr.record().states.size() == 1);
}

TEST_CASE("FeatureTracker: idle window ends the track") {
  const FeatureState seed{100.0, 80.0, 0.0};
  const std::vector<Event> events = blob_events(seed.center(), 193, 3.0, 7);
  FeatureTracker tr(0, seed, 0, Config{});
  for (const Event& e : events) tr.feed(e);
  const StepOutcome out = tr.process_event({events.back().t + 1000001, 100.0, 80.0, 1});
  CHECK(out.kind == StepKind::Terminated);
  CHECK(tr.reason() == TerminationReason::Idle);
  CHECK(check_health(tr, events.back().t + 2000000) == TerminationReason::Idle);
}

TEST_CASE("FeatureTracker: bookkeeping over a synthetic run") {
  const Fixture f = star_fixture({1.0, 20.0, -10.0, 10.0, 0.0});
  const FeatureTracker tr = run_tracker(f.events, {80.0, 90.0, 0.0});
  const TrackerCounters& c = tr.counters();
  CHECK(c.accepted > 1000);
  CHECK(c.iterations == c.accepted);
  CHECK(tr.record().states.size() == static_cast<std::size_t>(c.accepted + 1));
  CHECK(c.max_gradient_pixels <= 12);
  CHECK(c.accepted + c.rejected == c.processed);
  for (std::size_t k = 1; k < tr.record().states.size(); ++k) {
    CHECK(tr.record().states[k].t >= tr.record().states[k - 1].t);
  }
  CHECK(tr.reason() == TerminationReason::EndOfStream);
}

TEST_CASE("FeatureTracker: stationary pattern stays put") {
  const Fixture f = star_fixture({1.0, 0.0, 0.0, 0.0, 0.0});
  const FeatureState seed{120.0, 90.0, 0.0};
  FeatureTracker tr(0, seed, 0, Config{});
  double max_step = 0.0;
  for (const Event& e : f.events) {
    const StepOutcome out = tr.feed(e);
    if (out.kind == StepKind::StateUpdated) max_step = std::max(max_step, out.delta.norm());
    if (tr.counters().accepted == 1000) break;
  }
  REQUIRE(tr.counters().accepted == 1000);
  CHECK(max_step < 0.05);
  CHECK(std::hypot(tr.state().x - seed.x, tr.state().y - seed.y) < 0.5);
  CHECK(std::abs(tr.state().theta) < 1.0 * kDeg);
}

TEST_CASE("FeatureTracker: translating pattern is followed") {
  const Fixture f = star_fixture({1.0, 20.0, 0.0, 0.0, 0.0});
  const SeedSpec seed{0.0, 80.0, 90.0, ""};
  const FeatureTracker tr = run_tracker(f.events, seed.state());
  const FeatureState gt = ground_truth_state(f.scene, f.motion, seed, 1.0);
  const FeatureState& s = tr.record().states.back().state;
  CHECK(std::hypot(s.x - gt.x, s.y - gt.y) < 0.5);
  CHECK(tr.reason() == TerminationReason::EndOfStream);
}

TEST_CASE("FeatureTracker: leaving the sensor ends the track") {
  const Fixture f = star_fixture({1.0, -40.0, 0.0, 0.0, 0.0});
  const FeatureTracker tr = run_tracker(f.events, {40.0, 90.0, 0.0});
  CHECK(tr.reason() == TerminationReason::OutOfBounds);
  CHECK(tr.state().x < 15.0);
  // The last recorded state is the one that crossed the margin.
  CHECK(tr.record().states.back().state == tr.state());
}

TEST_CASE("FeatureTracker: structureless input is declared lost") {
  // Large sensor so that the random walk cannot reach the border first.
  const FeatureState seed{500.0, 500.0, 0.0};
  Config cfg;
  cfg.width = cfg.height = 1000;
  cfg.rho_patience = 50;
  // Raw densities are non-negative, so noise still correlates around 0.6 with
  // a noise-filled template; the floor sits above that level.
  cfg.rho_floor = 0.9;
  FeatureTracker tr(0, seed, 0, cfg);
  for (const Event& e : blob_events(seed.center(), 193, 1.0, 8)) tr.feed(e);
  REQUIRE(tr.status() == TrackStatus::Tracking);
  // Uniform noise over the gate: the model no longer resembles the template.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-15.0, 15.0);
  TimeUs t = 1000;
  while (tr.status() == TrackStatus::Tracking && t < 200000) {
    tr.process_event({t++, tr.state().x + u(rng), tr.state().y + u(rng), 1});
  }
  CHECK(tr.reason() == TerminationReason::Lost);
  CHECK(tr.last_rho() < cfg.rho_floor);
  CHECK(tr.counters().accepted < 2000);
}

TEST_CASE("FeatureTracker: identical inputs give identical tracks") {
  const Fixture f = star_fixture({1.0, 15.0, 10.0, 20.0, 0.0}, 11);
  const FeatureTracker a = run_tracker(f.events, {120.0, 90.0, 0.0});
  const FeatureTracker b = run_tracker(f.events, {120.0, 90.0, 0.0});
  REQUIRE(a.record().states.size() == b.record().states.size());
  for (std::size_t k = 0; k < a.record().states.size(); ++k) {
    CHECK(a.record().states[k].t == b.record().states[k].t);
    CHECK(a.record().states[k].state == b.record().states[k].state);
  }
}

TEST_CASE("MultiTracker: worker threads do not change the result") {
  const Fixture f = star_fixture({1.0, 10.0, -5.0, 5.0, 0.0}, 12);
  const std::vector<FeatureState> seeds{{80, 50, 0}, {120, 90, 0}, {160, 130, 0}, {80, 130, 0}, {160, 50, 0}};
  auto run = [&](unsigned threads) {
    MultiTracker mt(Config{}, threads);
    for (const auto& s : seeds) mt.add_seed(s, 0);
    const std::span<const Event> all(f.events);
    for (std::size_t i = 0; i < all.size(); i += 4096) {
      mt.consume(all.subspan(i, std::min<std::size_t>(4096, all.size() - i)));
    }
    mt.finish();
    return mt.records();
  };
  const auto one = run(1);
  const auto four = run(4);
  REQUIRE(one.size() == seeds.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].feature_id == static_cast<int>(i));
    CHECK(one[i].reason == four[i].reason);
    REQUIRE(one[i].states.size() == four[i].states.size());
    for (std::size_t k = 0; k < one[i].states.size(); ++k) {
      CHECK(one[i].states[k].state == four[i].states[k].state);
    }
  }
}

TEST_CASE("termination reasons round-trip through their names") {
  for (auto r : {TerminationReason::None, TerminationReason::OutOfBounds,
                 TerminationReason::SolverDegenerate, TerminationReason::DegenerateModel,
                 TerminationReason::Lost, TerminationReason::Idle, TerminationReason::EndOfStream,
                 TerminationReason::InitStarved}) {
    CHECK(parse_termination_reason(to_string(r)) == r);
  }
  CHECK_THROWS_AS(parse_termination_reason("vanished"), Error);
}
