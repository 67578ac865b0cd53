#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "eecc/streams_io.hpp"
#include "generated_stream.hpp"

using namespace eecc;

namespace {

std::vector<Event> read_all(const std::string& text, TimestampPolicy policy = TimestampPolicy::Skip) {
  std::istringstream in(text);
  EventReader reader(in, StreamHeader{}, policy);
  std::vector<Event> out;
  while (auto e = reader.next()) out.push_back(*e);
  return out;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("parse_event_line: fields and polarity") {
  const Event e = parse_event_line("0.003811 96 133 0", 1);
  CHECK(e.t == 3811);
  CHECK(e.x == 96.0);
  CHECK(e.y == 133.0);
  CHECK(e.polarity == -1);
  CHECK(parse_event_line("1.5 0.25 7 1", 1).polarity == 1);
  CHECK(parse_event_line("  2 3 4 1  ", 1).t == 2000000);
}

TEST_CASE("parse_timestamp_us: exact decimal handling") {
  CHECK(parse_timestamp_us("0.000001") == 1);
  CHECK(parse_timestamp_us("12.345678") == 12345678);
  CHECK(parse_timestamp_us("0.1") == 100000);
  CHECK(parse_timestamp_us("3") == 3000000);
  CHECK(parse_timestamp_us("0.0000015") == 2);
  CHECK(parse_timestamp_us("1e-3") == 1000);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<long long> u(0, 99999999999LL);
  for (int k = 0; k < 10000; ++k) {
    const long long us = u(rng);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%06lld", us / 1000000, us % 1000000);
    CHECK(parse_timestamp_us(buf) == us);
  }
}

TEST_CASE("EventReader: malformed lines name their line number") {
  for (const char* text : {"abc\n", "0.1 2 3\n", "0.1 2 3 5\n", "0.1 2 x 1\n", "-1 2 3 1\n"}) {
    try {
      read_all(text);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
  try {
    read_all("# header\n\n0.1 1 1 1\n0.2 1 1\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("EventReader: empty input, comments and blank lines") {
  CHECK(read_all("").empty());
  CHECK(read_all("# nothing\n\n   \n").empty());
  const auto ev = read_all("0.1 1 2 1\n# c\n\n0.2 3 4 0");
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].t == 200000);
}

TEST_CASE("EventReader: timestamp policies") {
  const std::string text = "0.3 1 1 1\n0.2 1 1 1\n0.3 2 2 1\n0.4 3 3 0\n";
  std::istringstream in(text);
  EventReader skip(in, StreamHeader{}, TimestampPolicy::Skip);
  std::vector<Event> ev;
  while (auto e = skip.next()) ev.push_back(*e);
  CHECK(ev.size() == 3);
  CHECK(skip.skipped_out_of_order() == 1);
  for (std::size_t k = 1; k < ev.size(); ++k) CHECK(ev[k].t >= ev[k - 1].t);

  CHECK(kind_of([&] { read_all(text, TimestampPolicy::Strict); }) == ErrorKind::OutOfOrder);
}

TEST_CASE("EventReader: events outside the sensor are dropped") {
  std::istringstream in("0.1 240 5 1\n0.2 -1 5 1\n0.3 239.5 179.5 1\n0.4 5 180 0\n");
  EventReader r(in, StreamHeader{240, 180, 0.0});
  std::vector<Event> ev;
  while (auto e = r.next()) ev.push_back(*e);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].t == 300000);
  CHECK(r.skipped_out_of_bounds() == 3);
  CHECK(r.line_number() == 4);
}

TEST_CASE("EventReader: memory stays flat over a long stream") {
  eecc::testing::GeneratedEventBuf buf(2000000);
  std::istream in(&buf);
  EventReader r(in);
  std::int64_t count = 0;
  std::int64_t rss_early = 0;
  while (r.next()) {
    if (++count == 100000) rss_early = eecc::testing::resident_bytes();
  }
  CHECK(count == 2000000);
  CHECK(eecc::testing::resident_bytes() - rss_early < 4 * 1024 * 1024);
}

TEST_CASE("parse_seeds: filtering and ordering") {
  std::istringstream one("0.5 100 80 corner\n");
  const SeedList a = parse_seeds(one, StreamHeader{});
  REQUIRE(a.seeds.size() == 1);
  CHECK(a.seeds[0].label == "corner");
  CHECK(a.seeds[0].t_us() == 500000);
  CHECK(a.seeds[0].state() == FeatureState{100.0, 80.0, 0.0});

  std::istringstream mixed("# seeds\n0.2 10 10 b\n0.1 500 10 far\n0.1 20 20 a\n0.2 30 30 c\n");
  const SeedList b = parse_seeds(mixed, StreamHeader{});
  CHECK(b.rejected.size() == 1);
  REQUIRE(b.seeds.size() == 3);
  CHECK(b.seeds[0].label == "a");
  CHECK(b.seeds[1].label == "b");
  CHECK(b.seeds[2].label == "c");

  std::istringstream bad("0.1 5\n");
  CHECK(kind_of([&] { parse_seeds(bad, StreamHeader{}); }) == ErrorKind::Parse);
}

TEST_CASE("track CSV: empty record") {
  std::ostringstream out;
  TrackRecord r{3, {}, TerminationReason::InitStarved};
  const std::size_t bytes = write_track(out, r);
  CHECK(out.str() == "feature_id,t_us,x,y,theta_rad\n3,end,init_starved,,\n");
  CHECK(bytes == out.str().size());
  std::istringstream in(out.str());
  const auto back = read_tracks(in);
  REQUIRE(back.size() == 1);
  CHECK(back[0].feature_id == 3);
  CHECK(back[0].states.empty());
  CHECK(back[0].reason == TerminationReason::InitStarved);
}

TEST_CASE("track CSV: round trip within 1e-9") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(0.0, 240.0), ang(-3.14159, 3.14159);
  std::ostringstream out;
  TrackWriter w(out);
  std::vector<TrackRecord> recs;
  for (int id = 0; id < 3; ++id) {
    TrackRecord r{id, {}, id == 1 ? TerminationReason::Lost : TerminationReason::EndOfStream};
    TimeUs t = 1000 * id;
    for (int k = 0; k < 500; ++k) {
      t += k % 3;
      r.states.push_back({t, {pos(rng), pos(rng), ang(rng)}});
    }
    w.write(r);
    recs.push_back(r);
  }
  CHECK(out.str().find("feature_id", 1) == std::string::npos);  // one header
  std::istringstream in(out.str());
  const auto back = read_tracks(in);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].feature_id == recs[i].feature_id);
    CHECK(back[i].reason == recs[i].reason);
    REQUIRE(back[i].states.size() == recs[i].states.size());
    for (std::size_t k = 0; k < recs[i].states.size(); ++k) {
      const auto& a = back[i].states[k];
      const auto& b = recs[i].states[k];
      CHECK(a.t == b.t);
      CHECK(std::abs(a.state.x - b.state.x) <= 1e-9);
      CHECK(std::abs(a.state.y - b.state.y) <= 1e-9);
      CHECK(std::abs(a.state.theta - b.state.theta) <= 1e-9);
    }
  }
}

TEST_CASE("track CSV: malformed rows") {
  std::istringstream a("0,5,1,2\n");
  CHECK(kind_of([&] { read_tracks(a); }) == ErrorKind::Parse);
  std::istringstream b("0,end,melted,,\n");
  CHECK(kind_of([&] { read_tracks(b); }) == ErrorKind::Parse);
}

TEST_CASE("TrackWriter: failing sink") {
  std::ostringstream out;
  out.setstate(std::ios::badbit);
  CHECK(kind_of([&] { write_track(out, TrackRecord{}); }) == ErrorKind::Io);
}

TEST_CASE("load_config: defaults, overrides and errors") {
  std::istringstream empty("");
  const Config d = load_config(empty);
  CHECK(d.patch_radius == 15);
  CHECK(d.buffer_events == 193);
  CHECK(d.outlier_px == 5.0);
  CHECK(d.mode == SolverMode::Incremental);

  std::istringstream seven("# small patch\npatch_radius = 7   # N\nbuffer_events=41\nsolver = full\n");
  const Config c = load_config(seven);
  CHECK(c.patch_radius == 7);
  CHECK(c.buffer_events == 41);
  CHECK(c.mode == SolverMode::Full);

  for (const char* text : {"patch_radius = 1\n", "buffer_events = 10\n", "frobnicate = 3\n",
                           "patch_radius = seven\n", "clamp_px = -1\n", "solver = fast\n",
                           "width = 20\n"}) {
    std::istringstream in(text);
    CHECK(kind_of([&] { load_config(in); }) == ErrorKind::Config);
  }
  std::istringstream noeq("patch_radius 7\n");
  CHECK(kind_of([&] { load_config(noeq); }) == ErrorKind::Parse);
  CHECK(kind_of([] { load_config_file("/nonexistent/eecc.cfg"); }) == ErrorKind::Io);
}
