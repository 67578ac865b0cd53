#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "eecc/cli.hpp"
#include "eecc/streams_io.hpp"
#include "eecc/synthbench.hpp"

using namespace eecc;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("eecc_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kSmallScenario =
    "noise_rate = 200\n"
    "segment = 0.4 15 -5 10\n"
    "seed = 0 80 90 a\n"
    "seed = 0 120 90 b\n"
    "seed = 0.05 160 50 c\n";

// Synthesises the small scenario into `dir`.
void synth_into(const fs::path& dir) {
  write_file(dir / "scene.txt", kSmallScenario);
  std::ostringstream log, err;
  SynthOptions opt;
  opt.scenario = dir / "scene.txt";
  opt.out = dir;
  REQUIRE(run_synth(opt, log, err) == kExitOk);
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(EECC_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("synth: writes events, seeds and ground truth") {
  TempDir dir;
  synth_into(dir.path());
  for (const char* f : {"events.txt", "seeds.txt", "gt.csv"}) CHECK(fs::file_size(dir / f) > 0);

  std::ifstream seeds_in(dir / "seeds.txt");
  const SeedList seeds = parse_seeds(seeds_in, StreamHeader{});
  CHECK(seeds.seeds.size() == 3);
  std::ifstream gt_in(dir / "gt.csv");
  const auto gt = read_tracks(gt_in);
  REQUIRE(gt.size() == 3);
  CHECK(gt[2].states.front().t == 50000);

  std::ifstream ev_in(dir / "events.txt");
  EventReader reader(ev_in, StreamHeader{}, TimestampPolicy::Strict);
  std::int64_t n = 0;
  while (reader.next()) ++n;
  CHECK(n > 100000);
}

TEST_CASE("synth: fixed generator seed reproduces the stream") {
  TempDir a, b, c;
  SynthOptions opt;
  opt.rng_seed = 17;
  std::ostringstream log, err;
  write_file(a / "scene.txt", kSmallScenario);
  opt.scenario = a / "scene.txt";
  opt.out = a.path();
  REQUIRE(run_synth(opt, log, err) == kExitOk);
  opt.out = b.path();
  REQUIRE(run_synth(opt, log, err) == kExitOk);
  opt.rng_seed = 18;
  opt.out = c.path();
  REQUIRE(run_synth(opt, log, err) == kExitOk);
  CHECK(slurp(a / "events.txt") == slurp(b / "events.txt"));
  CHECK(slurp(a / "events.txt") != slurp(c / "events.txt"));
}

TEST_CASE("synth: default scenario and bad scenarios") {
  TempDir dir;
  std::ostringstream log, err;
  SynthOptions opt;
  opt.out = dir.path();
  CHECK(run_synth(opt, log, err) == kExitOk);
  CHECK(fs::exists(dir / "gt.csv"));

  write_file(dir / "zero.txt", "segment = 0 10 0 0\n");
  opt.scenario = dir / "zero.txt";
  CHECK(run_synth(opt, log, err) != kExitOk);
  opt.scenario = dir / "absent.txt";
  CHECK(run_synth(opt, log, err) == kExitUsage);
}

TEST_CASE("track: one CSV per seed plus a summary, reproducibly") {
  TempDir dir;
  synth_into(dir.path());
  TrackOptions opt;
  opt.events = dir / "events.txt";
  opt.seeds = dir / "seeds.txt";
  opt.out = dir / "run1";
  std::ostringstream log, err;
  REQUIRE(run_track(opt, log, err) == kExitOk);
  for (int k = 0; k < 3; ++k) CHECK(fs::exists(opt.out / ("track_" + std::to_string(k) + ".csv")));
  CHECK_FALSE(fs::exists(opt.out / "track_3.csv"));

  std::ifstream summary(opt.out / "summary.csv");
  std::string line;
  std::getline(summary, line);
  CHECK(line == "feature_id,label,t_start,x0,y0,status,reason,age_s,states");
  int rows = 0;
  while (std::getline(summary, line)) ++rows;
  CHECK(rows == 3);

  const fs::path first = opt.out;
  opt.out = dir / "run2";
  REQUIRE(run_track(opt, log, err) == kExitOk);
  for (int k = 0; k < 3; ++k) {
    const std::string name = "track_" + std::to_string(k) + ".csv";
    CHECK(slurp(first / name) == slurp(opt.out / name));
  }

  opt.mode = "full";
  opt.out = dir / "run3";
  CHECK(run_track(opt, log, err) == kExitOk);
  opt.mode = "sideways";
  CHECK(run_track(opt, log, err) == kExitUsage);
}

TEST_CASE("track: input problems") {
  TempDir dir;
  synth_into(dir.path());
  std::ostringstream log, err;
  TrackOptions opt;
  opt.events = dir / "missing.txt";
  opt.seeds = dir / "seeds.txt";
  opt.out = dir / "out";
  CHECK(run_track(opt, log, err) == kExitUsage);

  write_file(dir / "bad.txt", "0.1 5 5 1\nnot an event\n");
  opt.events = dir / "bad.txt";
  CHECK(run_track(opt, log, err) == kExitUsage);

  // Backwards timestamps: skipped by default, fatal when strict.
  write_file(dir / "seeds1.txt", "0 100 80\n");
  std::string events;
  for (int k = 0; k < 400; ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0.%06d %d %d 1\n", 1000 + k, 95 + k % 11, 75 + (k / 11) % 11);
    events += buf;
  }
  events += "0.000500 100 80 1\n";
  write_file(dir / "order.txt", events);
  opt.events = dir / "order.txt";
  opt.seeds = dir / "seeds1.txt";
  CHECK(run_track(opt, log, err) == kExitOk);
  opt.strict_timestamps = true;
  CHECK(run_track(opt, log, err) == kExitUsage);

  // A seed that never gathers enough events fails the run.
  opt.strict_timestamps = false;
  write_file(dir / "seeds2.txt", "0 100 80\n0 200 150\n");
  opt.seeds = dir / "seeds2.txt";
  CHECK(run_track(opt, log, err) == kExitFailure);
  CHECK(fs::exists(opt.out / "track_1.csv"));
}

TEST_CASE("eval: ground truth scored against itself") {
  TempDir dir;
  synth_into(dir.path());
  fs::create_directories(dir / "tracks");
  fs::copy_file(dir / "gt.csv", dir / "tracks" / "track_all.csv");
  EvalOptions opt;
  opt.tracks = dir / "tracks";
  opt.gt = dir / "gt.csv";
  opt.out = dir / "eval";
  std::ostringstream log, err;
  REQUIRE(run_eval(opt, log, err) == kExitOk);

  std::ifstream metrics(opt.out / "metrics.csv");
  std::string line;
  std::getline(metrics, line);
  CHECK(line == "feature_id,age_s,mean_err_px,outlier");
  int rows = 0;
  while (std::getline(metrics, line)) {
    ++rows;
    std::istringstream s(line);
    std::string id, age, err_px, outlier;
    std::getline(s, id, ',');
    std::getline(s, age, ',');
    std::getline(s, err_px, ',');
    std::getline(s, outlier, ',');
    CHECK(std::stod(err_px) == 0.0);
    CHECK(outlier == "0");
  }
  CHECK(rows == 3);

  std::ifstream cdf(opt.out / "cdf.csv");
  std::getline(cdf, line);
  CHECK(line == "t,cdf");
  double prev = 0.0;
  while (std::getline(cdf, line)) {
    const double v = std::stod(line.substr(line.find(',') + 1));
    CHECK(v >= prev);
    CHECK(v == 0.0);
    prev = v;
  }
}

TEST_CASE("eval: tracker output, mismatches and missing inputs") {
  TempDir dir;
  synth_into(dir.path());
  std::ostringstream log, err;
  TrackOptions topt;
  topt.events = dir / "events.txt";
  topt.seeds = dir / "seeds.txt";
  topt.out = dir / "tracks";
  REQUIRE(run_track(topt, log, err) == kExitOk);

  EvalOptions opt;
  opt.tracks = dir / "tracks";
  opt.gt = dir / "gt.csv";
  opt.out = dir / "eval";
  REQUIRE(run_eval(opt, log, err) == kExitOk);
  std::ifstream cdf(opt.out / "cdf.csv");
  std::string line;
  std::getline(cdf, line);
  double prev = 0.0;
  int samples = 0;
  while (std::getline(cdf, line)) {
    const double v = std::stod(line.substr(line.find(',') + 1));
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
    ++samples;
  }
  CHECK(samples == 101);

  write_file(dir / "tracks" / "track_9.csv", "feature_id,t_us,x,y,theta_rad\n9,0,1,1,0\n9,end,lost,,\n");
  CHECK(run_eval(opt, log, err) == kExitUsage);

  opt.gt = dir / "nope.csv";
  CHECK(run_eval(opt, log, err) == kExitUsage);
  opt.gt = dir / "gt.csv";
  opt.tracks = dir / "nowhere";
  CHECK(run_eval(opt, log, err) == kExitUsage);
}

TEST_CASE("bench: both solver paths report parseable rows") {
  TempDir dir;
  BenchOptions opt;
  opt.out = dir.path();
  opt.repeats = 1;
  std::ostringstream log, err;
  REQUIRE(run_bench(opt, log, err) == kExitOk);
  std::ifstream in(dir / "bench.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "mode,events,mean_us,median_us");
  std::vector<std::string> modes;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    std::string mode, events, mean, median;
    std::getline(s, mode, ',');
    std::getline(s, events, ',');
    std::getline(s, mean, ',');
    std::getline(s, median, ',');
    modes.push_back(mode);
    CHECK(std::stoll(events) >= 10000);
    CHECK(std::stod(mean) > 0.0);
    CHECK(std::stod(median) > 0.0);
  }
  CHECK(modes == std::vector<std::string>{"incremental", "full"});
  CHECK(log.str() == slurp(dir / "bench.csv"));

  opt.mode = "turbo";
  CHECK(run_bench(opt, log, err) == kExitUsage);
}

TEST_CASE("eecc executable: exit codes") {
  TempDir dir;
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("") == 2);
  CHECK(run_binary("frobnicate") == 2);
  CHECK(run_binary("track --seeds x.txt") == 2);
  CHECK(run_binary("track --events " + (dir / "no.txt").string() + " --seeds " +
                   (dir / "no.txt").string()) == 2);
  CHECK(run_binary("synth --out " + dir.path().string() + " --rng-seed 3") == 0);
  CHECK(fs::exists(dir / "events.txt"));
}
