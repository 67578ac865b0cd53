#pragma once

// Subcommands behind the eecc executable. Each returns a process exit code:
// 0 success, 1 runtime failure, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eecc {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Worker count: hardware concurrency, capped by EECC_THREADS when set.
unsigned worker_threads();

struct TrackOptions {
  fs::path events;
  fs::path seeds;
  std::optional<fs::path> config;
  fs::path out = ".";
  bool strict_timestamps = false;
  std::optional<std::string> mode;  // overrides the config's solver
};

/// Writes track_<id>.csv per seed and summary.csv. Exit 0 iff every seed
/// initialised.
int run_track(const TrackOptions& opt, std::ostream& log, std::ostream& err);

struct SynthOptions {
  std::optional<fs::path> scenario;  // built-in default scenario when absent
  fs::path out = ".";
  std::optional<std::uint64_t> rng_seed;
};

/// Writes events.txt, seeds.txt and gt.csv.
int run_synth(const SynthOptions& opt, std::ostream& log, std::ostream& err);

struct EvalOptions {
  fs::path tracks;  // directory holding track_*.csv
  fs::path gt;
  std::optional<fs::path> config;
  fs::path out = ".";
};

/// Writes metrics.csv and cdf.csv.
int run_eval(const EvalOptions& opt, std::ostream& log, std::ostream& err);

struct BenchOptions {
  std::optional<fs::path> config;
  std::string mode = "both";  // incremental | full | both
  std::optional<fs::path> out;  // bench.csv in this directory, else stdout
  std::uint64_t rng_seed = 1;
  int repeats = 3;
};

struct BenchRow {
  std::string mode;
  std::int64_t events = 0;
  double mean_us = 0.0;
  double median_us = 0.0;
};

/// Per-event step time of each solver path on the standard workload.
std::vector<BenchRow> bench_solver_paths(const BenchOptions& opt);

int run_bench(const BenchOptions& opt, std::ostream& log, std::ostream& err);

/// Oracle suites with their pass thresholds.
int run_selftest(std::uint64_t rng_seed, std::ostream& log);

}  // namespace eecc
