#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "eecc/cli.hpp"

int main(int argc, char** argv) {
  using namespace eecc;
  CLI::App app{"Asynchronous event-based feature tracking with a closed-form ECC solver"};
  app.require_subcommand(1);

  TrackOptions track;
  std::string track_mode;
  auto* cmd_track = app.add_subcommand("track", "Track seeded features through an event stream");
  cmd_track->add_option("--events", track.events, "Event file, one 't x y p' per line")->required();
  cmd_track->add_option("--seeds", track.seeds, "Seed file, one 't x y [label]' per line")->required();
  cmd_track->add_option("--config", track.config, "Config file of 'key = value' lines");
  cmd_track->add_option("--out", track.out, "Output directory")->default_str(".");
  cmd_track->add_option("--mode", track_mode, "Solver path: incremental or full");
  cmd_track->add_flag("--strict-timestamps", track.strict_timestamps,
                      "Fail on timestamps that go backwards instead of skipping them");

  SynthOptions synth;
  std::uint64_t synth_seed = 0;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic event stream with ground truth");
  cmd_synth->add_option("--scenario", synth.scenario, "Scenario file (built-in default when omitted)");
  cmd_synth->add_option("--out", synth.out, "Output directory")->default_str(".");
  auto* synth_seed_opt = cmd_synth->add_option("--rng-seed", synth_seed, "Generator seed");

  EvalOptions eval;
  auto* cmd_eval = app.add_subcommand("eval", "Score tracks against ground truth");
  cmd_eval->add_option("--tracks", eval.tracks, "Directory of track_*.csv files")->required();
  cmd_eval->add_option("--gt", eval.gt, "Ground-truth track CSV")->required();
  cmd_eval->add_option("--config", eval.config, "Config file (outlier threshold)");
  cmd_eval->add_option("--out", eval.out, "Output directory")->default_str(".");

  BenchOptions bench;
  auto* cmd_bench = app.add_subcommand("bench", "Time the per-event step of each solver path");
  cmd_bench->add_option("--config", bench.config, "Config file");
  cmd_bench->add_option("--mode", bench.mode, "incremental, full or both")->default_str("both");
  cmd_bench->add_option("--out", bench.out, "Directory for bench.csv (stdout only when omitted)");
  cmd_bench->add_option("--rng-seed", bench.rng_seed, "Workload generator seed")->default_str("1");
  cmd_bench->add_option("--repeats", bench.repeats, "Interleaved repetitions per path")->default_str("3");

  std::uint64_t selftest_seed = 1;
  auto* cmd_selftest = app.add_subcommand("selftest", "Run the randomised oracle suites");
  cmd_selftest->add_option("--rng-seed", selftest_seed, "Oracle seed")->default_str("1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (cmd_track->parsed()) {
    if (!track_mode.empty()) track.mode = track_mode;
    return run_track(track, std::cout, std::cerr);
  }
  if (cmd_synth->parsed()) {
    if (synth_seed_opt->count() > 0) synth.rng_seed = synth_seed;
    return run_synth(synth, std::cout, std::cerr);
  }
  if (cmd_eval->parsed()) return run_eval(eval, std::cout, std::cerr);
  if (cmd_bench->parsed()) return run_bench(bench, std::cout, std::cerr);
  if (cmd_selftest->parsed()) return run_selftest(selftest_seed, std::cout);
  return kExitUsage;
}
