#include "eecc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

#include "eecc/oracles.hpp"
#include "eecc/streams_io.hpp"
#include "eecc/synthbench.hpp"
#include "eecc/tracker.hpp"

namespace eecc {

namespace {

// Input problems map to 2, everything else to 1.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Parse:
      case ErrorKind::Config:
      case ErrorKind::OutOfOrder:
        return kExitUsage;
      default:
        return kExitFailure;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

bool require_file(const fs::path& p, const char* what, std::ostream& err) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) {
    err << "error: " << what << " '" << p.string() << "' not found\n";
    return false;
  }
  return true;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + p.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create directory '" + dir.string() + "'");
}

Config load_optional_config(const std::optional<fs::path>& path) {
  return path ? load_config_file(*path) : Config{};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EECC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

int run_track(const TrackOptions& opt, std::ostream& log, std::ostream& err) {
  if (!require_file(opt.events, "events file", err) || !require_file(opt.seeds, "seeds file", err) ||
      (opt.config && !require_file(*opt.config, "config file", err))) {
    return kExitUsage;
  }
  return guarded(err, [&] {
    Config cfg = load_optional_config(opt.config);
    if (opt.mode) cfg.mode = parse_solver_mode(*opt.mode);
    cfg.validate();
    const StreamHeader header = header_from(cfg);

    std::ifstream seed_in = open_in(opt.seeds);
    const SeedList seeds = parse_seeds(seed_in, header);
    for (const std::string& r : seeds.rejected) err << "warning: rejected seed, " << r << "\n";

    MultiTracker engine(cfg, worker_threads());
    std::vector<int> ids;           // tracker index per accepted seed, -1 if refused
    bool all_ok = seeds.rejected.empty();
    for (const SeedSpec& s : seeds.seeds) {
      try {
        ids.push_back(engine.add_seed(s.state(), s.t_us()));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ContractViolation) throw;
        err << "warning: seed (" << s.x << ", " << s.y << ") refused: " << e.what() << "\n";
        ids.push_back(-1);
        all_ok = false;
      }
    }

    std::ifstream ev_in = open_in(opt.events);
    EventReader reader(ev_in, header, opt.strict_timestamps ? TimestampPolicy::Strict : TimestampPolicy::Skip);
    std::vector<Event> batch;
    constexpr std::size_t kBatch = 1 << 16;
    batch.reserve(kBatch);
    std::int64_t total = 0;
    for (;;) {
      batch.clear();
      while (batch.size() < kBatch) {
        auto e = reader.next();
        if (!e) break;
        batch.push_back(*e);
      }
      if (batch.empty()) break;
      total += static_cast<std::int64_t>(batch.size());
      engine.consume(batch);
    }
    engine.finish();
    if (reader.skipped_out_of_order() > 0) {
      err << "warning: skipped " << reader.skipped_out_of_order() << " out-of-order events\n";
    }

    ensure_dir(opt.out);
    std::ofstream summary = open_out(opt.out / "summary.csv");
    summary << "feature_id,label,t_start,x0,y0,status,reason,age_s,states\n";
    char buf[256];
    for (std::size_t k = 0; k < seeds.seeds.size(); ++k) {
      const SeedSpec& s = seeds.seeds[k];
      TrackRecord rec;
      rec.feature_id = static_cast<int>(k);
      if (ids[k] >= 0) {
        rec = engine.tracker(static_cast<std::size_t>(ids[k])).record();
        rec.feature_id = static_cast<int>(k);
      } else {
        rec.reason = TerminationReason::OutOfBounds;
      }
      const bool initialised = !rec.states.empty();
      if (!initialised) all_ok = false;
      std::ofstream out = open_out(opt.out / ("track_" + std::to_string(k) + ".csv"));
      write_track(out, rec);
      std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.3f,%.3f,%s,%s,%.6f,%zu\n", k,
                    s.label.c_str(), s.t, s.x, s.y, initialised ? "initialized" : "failed",
                    to_string(rec.reason), rec.age_s(), rec.states.size());
      summary << buf;
    }
    log << "tracked " << seeds.seeds.size() << " seeds over " << total << " events\n";
    return all_ok ? kExitOk : kExitFailure;
  });
}

int run_synth(const SynthOptions& opt, std::ostream& log, std::ostream& err) {
  if (opt.scenario && !require_file(*opt.scenario, "scenario file", err)) return kExitUsage;
  return guarded(err, [&] {
    Scenario sc = opt.scenario ? load_scenario_file(*opt.scenario) : default_scenario();
    if (opt.rng_seed) sc.rng_seed = *opt.rng_seed;
    sc.scene.validate();
    sc.motion.validate();

    // Seeds as they will read back from the seeds file.
    std::vector<SeedSpec> seeds = sc.resolved_seeds();
    for (SeedSpec& s : seeds) {
      s.t = std::round(s.t * 1e6) / 1e6;
      s.x = std::round(s.x * 1e3) / 1e3;
      s.y = std::round(s.y * 1e3) / 1e3;
    }
    const std::vector<Event> events = generate_synthetic_events(sc.scene, sc.motion, sc.rng_seed);

    ensure_dir(opt.out);
    {
      std::ofstream out = open_out(opt.out / "events.txt");
      write_events(out, events);
    }
    {
      std::ofstream out = open_out(opt.out / "seeds.txt");
      write_seeds(out, seeds);
    }
    {
      std::ofstream out = open_out(opt.out / "gt.csv");
      TrackWriter w(out);
      for (std::size_t k = 0; k < seeds.size(); ++k) {
        w.write(ground_truth_track(sc.scene, sc.motion, static_cast<int>(k), seeds[k], sc.gt_period_s));
      }
    }
    log << "wrote " << events.size() << " events, " << seeds.size() << " seeds over "
        << sc.motion.duration() << " s\n";
    return kExitOk;
  });
}

int run_eval(const EvalOptions& opt, std::ostream& log, std::ostream& err) {
  std::error_code ec;
  if (!fs::is_directory(opt.tracks, ec)) {
    err << "error: tracks directory '" << opt.tracks.string() << "' not found\n";
    return kExitUsage;
  }
  if (!require_file(opt.gt, "ground-truth file", err) ||
      (opt.config && !require_file(*opt.config, "config file", err))) {
    return kExitUsage;
  }
  return guarded(err, [&] {
    const Config cfg = load_optional_config(opt.config);
    std::ifstream gt_in = open_in(opt.gt);
    std::map<int, TrackRecord> gt;
    for (TrackRecord& r : read_tracks(gt_in)) gt[r.feature_id] = std::move(r);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(opt.tracks)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.starts_with("track_") && name.ends_with(".csv")) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());

    std::map<int, TrackRecord> tracks;
    for (const fs::path& f : files) {
      std::ifstream in = open_in(f);
      for (TrackRecord& r : read_tracks(in)) tracks[r.feature_id] = std::move(r);
    }
    std::vector<int> unmatched;
    for (const auto& [id, r] : tracks) {
      if (!gt.contains(id)) unmatched.push_back(id);
    }
    std::vector<int> missing;
    for (const auto& [id, r] : gt) {
      if (!tracks.contains(id)) missing.push_back(id);
    }
    if (!unmatched.empty() || !missing.empty()) {
      for (int id : unmatched) err << "error: track " << id << " has no ground truth\n";
      for (int id : missing) err << "error: ground truth " << id << " has no track\n";
      return kExitUsage;
    }
    if (tracks.empty()) {
      err << "error: no tracks found in '" << opt.tracks.string() << "'\n";
      return kExitUsage;
    }

    std::vector<EvalEntry> entries;
    double horizon = 0.0;
    for (const auto& [id, r] : tracks) {
      const TrackRecord& g = gt.at(id);
      horizon = std::max(horizon, g.age_s());
      if (r.states.empty()) {
        EvalEntry e;
        e.feature_id = id;
        e.reason = r.reason == TerminationReason::None ? TerminationReason::InitStarved : r.reason;
        e.mean_err_px = std::nan("");
        e.outlier = true;
        entries.push_back(e);
        continue;
      }
      entries.push_back(trajectory_error(r, g, cfg.outlier_px));
    }
    if (!(horizon > 0.0)) horizon = 1.0;
    const std::vector<CdfSample> cdf = feature_age_cdf(entries, cfg.outlier_px, horizon);

    ensure_dir(opt.out);
    {
      std::ofstream out = open_out(opt.out / "metrics.csv");
      write_metrics(out, entries);
    }
    {
      std::ofstream out = open_out(opt.out / "cdf.csv");
      write_cdf(out, cdf);
    }
    std::size_t survived = 0;
    double err_sum = 0.0;
    std::size_t err_n = 0;
    for (const EvalEntry& e : entries) {
      if (!lost_at(e, cfg.outlier_px)) ++survived;
      if (std::isfinite(e.mean_err_px)) {
        err_sum += e.mean_err_px;
        ++err_n;
      }
    }
    log << "features " << entries.size() << ", survived " << survived << ", mean error "
        << (err_n ? err_sum / static_cast<double>(err_n) : 0.0) << " px over horizon " << horizon << " s\n";
    return kExitOk;
  });
}

std::vector<BenchRow> bench_solver_paths(const BenchOptions& opt) {
  Config base = load_optional_config(opt.config);
  std::vector<SolverMode> modes;
  if (opt.mode == "both") {
    modes = {SolverMode::Incremental, SolverMode::Full};
  } else {
    modes = {parse_solver_mode(opt.mode)};
  }
  if (opt.repeats < 1) throw Error(ErrorKind::Config, "bench repeats must be >= 1");

  // Standard workload: one feature on the star grid under combined motion.
  StarGrid grid;
  SyntheticScene scene = star_grid_scene(grid, {120.0, 90.0}, base.width, base.height);
  scene.noise_rate = 2000.0;
  const MotionProfile motion({{1.0, 30.0, -10.0, 20.0, 0.0}});
  const std::vector<Event> events = generate_synthetic_events(scene, motion, opt.rng_seed);
  const FeatureState seed{80.0, 90.0, 0.0};

  std::vector<std::vector<double>> samples(modes.size());
  // Repeats interleave the paths so slow drifts in machine load hit both.
  for (int r = 0; r < opt.repeats; ++r) {
    for (std::size_t m = 0; m < modes.size(); ++m) {
      Config cfg = base;
      cfg.mode = modes[m];
      FeatureTracker tracker(0, seed, 0, cfg);
      for (const Event& e : events) {
        const StepOutcome o = tracker.feed(e);
        if (o.kind == StepKind::StateUpdated) samples[m].push_back(o.diag.wall_us);
        if (tracker.status() == TrackStatus::Terminated) break;
      }
    }
  }
  std::vector<BenchRow> rows;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const auto& v = samples[m];
    BenchRow row;
    row.mode = to_string(modes[m]);
    row.events = static_cast<std::int64_t>(v.size());
    row.mean_us = v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    row.median_us = median(v);
    rows.push_back(row);
  }
  return rows;
}

int run_bench(const BenchOptions& opt, std::ostream& log, std::ostream& err) {
  if (opt.config && !require_file(*opt.config, "config file", err)) return kExitUsage;
  if (opt.mode != "both" && opt.mode != "incremental" && opt.mode != "full") {
    err << "error: --mode must be incremental, full or both\n";
    return kExitUsage;
  }
  return guarded(err, [&] {
    const std::vector<BenchRow> rows = bench_solver_paths(opt);
    std::string csv = "mode,events,mean_us,median_us\n";
    char buf[128];
    for (const BenchRow& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%lld,%.4f,%.4f\n", r.mode.c_str(),
                    static_cast<long long>(r.events), r.mean_us, r.median_us);
      csv += buf;
    }
    if (opt.out) {
      ensure_dir(*opt.out);
      std::ofstream out = open_out(*opt.out / "bench.csv");
      out << csv;
    }
    log << csv;
    return kExitOk;
  });
}

int run_selftest(std::uint64_t rng_seed, std::ostream& log) {
  bool ok = true;
  char buf[256];
  auto report = [&](const char* name, bool pass, const char* detail) {
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, "%-26s %s  %s\n", name, pass ? "PASS" : "FAIL", detail);
    log << buf << std::flush;
  };
  char d[192];

  const SplatCheck sc = check_splat_conservation(rng_seed);
  std::snprintf(d, sizeof d, "splats=%lld max_mass_err=%.3g min_w=%.3g",
                static_cast<long long>(sc.splats), sc.max_mass_error, sc.min_weight);
  report("splat-conservation", sc.max_mass_error <= 1e-12 && sc.min_weight >= 0.0, d);

  const JacobianCheck jc = check_jacobian_fd(rng_seed);
  std::snprintf(d, sizeof d, "instances=%d rows=%lld global=%.3g local=%.3g", jc.instances,
                static_cast<long long>(jc.rows), jc.max_rel_error_global, jc.max_rel_error_local);
  report("jacobian-fd", std::max(jc.max_rel_error_global, jc.max_rel_error_local) < 1e-4, d);

  const OptimalityCheck lc = check_step_optimality(rng_seed);
  std::snprintf(d, sizeof d, "instances=%d max_excess=%.3g perfect=%.3g", lc.instances,
                lc.max_excess, lc.perfect_alignment);
  report("closed-form-grid-search", lc.max_excess <= 1e-8 && lc.perfect_alignment < 1e-10, d);

  const DriftCheck dc = check_incremental_drift(rng_seed);
  std::snprintf(d, sizeof d, "events=%lld max_rel=%.3g drift=%.3g max|S|=%d",
                static_cast<long long>(dc.events), dc.max_rel_error, dc.final_drift,
                dc.max_gradient_pixels);
  report("incremental-drift",
         dc.max_rel_error <= 1e-9 && dc.final_drift < 1e-6 && dc.max_gradient_pixels <= 12, d);

  const PathCheck pc = check_solver_paths(rng_seed);
  std::snprintf(d, sizeof d, "steps=%lld max_diff=%.3g", static_cast<long long>(pc.steps),
                pc.max_state_diff);
  report("solver-path-equivalence", pc.steps >= 10000 && pc.max_state_diff <= 1e-6, d);

  return ok ? kExitOk : kExitFailure;
}

}  // namespace eecc
