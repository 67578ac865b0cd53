#include "eecc/streams_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace eecc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits on runs of whitespace (and commas when `commas` is set).
std::vector<std::string_view> split(std::string_view s, bool commas = false) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [&](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || (commas && c == ',');
  };
  while (i < s.size()) {
    while (i < s.size() && is_sep(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_sep(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

bool to_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

template <typename Int>
bool to_int(std::string_view s, Int& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

[[noreturn]] void parse_fail(std::int64_t line_no, const std::string& msg) {
  throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + msg);
}

bool skip_line(std::string_view s) { return s.empty() || s.front() == '#'; }

}  // namespace

StreamHeader header_from(const Config& config) {
  StreamHeader h;
  h.width = config.width;
  h.height = config.height;
  return h;
}

TimeUs parse_timestamp_us(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw Error(ErrorKind::Parse, "empty timestamp");
  const bool plain = std::all_of(text.begin(), text.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  });
  const auto dot = text.find('.');
  if (plain && std::count(text.begin(), text.end(), '.') <= 1) {
    const std::string_view whole = text.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() && frac.empty()) throw Error(ErrorKind::Parse, "bad timestamp '" + std::string(text) + "'");
    TimeUs seconds = 0;
    if (!whole.empty() && !to_int(whole, seconds)) {
      throw Error(ErrorKind::Parse, "bad timestamp '" + std::string(text) + "'");
    }
    TimeUs micros = 0;
    bool round_up = false;
    for (std::size_t i = 0; i < 6; ++i) {
      micros = micros * 10 + (i < frac.size() ? frac[i] - '0' : 0);
    }
    if (frac.size() > 6) round_up = frac[6] >= '5';
    return seconds * 1'000'000 + micros + (round_up ? 1 : 0);
  }
  double v = 0.0;
  if (!to_double(text, v) || v < 0.0) {
    throw Error(ErrorKind::Parse, "bad timestamp '" + std::string(text) + "'");
  }
  return seconds_to_us(v);
}

Event parse_event_line(std::string_view line, std::int64_t line_no) {
  const auto fields = split(line);
  if (fields.size() != 4) parse_fail(line_no, "expected 't x y p', got '" + std::string(line) + "'");
  Event e;
  try {
    e.t = parse_timestamp_us(fields[0]);
  } catch (const Error& err) {
    parse_fail(line_no, err.what());
  }
  if (!to_double(fields[1], e.x) || !to_double(fields[2], e.y)) {
    parse_fail(line_no, "bad pixel coordinate in '" + std::string(line) + "'");
  }
  if (fields[3] == "1") {
    e.polarity = 1;
  } else if (fields[3] == "0") {
    e.polarity = -1;
  } else {
    parse_fail(line_no, "polarity must be 0 or 1, got '" + std::string(fields[3]) + "'");
  }
  return e;
}

EventReader::EventReader(std::istream& in, StreamHeader header, TimestampPolicy policy)
    : in_(in), header_(header), policy_(policy) {}

std::optional<Event> EventReader::next() {
  while (std::getline(in_, line_)) {
    ++line_no_;
    const std::string_view s = trim(line_);
    if (skip_line(s)) continue;
    Event e = parse_event_line(s, line_no_);
    e.t -= seconds_to_us(header_.time_origin_s);
    if (e.t < 0) parse_fail(line_no_, "timestamp precedes the stream origin");
    if (last_t_ && e.t < *last_t_) {
      if (policy_ == TimestampPolicy::Strict) {
        throw Error(ErrorKind::OutOfOrder,
                    "line " + std::to_string(line_no_) + ": timestamp goes backwards");
      }
      ++skipped_order_;
      continue;
    }
    if (!header_.contains(e.x, e.y)) {
      ++skipped_bounds_;
      continue;
    }
    last_t_ = e.t;
    return e;
  }
  if (in_.bad()) throw Error(ErrorKind::Io, "read failure after line " + std::to_string(line_no_));
  return std::nullopt;
}

SeedList parse_seeds(std::istream& in, const StreamHeader& header) {
  SeedList out;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view s = trim(line);
    if (skip_line(s)) continue;
    const auto f = split(s);
    if (f.size() < 3 || f.size() > 4) parse_fail(line_no, "expected 't x y [label]'");
    SeedSpec seed;
    if (!to_double(f[0], seed.t) || seed.t < 0.0 || !to_double(f[1], seed.x) ||
        !to_double(f[2], seed.y)) {
      parse_fail(line_no, "malformed seed '" + std::string(s) + "'");
    }
    if (f.size() == 4) seed.label = std::string(f[3]);
    if (!header.contains(seed.x, seed.y)) {
      out.rejected.push_back("line " + std::to_string(line_no) + ": seed (" + std::string(f[1]) +
                             ", " + std::string(f[2]) + ") outside the " +
                             std::to_string(header.width) + "x" + std::to_string(header.height) +
                             " sensor");
      continue;
    }
    out.seeds.push_back(std::move(seed));
  }
  std::stable_sort(out.seeds.begin(), out.seeds.end(),
                   [](const SeedSpec& a, const SeedSpec& b) { return a.t < b.t; });
  return out;
}

std::size_t TrackWriter::write(const TrackRecord& record) {
  std::size_t bytes = 0;
  auto emit = [&](std::string_view s) {
    out_ << s;
    bytes += s.size();
  };
  if (!header_written_) {
    emit(kTrackCsvHeader);
    emit("\n");
    header_written_ = true;
  }
  char buf[160];
  for (const TrackSample& s : record.states) {
    const int n = std::snprintf(buf, sizeof buf, "%d,%lld,%.9f,%.9f,%.9f\n", record.feature_id,
                                static_cast<long long>(s.t), s.state.x, s.state.y, s.state.theta);
    emit(std::string_view(buf, static_cast<std::size_t>(n)));
  }
  const int n = std::snprintf(buf, sizeof buf, "%d,end,%s,,\n", record.feature_id,
                              to_string(record.reason));
  emit(std::string_view(buf, static_cast<std::size_t>(n)));
  if (!out_) throw Error(ErrorKind::Io, "track sink failed");
  return bytes;
}

std::size_t write_track(std::ostream& out, const TrackRecord& record) {
  TrackWriter w(out);
  return w.write(record);
}

std::vector<TrackRecord> read_tracks(std::istream& in) {
  std::vector<TrackRecord> out;
  std::map<int, std::size_t> open;  // feature id -> index of an unterminated record
  std::string line;
  std::int64_t line_no = 0;
  auto record_for = [&](int id) -> TrackRecord& {
    auto it = open.find(id);
    if (it == open.end()) {
      out.push_back(TrackRecord{id, {}, TerminationReason::None});
      it = open.emplace(id, out.size() - 1).first;
    }
    return out[it->second];
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view s = trim(line);
    if (skip_line(s) || s.starts_with("feature_id")) continue;
    const auto f = split_csv(s);
    if (f.size() != 5) parse_fail(line_no, "expected 5 CSV fields");
    int id = 0;
    if (!to_int(f[0], id)) parse_fail(line_no, "bad feature id");
    if (f[1] == "end") {
      try {
        record_for(id).reason = parse_termination_reason(std::string(f[2]));
      } catch (const Error& err) {
        parse_fail(line_no, err.what());
      }
      open.erase(id);
      continue;
    }
    TrackSample sample;
    long long t = 0;
    if (!to_int(f[1], t) || !to_double(f[2], sample.state.x) || !to_double(f[3], sample.state.y) ||
        !to_double(f[4], sample.state.theta)) {
      parse_fail(line_no, "malformed track row");
    }
    sample.t = t;
    record_for(id).states.push_back(sample);
  }
  return out;
}

std::vector<KeyValue> parse_key_values(std::istream& in) {
  std::vector<KeyValue> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) parse_fail(line_no, "expected 'key = value'");
    KeyValue kv{std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))), line_no};
    if (kv.key.empty() || kv.value.empty()) parse_fail(line_no, "expected 'key = value'");
    out.push_back(std::move(kv));
  }
  return out;
}

double parse_double(const KeyValue& kv) {
  double v = 0.0;
  if (!to_double(kv.value, v)) {
    throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": '" + kv.key +
                                       "' expects a number, got '" + kv.value + "'");
  }
  return v;
}

int parse_int(const KeyValue& kv) {
  int v = 0;
  if (!to_int(std::string_view(kv.value), v)) {
    throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": '" + kv.key +
                                       "' expects an integer, got '" + kv.value + "'");
  }
  return v;
}

Config load_config(std::istream& in) {
  Config cfg;
  for (const KeyValue& kv : parse_key_values(in)) {
    const std::string& k = kv.key;
    if (k == "patch_radius") cfg.patch_radius = parse_int(kv);
    else if (k == "buffer_events") cfg.buffer_events = parse_int(kv);
    else if (k == "clamp_px") cfg.clamp_px = parse_double(kv);
    else if (k == "clamp_deg") cfg.clamp_deg = parse_double(kv);
    else if (k == "rho_floor") cfg.rho_floor = parse_double(kv);
    else if (k == "rho_patience") cfg.rho_patience = parse_int(kv);
    else if (k == "idle_timeout_s") cfg.idle_timeout_s = parse_double(kv);
    else if (k == "refresh_every") cfg.refresh_every = parse_int(kv);
    else if (k == "outlier_px") cfg.outlier_px = parse_double(kv);
    else if (k == "width") cfg.width = parse_int(kv);
    else if (k == "height") cfg.height = parse_int(kv);
    else if (k == "solver") {
      try {
        cfg.mode = parse_solver_mode(kv.value);
      } catch (const Error& err) {
        throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": " + err.what());
      }
    } else {
      throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
    }
  }
  cfg.validate();
  return cfg;
}

Config load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path.string() + "'");
  return load_config(in);
}

// ---------------------------------------------------------------------------
// Config

const char* to_string(SolverMode mode) {
  return mode == SolverMode::Full ? "full" : "incremental";
}

SolverMode parse_solver_mode(const std::string& text) {
  if (text == "incremental") return SolverMode::Incremental;
  if (text == "full") return SolverMode::Full;
  throw Error(ErrorKind::Config, "solver mode must be 'incremental' or 'full', got '" + text + "'");
}

void Config::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
  if (patch_radius < 2) fail("patch_radius must be >= 2 (got " + std::to_string(patch_radius) + ")");
  if (buffer_events < 9) fail("buffer_events must be >= 9 (got " + std::to_string(buffer_events) + ")");
  if (buffer_events % 2 == 0) fail("buffer_events must be odd (2M+1), got " + std::to_string(buffer_events));
  if (!(outlier_px > 0.0)) fail("outlier_px must be positive");
  if (!(clamp_px >= 0.0) || !(clamp_deg >= 0.0)) fail("clamp limits must be non-negative");
  if (!(idle_timeout_s > 0.0)) fail("idle_timeout_s must be positive");
  if (rho_patience < 1) fail("rho_patience must be >= 1");
  if (refresh_every < 0) fail("refresh_every must be >= 0");
  if (width <= 0 || height <= 0) fail("width and height must be positive");
  if (width < 2 * patch_radius + 1 || height < 2 * patch_radius + 1) {
    fail("sensor smaller than one patch");
  }
}

}  // namespace eecc
