#pragma once

// Plain-text formats: "t x y p" event streams, "t x y [label]" seed lists,
// per-feature track CSVs and "key = value" configuration files.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eecc/config.hpp"
#include "eecc/event_core.hpp"
#include "eecc/tracker.hpp"

namespace eecc {

struct StreamHeader {
  int width = 240;
  int height = 180;
  double time_origin_s = 0.0;

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x < width && y < height;
  }
};

StreamHeader header_from(const Config& config);

enum class TimestampPolicy {
  Skip,    // drop events older than the last one yielded and count them
  Strict,  // throw Error(OutOfOrder)
};

/// Decimal seconds to integer microseconds without going through binary
/// floating point when the text has at most six fractional digits.
TimeUs parse_timestamp_us(std::string_view text);

/// Streaming reader; holds one line at a time.
class EventReader {
 public:
  explicit EventReader(std::istream& in, StreamHeader header = {},
                       TimestampPolicy policy = TimestampPolicy::Skip);

  /// Next event in file order, or nullopt at end of input. Throws
  /// Error(Parse) naming the line for malformed input.
  std::optional<Event> next();

  std::int64_t line_number() const { return line_no_; }
  std::int64_t skipped_out_of_order() const { return skipped_order_; }
  std::int64_t skipped_out_of_bounds() const { return skipped_bounds_; }

 private:
  std::istream& in_;
  StreamHeader header_;
  TimestampPolicy policy_;
  std::string line_;
  std::int64_t line_no_ = 0;
  std::int64_t skipped_order_ = 0;
  std::int64_t skipped_bounds_ = 0;
  std::optional<TimeUs> last_t_;
};

/// Parses one "t x y p" line. Throws Error(Parse) mentioning line_no.
Event parse_event_line(std::string_view line, std::int64_t line_no);

struct SeedSpec {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::string label;

  TimeUs t_us() const { return seconds_to_us(t); }
  FeatureState state() const { return {x, y, 0.0}; }
};

struct SeedList {
  std::vector<SeedSpec> seeds;        // sorted by t (stable)
  std::vector<std::string> rejected;  // one message per dropped line
};

SeedList parse_seeds(std::istream& in, const StreamHeader& header);

inline constexpr std::string_view kTrackCsvHeader = "feature_id,t_us,x,y,theta_rad";

/// Writes track rows to one sink, emitting the CSV header only before the
/// first record.
class TrackWriter {
 public:
  explicit TrackWriter(std::ostream& out) : out_(out) {}

  /// Returns the number of bytes written. Throws Error(Io) on sink failure.
  std::size_t write(const TrackRecord& record);

 private:
  std::ostream& out_;
  bool header_written_ = false;
};

std::size_t write_track(std::ostream& out, const TrackRecord& record);

std::vector<TrackRecord> read_tracks(std::istream& in);

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// "key = value" lines; '#' starts a comment. Throws Error(Parse).
std::vector<KeyValue> parse_key_values(std::istream& in);

double parse_double(const KeyValue& kv);
int parse_int(const KeyValue& kv);

/// Unknown keys and invariant violations throw Error(Config).
Config load_config(std::istream& in);
Config load_config_file(const std::filesystem::path& path);

}  // namespace eecc
