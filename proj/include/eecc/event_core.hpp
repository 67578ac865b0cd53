#pragma once

// Geometry and accumulation primitives shared by the tracker: events,
// Euclidean feature states, bilinear splatting into square patches and the
// fixed-capacity event ring.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "eecc/errors.hpp"

namespace eecc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Microseconds since the stream origin.
using TimeUs = std::int64_t;

inline double us_to_seconds(TimeUs t) { return static_cast<double>(t) * 1e-6; }
TimeUs seconds_to_us(double seconds);

struct Event {
  TimeUs t = 0;
  double x = 0.0;
  double y = 0.0;
  std::int8_t polarity = 1;  // +1 / -1, ignored by every density computation

  Vec2 position() const { return {x, y}; }
  double seconds() const { return us_to_seconds(t); }
  bool operator==(const Event&) const = default;
};

/// Euclidean warp of a feature patch: centre in image coordinates plus the
/// patch orientation. theta is kept in (-pi, pi].
struct FeatureState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 center() const { return {x, y}; }
  bool operator==(const FeatureState&) const = default;
};

double wrap_angle(double theta);

Mat2 rotation_matrix(double theta);

/// x' = R^T(theta) (x - x_F)
Vec2 warp_to_template(const Vec2& x, const FeatureState& s);

/// x = R(theta) x' + x_F
Vec2 warp_from_template(const Vec2& x_template, const FeatureState& s);

/// d warp_to_template(n, s) / d s, columns ordered (x_F, y_F, theta).
Mat23 warp_jacobian(const Vec2& n, const FeatureState& s);

/// Closed Euclidean ball of radius N around the feature centre.
bool in_neighborhood(const Vec2& x, const FeatureState& s, int radius);

/// Four-pixel bilinear neighbourhood of a real point. Weights are ordered
/// {n, n+v1, n+v2, n+v1+v2} with v1 the x axis and n = floor(x).
struct BilinearWeights {
  int base_x = 0;
  int base_y = 0;
  std::array<double, 4> w{};

  static constexpr std::array<int, 4> dx{0, 1, 0, 1};
  static constexpr std::array<int, 4> dy{0, 0, 1, 1};
};

BilinearWeights bilinear_weights(const Vec2& x);

/// In-bounds pixels touched by one splat (flat indices and the weight added).
struct SplatFootprint {
  std::array<int, 4> index{};
  std::array<double, 4> weight{};
  int count = 0;

  bool empty() const { return count == 0; }
};

/// Square (2N+1)x(2N+1) grid addressed by integer offsets in [-N, N]^2,
/// stored row-major (y major, x minor).
class PatchGrid {
 public:
  explicit PatchGrid(int radius);

  int radius() const { return radius_; }
  int side() const { return 2 * radius_ + 1; }
  std::size_t size() const { return values_.size(); }

  bool contains(int ox, int oy) const {
    return ox >= -radius_ && ox <= radius_ && oy >= -radius_ && oy <= radius_;
  }
  int index(int ox, int oy) const { return (oy + radius_) * side() + (ox + radius_); }
  int offset_x(int index) const { return index % side() - radius_; }
  int offset_y(int index) const { return index / side() - radius_; }

  double at(int ox, int oy) const { return values_[static_cast<std::size_t>(index(ox, oy))]; }
  double& at(int ox, int oy) { return values_[static_cast<std::size_t>(index(ox, oy))]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double sum() const;
  void fill(double v);

  /// Bilinear interpolation; zero for points outside [-N, N]^2.
  double sample(const Vec2& x) const;

 private:
  int radius_;
  std::vector<double> values_;
};

/// Event-density accumulator (template and model windows). Entries only ever
/// receive non-negative bilinear weights.
class DensityMap : public PatchGrid {
 public:
  explicit DensityMap(int radius) : PatchGrid(radius) {}

  /// Adds a unit event at x (map frame). Contributions landing outside the
  /// support are dropped.
  SplatFootprint splat(const Vec2& x);
};

/// FIFO of the 2M+1 most recent accepted events.
class EventBuffer {
 public:
  explicit EventBuffer(std::size_t capacity);

  std::size_t capacity() const { return slots_.size(); }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  bool full() const { return size_ == slots_.size(); }

  /// Appends e and returns the evicted oldest event when the ring was full.
  /// Throws Error(OutOfOrder) without mutating if e is older than newest().
  std::optional<Event> push(const Event& e);

  /// i = 0 is the oldest event.
  const Event& operator[](std::size_t i) const {
    std::size_t k = head_ + i;
    if (k >= slots_.size()) k -= slots_.size();
    return slots_[k];
  }
  const Event& oldest() const { return (*this)[0]; }
  const Event& newest() const { return (*this)[size_ - 1]; }

  /// Index of the central event (M for a full 2M+1 ring).
  std::size_t central_index() const { return capacity() / 2; }
  const Event& central() const { return (*this)[central_index()]; }

  void clear();

 private:
  std::vector<Event> slots_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

}  // namespace eecc
