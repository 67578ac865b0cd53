#include "eecc/event_core.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace eecc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateModel: return "degenerate_model";
    case ErrorKind::DegenerateWindow: return "degenerate_window";
    case ErrorKind::SolverDegenerate: return "solver_degenerate";
    case ErrorKind::ContractViolation: return "contract_violation";
    case ErrorKind::InitStarved: return "init_starved";
    case ErrorKind::OutOfOrder: return "out_of_order";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

TimeUs seconds_to_us(double seconds) { return std::llround(seconds * 1e6); }

double wrap_angle(double theta) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Mat2 rotation_matrix(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat2 r;
  r << c, -s,
       s, c;
  return r;
}

Vec2 warp_to_template(const Vec2& x, const FeatureState& s) {
  return rotation_matrix(s.theta).transpose() * (x - s.center());
}

Vec2 warp_from_template(const Vec2& x_template, const FeatureState& s) {
  return rotation_matrix(s.theta) * x_template + s.center();
}

Mat23 warp_jacobian(const Vec2& n, const FeatureState& s) {
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  const Vec2 d = n - s.center();
  // R^T = [[c, s], [-s, c]];  dR^T/dtheta = [[-s, c], [-c, -s]]
  Mat23 w;
  w << -c, -sn, -sn * d.x() + c * d.y(),
        sn, -c, -c * d.x() - sn * d.y();
  return w;
}

bool in_neighborhood(const Vec2& x, const FeatureState& s, int radius) {
  const double dx = x.x() - s.x;
  const double dy = x.y() - s.y;
  const double r = static_cast<double>(radius);
  return dx * dx + dy * dy <= r * r;
}

BilinearWeights bilinear_weights(const Vec2& x) {
  const double fx = std::floor(x.x());
  const double fy = std::floor(x.y());
  const double ax = x.x() - fx;
  const double ay = x.y() - fy;
  BilinearWeights b;
  b.base_x = static_cast<int>(fx);
  b.base_y = static_cast<int>(fy);
  b.w = {(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay};
  return b;
}

PatchGrid::PatchGrid(int radius)
    : radius_(radius),
      values_(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)), 0.0) {
  if (radius < 0) throw Error(ErrorKind::ContractViolation, "negative patch radius");
}

double PatchGrid::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

void PatchGrid::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

double PatchGrid::sample(const Vec2& x) const {
  const double r = static_cast<double>(radius_);
  if (!(x.x() >= -r && x.x() <= r && x.y() >= -r && x.y() <= r)) return 0.0;
  const BilinearWeights b = bilinear_weights(x);
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    const int ox = b.base_x + BilinearWeights::dx[k];
    const int oy = b.base_y + BilinearWeights::dy[k];
    // Corners past the border only occur with zero weight.
    if (contains(ox, oy)) acc += b.w[k] * at(ox, oy);
  }
  return acc;
}

SplatFootprint DensityMap::splat(const Vec2& x) {
  SplatFootprint fp;
  const BilinearWeights b = bilinear_weights(x);
  for (int k = 0; k < 4; ++k) {
    const int ox = b.base_x + BilinearWeights::dx[k];
    const int oy = b.base_y + BilinearWeights::dy[k];
    if (!contains(ox, oy)) continue;
    const int i = index(ox, oy);
    (*this)[static_cast<std::size_t>(i)] += b.w[k];
    fp.index[fp.count] = i;
    fp.weight[fp.count] = b.w[k];
    ++fp.count;
  }
  return fp;
}

EventBuffer::EventBuffer(std::size_t capacity) : slots_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::ContractViolation, "event buffer capacity must be positive");
}

std::optional<Event> EventBuffer::push(const Event& e) {
  if (size_ > 0 && e.t < newest().t) {
    throw Error(ErrorKind::OutOfOrder,
                "event at " + std::to_string(e.t) + " us is older than buffer head " +
                    std::to_string(newest().t) + " us");
  }
  if (full()) {
    Event evicted = slots_[head_];
    slots_[head_] = e;
    head_ = (head_ + 1) % slots_.size();
    return evicted;
  }
  slots_[(head_ + size_) % slots_.size()] = e;
  ++size_;
  return std::nullopt;
}

void EventBuffer::clear() {
  head_ = 0;
  size_ = 0;
}

}  // namespace eecc
