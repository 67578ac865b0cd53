#pragma once

// ECC alignment between a persistent event template and the instantaneous
// model window, solved in closed form one Gauss-Newton step at a time.
//
// Two formulations live here:
//
//  * the image-frame one (sample_template / warp_template / build_jacobian),
//    where the template is resampled at x'_m(s) = R^T(theta)(n_m - x_F) for
//    every model pixel and derivatives are taken w.r.t. the global state;
//  * the feature-frame one used by the tracker (EccCache), where the model
//    grid is anchored at the current state so that x'_m(s_k) is exactly the
//    lattice offset o_m. Jacobian rows are then taken w.r.t. increments
//    expressed in the feature frame, (dx', dy', dtheta) with
//    dx = R(theta) dx'. Rows depend on the template alone, so only rows
//    touched by a template splat ever change.
//
// The closed-form minimiser is invariant to that change of parameters.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "eecc/event_core.hpp"

namespace eecc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using JacobianMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Model window rebuilt from the whole event ring. Events are mapped into the
/// feature frame of `frame` (x' = R^T(theta)(e - x_F)) and splatted.
class ModelWindow {
 public:
  explicit ModelWindow(int radius);

  /// Throws Error(DegenerateModel) when no event lands inside the window.
  void rebuild(const EventBuffer& buffer, const FeatureState& frame);

  int radius() const { return density_.radius(); }
  const DensityMap& density() const { return density_; }
  std::span<const double> values() const { return density_.values(); }
  /// Flat indices of pixels with non-zero density, ascending.
  std::span<const int> active() const { return active_; }
  const FeatureState& frame() const { return frame_; }
  double norm_sq() const { return norm_sq_; }

  /// Image position of a model pixel.
  Vec2 pixel_position(int index) const;

 private:
  DensityMap density_;
  std::vector<int> active_;
  FeatureState frame_;
  double norm_sq_ = 0.0;
};

ModelWindow build_model_window(const EventBuffer& buffer, const FeatureState& s, int radius);

/// Bilinear template read-out; zero outside [-N, N]^2.
double sample_template(const DensityMap& tmpl, const Vec2& x_template);

struct TemplateGradient {
  PatchGrid gx;
  PatchGrid gy;
};

/// Central differences with replicated borders.
TemplateGradient template_gradient(const PatchGrid& tmpl);

/// Per-model-pixel template values. Entries for active model pixels are
/// resampled at x'_m(s); inactive entries keep whatever they held before.
using WarpedTemplate = std::vector<double>;

void warp_template(const DensityMap& tmpl, const FeatureState& s, const ModelWindow& model,
                   WarpedTemplate& t);

/// Image-frame Jacobian of the warped template w.r.t. (x_F, y_F, theta).
/// Row m is grad T(x'_m(s)) * W_m; rows of inactive model pixels are zero.
JacobianMatrix build_jacobian(const TemplateGradient& grad, const FeatureState& s,
                              const ModelWindow& model);

/// Feature-frame Jacobian row for a model pixel at lattice offset (ox, oy):
/// [-gx, -gy, gx*oy - gy*ox].
inline Vec3 feature_frame_row(double gx, double gy, int ox, int oy) {
  return {-gx, -gy, gx * oy - gy * ox};
}

/// || t/|t| - m/|m| ||^2. Throws Error(DegenerateWindow) on a zero vector.
double ecc_cost(std::span<const double> t, std::span<const double> m);

/// The normal-equation quantities the closed-form step needs.
struct NormalTerms {
  Mat3 C = Mat3::Zero();       // J^T J
  Vec3 p_t = Vec3::Zero();     // J^T t
  double t_norm_sq = 0.0;      // |t|^2
};

NormalTerms refresh_cache_full(const JacobianMatrix& J, std::span<const double> t);

/// One row of J / entry of t being replaced.
struct RowChange {
  int row = 0;
  Vec3 old_j = Vec3::Zero();
  double old_t = 0.0;
  Vec3 new_j = Vec3::Zero();
  double new_t = 0.0;
};

/// Replaces the contribution of the listed rows: new = old + new rows - old rows.
/// Throws Error(ContractViolation) for a row outside [0, row_count).
void update_cache_incremental(NormalTerms& terms, std::span<const RowChange> changes,
                              int row_count);

/// Model-dependent inputs of the step: <t, m_hat> and J^T m_hat.
struct ModelProjection {
  double t_dot_m = 0.0;
  Vec3 p_m = Vec3::Zero();
};

struct StepResult {
  Vec3 delta = Vec3::Zero();
  double lambda = 0.0;
  double rho = 0.0;
};

/// Largest accepted condition number of C.
inline constexpr double kMaxConditionNumber = 1e8;
inline constexpr double kMinLambdaDenominator = 1e-12;

/// Closed-form minimiser of the linearised ECC criterion:
///   lambda = (|t|^2 - p_t^T C^-1 p_t) / (<t, m_hat> - p_t^T C^-1 p_m)
///   delta  = C^-1 (lambda p_m - p_t)
/// Throws Error(SolverDegenerate) if C is ill-conditioned, |t|^2 does not
/// exceed p_t^T C^-1 p_t, or the lambda denominator is not positive (no
/// finite minimiser exists then).
StepResult closed_form_step(const NormalTerms& terms, const ModelProjection& proj);

/// Dense convenience overload; m_hat must already be unit length.
StepResult closed_form_step(const JacobianMatrix& J, std::span<const double> t,
                            std::span<const double> m_hat);

/// Value of the linearised criterion || (t+J d)/|t+J d| - m_hat ||^2.
double linearized_cost(const JacobianMatrix& J, std::span<const double> t,
                       std::span<const double> m_hat, const Vec3& delta);

/// Pixels affected by one template splat.
class ChangeSet {
 public:
  static constexpr int kMaxDensity = 4;
  static constexpr int kMaxGradient = 12;
  static constexpr int kMaxRows = kMaxDensity + kMaxGradient;

  ChangeSet() = default;

  /// Derives the gradient set S and the affected rows from the template
  /// pixels whose density changed. Throws Error(ContractViolation) if a pixel
  /// lies outside the grid or |S| exceeds 12.
  ChangeSet(const PatchGrid& grid, std::span<const int> density_changed);

  std::span<const int> density() const { return {density_.data(), static_cast<std::size_t>(n_density_)}; }
  std::span<const int> gradient() const { return {gradient_.data(), static_cast<std::size_t>(n_gradient_)}; }
  /// Rows of the feature-frame Jacobian / warped template that must be redone.
  std::span<const int> rows() const { return {rows_.data(), static_cast<std::size_t>(n_rows_)}; }

  bool empty() const { return n_density_ == 0; }

 private:
  std::array<int, kMaxDensity> density_{};
  std::array<int, kMaxGradient> gradient_{};
  std::array<int, kMaxRows> rows_{};
  int n_density_ = 0;
  int n_gradient_ = 0;
  int n_rows_ = 0;
};

/// Template, its gradients, the feature-frame Jacobian, the warped template
/// vector and the normal terms for one tracked feature.
class EccCache {
 public:
  explicit EccCache(DensityMap tmpl);

  int radius() const { return template_.radius(); }
  const DensityMap& template_map() const { return template_; }
  const TemplateGradient& gradient() const { return grad_; }
  const JacobianMatrix& jacobian() const { return J_; }
  std::span<const double> warped_template() const { return t_; }
  const NormalTerms& terms() const { return terms_; }

  /// Splats a feature-frame point into the template. Only the template map is
  /// touched; call apply_incremental or refresh_full afterwards.
  ChangeSet splat_template(const Vec2& x_template);

  /// Redoes gradients and rows named by `changes` and folds the difference
  /// into the normal terms.
  void apply_incremental(const ChangeSet& changes);

  /// Recomputes gradients, every Jacobian row, t and the normal terms.
  void refresh_full();

  ModelProjection project(const ModelWindow& model) const;

 private:
  void refresh_gradient_at(int index);
  Vec3 row_at(int index) const;

  DensityMap template_;
  TemplateGradient grad_;
  JacobianMatrix J_;
  WarpedTemplate t_;
  NormalTerms terms_;
  std::vector<RowChange> scratch_;
};

}  // namespace eecc
