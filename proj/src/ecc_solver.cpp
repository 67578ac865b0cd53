#include "eecc/ecc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace eecc {

namespace {

// Central differences with replicated borders at one lattice pixel.
inline void gradient_at(const PatchGrid& g, int ox, int oy, double& gx, double& gy) {
  const int n = g.radius();
  const int xp = std::min(ox + 1, n);
  const int xm = std::max(ox - 1, -n);
  const int yp = std::min(oy + 1, n);
  const int ym = std::max(oy - 1, -n);
  gx = 0.5 * (g.at(xp, oy) - g.at(xm, oy));
  gy = 0.5 * (g.at(ox, yp) - g.at(ox, ym));
}

template <std::size_t Cap>
bool insert_unique(std::array<int, Cap>& arr, int& n, int value) {
  for (int i = 0; i < n; ++i) {
    if (arr[static_cast<std::size_t>(i)] == value) return true;
  }
  if (n >= static_cast<int>(Cap)) return false;
  arr[static_cast<std::size_t>(n++)] = value;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model window

ModelWindow::ModelWindow(int radius) : density_(radius) { active_.reserve(density_.size()); }

void ModelWindow::rebuild(const EventBuffer& buffer, const FeatureState& frame) {
  density_.fill(0.0);
  active_.clear();
  frame_ = frame;

  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const int n = density_.radius();
  const int side = density_.side();
  double* values = density_.values().data();
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    const Event& e = buffer[k];
    const double dx = e.x - frame.x;
    const double dy = e.y - frame.y;
    const Vec2 xp(c * dx + s * dy, -s * dx + c * dy);
    const double fx = std::floor(xp.x());
    const double fy = std::floor(xp.y());
    const int bx = static_cast<int>(fx);
    const int by = static_cast<int>(fy);
    if (bx >= -n && bx < n && by >= -n && by < n) {
      // Whole 2x2 neighbourhood inside the window.
      const double ax = xp.x() - fx;
      const double ay = xp.y() - fy;
      double* p = values + (by + n) * side + (bx + n);
      p[0] += (1.0 - ax) * (1.0 - ay);
      p[1] += ax * (1.0 - ay);
      p[side] += (1.0 - ax) * ay;
      p[side + 1] += ax * ay;
    } else {
      density_.splat(xp);
    }
  }

  const int size = static_cast<int>(density_.size());
  active_.resize(density_.size());
  int* act = active_.data();
  int count = 0;
  double norm = 0.0;
  for (int i = 0; i < size; ++i) {
    const double v = values[i];
    norm += v * v;
    act[count] = i;
    count += v != 0.0 ? 1 : 0;
  }
  active_.resize(static_cast<std::size_t>(count));
  norm_sq_ = norm;
  if (active_.empty()) {
    throw Error(ErrorKind::DegenerateModel, "no buffered event falls inside the model window");
  }
}

Vec2 ModelWindow::pixel_position(int index) const {
  const Vec2 o(density_.offset_x(index), density_.offset_y(index));
  return warp_from_template(o, frame_);
}

ModelWindow build_model_window(const EventBuffer& buffer, const FeatureState& s, int radius) {
  ModelWindow model(radius);
  model.rebuild(buffer, s);
  return model;
}

// ---------------------------------------------------------------------------
// Image-frame formulation

double sample_template(const DensityMap& tmpl, const Vec2& x_template) {
  return tmpl.sample(x_template);
}

TemplateGradient template_gradient(const PatchGrid& tmpl) {
  TemplateGradient g{PatchGrid(tmpl.radius()), PatchGrid(tmpl.radius())};
  const int n = tmpl.radius();
  for (int oy = -n; oy <= n; ++oy) {
    for (int ox = -n; ox <= n; ++ox) {
      gradient_at(tmpl, ox, oy, g.gx.at(ox, oy), g.gy.at(ox, oy));
    }
  }
  return g;
}

void warp_template(const DensityMap& tmpl, const FeatureState& s, const ModelWindow& model,
                   WarpedTemplate& t) {
  t.resize(model.density().size(), 0.0);
  for (int i : model.active()) {
    t[static_cast<std::size_t>(i)] =
        sample_template(tmpl, warp_to_template(model.pixel_position(i), s));
  }
}

JacobianMatrix build_jacobian(const TemplateGradient& grad, const FeatureState& s,
                              const ModelWindow& model) {
  JacobianMatrix J = JacobianMatrix::Zero(static_cast<Eigen::Index>(model.density().size()), 3);
  for (int i : model.active()) {
    const Vec2 n = model.pixel_position(i);
    const Vec2 xp = warp_to_template(n, s);
    const Eigen::RowVector2d g(grad.gx.sample(xp), grad.gy.sample(xp));
    J.row(i) = g * warp_jacobian(n, s);
  }
  return J;
}

// ---------------------------------------------------------------------------
// Criterion and closed-form step

double ecc_cost(std::span<const double> t, std::span<const double> m) {
  if (t.size() != m.size()) throw Error(ErrorKind::ContractViolation, "ecc_cost: size mismatch");
  double tt = 0.0, mm = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tt += t[i] * t[i];
    mm += m[i] * m[i];
  }
  if (!(tt > 0.0) || !(mm > 0.0)) {
    throw Error(ErrorKind::DegenerateWindow, "ecc_cost: zero-norm window");
  }
  const double it = 1.0 / std::sqrt(tt);
  const double im = 1.0 / std::sqrt(mm);
  double cost = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = t[i] * it - m[i] * im;
    cost += d * d;
  }
  return cost;
}

NormalTerms refresh_cache_full(const JacobianMatrix& J, std::span<const double> t) {
  if (static_cast<std::size_t>(J.rows()) != t.size()) {
    throw Error(ErrorKind::ContractViolation, "refresh_cache_full: J and t disagree in length");
  }
  double c00 = 0, c01 = 0, c02 = 0, c11 = 0, c12 = 0, c22 = 0;
  double p0 = 0, p1 = 0, p2 = 0, tn = 0;
  const double* row = J.data();
  for (std::size_t i = 0; i < t.size(); ++i, row += 3) {
    const double a = row[0], b = row[1], c = row[2], v = t[i];
    c00 += a * a; c01 += a * b; c02 += a * c;
    c11 += b * b; c12 += b * c; c22 += c * c;
    p0 += a * v; p1 += b * v; p2 += c * v;
    tn += v * v;
  }
  NormalTerms out;
  out.C << c00, c01, c02,
           c01, c11, c12,
           c02, c12, c22;
  out.p_t << p0, p1, p2;
  out.t_norm_sq = tn;
  return out;
}

void update_cache_incremental(NormalTerms& terms, std::span<const RowChange> changes,
                              int row_count) {
  for (const RowChange& ch : changes) {
    if (ch.row < 0 || ch.row >= row_count) {
      throw Error(ErrorKind::ContractViolation,
                  "stale change set: row " + std::to_string(ch.row) + " outside support");
    }
  }
  for (const RowChange& ch : changes) {
    const Vec3& a = ch.new_j;
    const Vec3& b = ch.old_j;
    for (int r = 0; r < 3; ++r) {
      for (int c = r; c < 3; ++c) {
        const double d = a[r] * a[c] - b[r] * b[c];
        terms.C(r, c) += d;
        if (c != r) terms.C(c, r) = terms.C(r, c);
      }
    }
    terms.p_t += a * ch.new_t - b * ch.old_t;
    terms.t_norm_sq += ch.new_t * ch.new_t - ch.old_t * ch.old_t;
  }
}

StepResult closed_form_step(const NormalTerms& terms, const ModelProjection& proj) {
  if (!(terms.t_norm_sq > 0.0)) {
    throw Error(ErrorKind::SolverDegenerate, "warped template has zero norm");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig;
  eig.computeDirect(terms.C, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev[0] > 0.0) || !(ev[2] < kMaxConditionNumber * ev[0])) {
    throw Error(ErrorKind::SolverDegenerate, "J^T J is singular or ill-conditioned");
  }
  const Mat3 Cinv = terms.C.inverse();
  const Vec3 Cinv_pt = Cinv * terms.p_t;

  const double num = terms.t_norm_sq - terms.p_t.dot(Cinv_pt);
  if (!(num > 1e-12 * terms.t_norm_sq)) {
    throw Error(ErrorKind::SolverDegenerate, "template lies in the span of its Jacobian");
  }
  const double den = proj.t_dot_m - proj.p_m.dot(Cinv_pt);
  if (!(den > kMinLambdaDenominator)) {
    throw Error(ErrorKind::SolverDegenerate, "non-positive lambda denominator");
  }

  StepResult out;
  out.lambda = num / den;
  out.delta = Cinv * (out.lambda * proj.p_m - terms.p_t);
  out.rho = proj.t_dot_m / std::sqrt(terms.t_norm_sq);
  return out;
}

StepResult closed_form_step(const JacobianMatrix& J, std::span<const double> t,
                            std::span<const double> m_hat) {
  if (m_hat.size() != t.size()) {
    throw Error(ErrorKind::ContractViolation, "closed_form_step: size mismatch");
  }
  const NormalTerms terms = refresh_cache_full(J, t);
  const Eigen::Map<const Eigen::VectorXd> tv(t.data(), static_cast<Eigen::Index>(t.size()));
  const Eigen::Map<const Eigen::VectorXd> mv(m_hat.data(), static_cast<Eigen::Index>(m_hat.size()));
  ModelProjection proj;
  proj.t_dot_m = tv.dot(mv);
  proj.p_m = J.transpose() * mv;
  return closed_form_step(terms, proj);
}

double linearized_cost(const JacobianMatrix& J, std::span<const double> t,
                       std::span<const double> m_hat, const Vec3& delta) {
  const Eigen::Map<const Eigen::VectorXd> tv(t.data(), static_cast<Eigen::Index>(t.size()));
  const Eigen::Map<const Eigen::VectorXd> mv(m_hat.data(), static_cast<Eigen::Index>(m_hat.size()));
  const Eigen::VectorXd u = tv + J * delta;
  const double nu = u.norm();
  if (!(nu > 0.0)) throw Error(ErrorKind::DegenerateWindow, "linearised template vanished");
  return (u / nu - mv).squaredNorm();
}

// ---------------------------------------------------------------------------
// Change sets

ChangeSet::ChangeSet(const PatchGrid& grid, std::span<const int> density_changed) {
  const int n = grid.radius();
  const int size = static_cast<int>(grid.size());
  std::array<int, kMaxGradient> grad{};
  int n_grad = 0;
  auto add_grad = [&](int idx) {
    if (!insert_unique(grad, n_grad, idx)) {
      throw Error(ErrorKind::ContractViolation, "gradient change set exceeds 12 pixels");
    }
  };

  for (int p : density_changed) {
    if (p < 0 || p >= size) {
      throw Error(ErrorKind::ContractViolation,
                  "stale change set: pixel " + std::to_string(p) + " outside template support");
    }
    if (!insert_unique(density_, n_density_, p)) {
      throw Error(ErrorKind::ContractViolation, "more than four density pixels in one change set");
    }
    const int px = grid.offset_x(p);
    const int py = grid.offset_y(p);
    // Gradient pixels whose central difference reads p.
    for (int q = px - 1; q <= px + 1; ++q) {
      if (q < -n || q > n) continue;
      if (std::min(q + 1, n) == px || std::max(q - 1, -n) == px) add_grad(grid.index(q, py));
    }
    for (int q = py - 1; q <= py + 1; ++q) {
      if (q < -n || q > n) continue;
      if (std::min(q + 1, n) == py || std::max(q - 1, -n) == py) add_grad(grid.index(px, q));
    }
  }

  gradient_ = grad;
  n_gradient_ = n_grad;
  for (int i = 0; i < n_gradient_; ++i) insert_unique(rows_, n_rows_, gradient_[static_cast<std::size_t>(i)]);
  for (int i = 0; i < n_density_; ++i) insert_unique(rows_, n_rows_, density_[static_cast<std::size_t>(i)]);
  std::sort(rows_.begin(), rows_.begin() + n_rows_);
}

// ---------------------------------------------------------------------------
// Feature-frame cache

EccCache::EccCache(DensityMap tmpl)
    : template_(std::move(tmpl)),
      grad_{PatchGrid(template_.radius()), PatchGrid(template_.radius())},
      J_(JacobianMatrix::Zero(static_cast<Eigen::Index>(template_.size()), 3)),
      t_(template_.size(), 0.0) {
  scratch_.reserve(ChangeSet::kMaxRows);
  refresh_full();
}

Vec3 EccCache::row_at(int index) const {
  const auto i = static_cast<std::size_t>(index);
  return feature_frame_row(grad_.gx[i], grad_.gy[i], template_.offset_x(index),
                           template_.offset_y(index));
}

void EccCache::refresh_gradient_at(int index) {
  const auto i = static_cast<std::size_t>(index);
  gradient_at(template_, template_.offset_x(index), template_.offset_y(index), grad_.gx[i],
              grad_.gy[i]);
}

ChangeSet EccCache::splat_template(const Vec2& x_template) {
  const SplatFootprint fp = template_.splat(x_template);
  std::array<int, 4> changed{};
  std::size_t n = 0;
  for (int k = 0; k < fp.count; ++k) {
    if (fp.weight[static_cast<std::size_t>(k)] != 0.0) changed[n++] = fp.index[static_cast<std::size_t>(k)];
  }
  return ChangeSet(template_, std::span<const int>(changed.data(), n));
}

void EccCache::apply_incremental(const ChangeSet& changes) {
  const int rows = static_cast<int>(template_.size());
  auto in_support = [rows](int i) { return i >= 0 && i < rows; };
  if (!std::all_of(changes.gradient().begin(), changes.gradient().end(), in_support) ||
      !std::all_of(changes.rows().begin(), changes.rows().end(), in_support)) {
    throw Error(ErrorKind::ContractViolation, "stale change set: pixel outside template support");
  }
  scratch_.clear();
  for (int r : changes.rows()) {
    RowChange ch;
    ch.row = r;
    ch.old_j = J_.row(r).transpose();
    ch.old_t = t_[static_cast<std::size_t>(r)];
    scratch_.push_back(ch);
  }

  for (int idx : changes.gradient()) refresh_gradient_at(idx);
  for (RowChange& ch : scratch_) {
    ch.new_j = row_at(ch.row);
    ch.new_t = template_[static_cast<std::size_t>(ch.row)];
    J_.row(ch.row) = ch.new_j.transpose();
    t_[static_cast<std::size_t>(ch.row)] = ch.new_t;
  }
  update_cache_incremental(terms_, scratch_, rows);
}

void EccCache::refresh_full() {
  const int n = template_.radius();
  for (int oy = -n; oy <= n; ++oy) {
    for (int ox = -n; ox <= n; ++ox) {
      gradient_at(template_, ox, oy, grad_.gx.at(ox, oy), grad_.gy.at(ox, oy));
    }
  }
  for (int i = 0; i < static_cast<int>(template_.size()); ++i) {
    J_.row(i) = row_at(i).transpose();
    t_[static_cast<std::size_t>(i)] = template_[static_cast<std::size_t>(i)];
  }
  terms_ = refresh_cache_full(J_, t_);
}

ModelProjection EccCache::project(const ModelWindow& model) const {
  const double* m = model.values().data();
  const double* J = J_.data();
  const double* t = t_.data();
  double td = 0.0, p0 = 0.0, p1 = 0.0, p2 = 0.0;
  for (int i : model.active()) {
    const auto k = static_cast<std::size_t>(i);
    const double v = m[k];
    td += t[k] * v;
    p0 += J[3 * k] * v;
    p1 += J[3 * k + 1] * v;
    p2 += J[3 * k + 2] * v;
  }
  const double inv = 1.0 / std::sqrt(model.norm_sq());
  ModelProjection out;
  out.t_dot_m = td * inv;
  out.p_m = Vec3(p0, p1, p2) * inv;
  return out;
}

}  // namespace eecc
