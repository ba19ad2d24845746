#include "trackrl/spline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace trackrl::river {

Eigen::Vector3d eval_catmull_rom(std::span<const Eigen::Vector3d> control, int segment, double t) {
  const int n = static_cast<int>(control.size());
  if (n < 4) throw std::invalid_argument("Catmull-Rom spline needs at least 4 control points");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("spline parameter must lie in [0, 1]");
  auto at = [&](int i) -> const Eigen::Vector3d& {
    return control[static_cast<std::size_t>(((i % n) + n) % n)];
  };
  return catmull_rom(at(segment - 1), at(segment), at(segment + 1), at(segment + 2), t);
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b, double* t_out) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  double d = 0.0;
  if (t <= 0.0) {
    t = 0.0;
    d = (p - a).norm();
  } else if (t >= 1.0) {
    t = 1.0;
    d = (p - b).norm();
  } else {
    d = (p - (a + t * ab)).norm();
  }
  if (t_out != nullptr) *t_out = t;
  return d;
}

RiverSpline::RiverSpline(std::vector<Eigen::Vector3d> control_points,
                         std::vector<double> half_widths, int segments, int samples_per_span)
    : control_(std::move(control_points)), control_half_widths_(std::move(half_widths)) {
  const int spans = static_cast<int>(control_.size());
  if (spans < 4) throw std::invalid_argument("river spline needs at least 4 control points");
  if (control_half_widths_.size() != control_.size()) {
    throw std::invalid_argument("one half-width per control point required");
  }
  if (segments < 50) throw std::invalid_argument("river spline needs at least 50 segments");
  if (samples_per_span < 2) throw std::invalid_argument("samples_per_span must be >= 2");

  // Dense samples and cumulative arc length.
  const int dense_count = spans * samples_per_span;
  std::vector<Eigen::Vector3d> dense(static_cast<std::size_t>(dense_count) + 1);
  for (int i = 0; i < spans; ++i) {
    for (int j = 0; j < samples_per_span; ++j) {
      dense[static_cast<std::size_t>(i * samples_per_span + j)] =
          eval_catmull_rom(control_, i, static_cast<double>(j) / samples_per_span);
    }
  }
  dense.back() = dense.front();
  std::vector<double> cumulative(dense.size(), 0.0);
  for (std::size_t k = 1; k < dense.size(); ++k) {
    cumulative[k] = cumulative[k - 1] + (dense[k] - dense[k - 1]).norm();
  }
  dense_length_ = cumulative.back();
  if (!(dense_length_ > 1e-9)) throw std::invalid_argument("degenerate (zero-length) river spline");

  // Invert the arc-length table and evaluate the spline at the resulting
  // parameters so vertices lie on the curve itself.
  vertices_.resize(static_cast<std::size_t>(segments));
  vertex_half_widths_.resize(static_cast<std::size_t>(segments));
  for (int k = 0; k < segments; ++k) {
    const double s = dense_length_ * k / segments;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
    std::size_t hi = static_cast<std::size_t>(it - cumulative.begin());
    hi = std::clamp<std::size_t>(hi, 1, cumulative.size() - 1);
    const std::size_t lo = hi - 1;
    const double span_len = cumulative[hi] - cumulative[lo];
    const double u = span_len > 0.0 ? (s - cumulative[lo]) / span_len : 0.0;
    const double param = (static_cast<double>(lo) + u) / samples_per_span;
    int span = std::min(static_cast<int>(param), spans - 1);
    const double t = std::clamp(param - span, 0.0, 1.0);
    vertices_[static_cast<std::size_t>(k)] = eval_catmull_rom(control_, span, t);
    const double w0 = control_half_widths_[static_cast<std::size_t>(span)];
    const double w1 = control_half_widths_[static_cast<std::size_t>((span + 1) % spans)];
    vertex_half_widths_[static_cast<std::size_t>(k)] = w0 + (w1 - w0) * t;
  }

  tangents_.resize(vertices_.size());
  headings_.resize(vertices_.size());
  lengths_.resize(vertices_.size());
  for (int i = 0; i < segments; ++i) {
    const Eigen::Vector3d d = segment_end(i) - vertex(i);
    const double len = d.norm();
    if (!(len > 0.0)) throw std::invalid_argument("degenerate river segment");
    lengths_[static_cast<std::size_t>(i)] = len;
    tangents_[static_cast<std::size_t>(i)] = d / len;
    headings_[static_cast<std::size_t>(i)] = std::atan2(d.y(), d.x());
    total_length_ += len;
  }
  build_index();
}

double RiverSpline::half_width(int segment, double t) const {
  const double w0 = vertex_half_widths_[static_cast<std::size_t>(segment)];
  const double w1 = vertex_half_widths_[static_cast<std::size_t>((segment + 1) % segment_count())];
  return w0 + (w1 - w0) * t;
}

double RiverSpline::surface_height(int segment, double t) const {
  return vertex(segment).z() + (segment_end(segment).z() - vertex(segment).z()) * t;
}

Eigen::Vector3d RiverSpline::point_at(int segment, double t) const {
  return vertex(segment) + t * (segment_end(segment) - vertex(segment));
}

void RiverSpline::build_index() {
  Eigen::Vector2d lo = vertices_.front().head<2>();
  Eigen::Vector2d hi = lo;
  for (const auto& v : vertices_) {
    lo = lo.cwiseMin(v.head<2>());
    hi = hi.cwiseMax(v.head<2>());
  }
  grid_origin_ = lo.array() - cell_size_;
  grid_nx_ = static_cast<int>(std::ceil((hi.x() - grid_origin_.x()) / cell_size_)) + 1;
  grid_ny_ = static_cast<int>(std::ceil((hi.y() - grid_origin_.y()) / cell_size_)) + 1;
  cells_.assign(static_cast<std::size_t>(grid_nx_ * grid_ny_), {});
  for (int s = 0; s < segment_count(); ++s) {
    const Eigen::Vector2d a = vertex(s).head<2>();
    const Eigen::Vector2d b = segment_end(s).head<2>();
    const Eigen::Vector2d smin = a.cwiseMin(b);
    const Eigen::Vector2d smax = a.cwiseMax(b);
    const int i0 = static_cast<int>(std::floor((smin.x() - grid_origin_.x()) / cell_size_));
    const int i1 = static_cast<int>(std::floor((smax.x() - grid_origin_.x()) / cell_size_));
    const int j0 = static_cast<int>(std::floor((smin.y() - grid_origin_.y()) / cell_size_));
    const int j1 = static_cast<int>(std::floor((smax.y() - grid_origin_.y()) / cell_size_));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) cells_[static_cast<std::size_t>(i * grid_ny_ + j)].push_back(s);
    }
  }
}

SegmentProjection RiverSpline::project(const Eigen::Vector2d& xy) const {
  const auto ci = static_cast<long>(std::floor((xy.x() - grid_origin_.x()) / cell_size_));
  const auto cj = static_cast<long>(std::floor((xy.y() - grid_origin_.y()) / cell_size_));
  SegmentProjection best;
  best.distance = std::numeric_limits<double>::infinity();

  auto visit = [&](long i, long j) {
    if (i < 0 || j < 0 || i >= grid_nx_ || j >= grid_ny_) return;
    for (int s : cells_[static_cast<std::size_t>(i * grid_ny_ + j)]) {
      double t = 0.0;
      const double d = point_segment_distance(xy, vertex(s).head<2>(), segment_end(s).head<2>(), &t);
      if (d < best.distance || (d == best.distance && s < best.segment)) best = {s, d, t};
    }
  };

  // Rings closer than the grid are empty; start at the first that can hit it.
  const long start = std::max({0L, -ci, ci - (grid_nx_ - 1), -cj, cj - (grid_ny_ - 1)});
  for (long r = start;; ++r) {
    for (long i = std::max(ci - r, 0L); i <= std::min(ci + r, static_cast<long>(grid_nx_) - 1); ++i) {
      if (i == ci - r || i == ci + r) {
        for (long j = cj - r; j <= cj + r; ++j) visit(i, j);
      } else {
        visit(i, cj - r);
        if (r > 0) visit(i, cj + r);
      }
    }
    // Unvisited cells are at least r cells away from the query's cell.
    if (best.segment >= 0 && best.distance < static_cast<double>(r) * cell_size_) break;
    if (ci - r <= 0 && cj - r <= 0 && ci + r >= grid_nx_ - 1 && cj + r >= grid_ny_ - 1) break;
  }
  return best;
}

}  // namespace trackrl::river
