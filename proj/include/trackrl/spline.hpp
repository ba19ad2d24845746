#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace trackrl::river {

// Uniform Catmull-Rom basis on four consecutive control points. Returns p1
// at t = 0 and p2 at t = 1.
template <typename Derived>
typename Derived::PlainObject catmull_rom(const Eigen::MatrixBase<Derived>& p0,
                                          const Eigen::MatrixBase<Derived>& p1,
                                          const Eigen::MatrixBase<Derived>& p2,
                                          const Eigen::MatrixBase<Derived>& p3,
                                          typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  const Scalar t2 = t * t;
  const Scalar t3 = t2 * t;
  return Scalar(0.5) * ((Scalar(2) * p1) + (p2 - p0) * t +
                        (Scalar(2) * p0 - Scalar(5) * p1 + Scalar(4) * p2 - p3) * t2 +
                        (-p0 + Scalar(3) * p1 - Scalar(3) * p2 + p3) * t3);
}

// Point on the closed spline through `control` for span `segment` (between
// control points segment and segment+1, wrapping). Requires >= 4 points and
// t in [0, 1].
Eigen::Vector3d eval_catmull_rom(std::span<const Eigen::Vector3d> control, int segment, double t);

// Horizontal (xy) point-to-segment distance; `t_out` receives the clamped
// parameter of the closest point.
double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b, double* t_out = nullptr);

struct SegmentProjection {
  int segment = -1;
  double distance = 0.0;
  double t = 0.0;
};

// Closed Catmull-Rom centerline resampled into N chords of near-equal arc
// length. Segment i runs from vertex(i) to vertex((i + 1) % N).
class RiverSpline {
 public:
  RiverSpline(std::vector<Eigen::Vector3d> control_points, std::vector<double> half_widths,
              int segments, int samples_per_span = 50);

  int segment_count() const { return static_cast<int>(vertices_.size()); }
  const Eigen::Vector3d& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
  const Eigen::Vector3d& segment_end(int i) const { return vertex((i + 1) % segment_count()); }
  const Eigen::Vector3d& tangent(int i) const { return tangents_[static_cast<std::size_t>(i)]; }
  // Heading of the horizontal tangent, radians.
  double heading(int i) const { return headings_[static_cast<std::size_t>(i)]; }
  double segment_length(int i) const { return lengths_[static_cast<std::size_t>(i)]; }
  double total_length() const { return total_length_; }
  // Arc length of the dense sample polyline used for resampling.
  double dense_length() const { return dense_length_; }
  double half_width(int segment, double t) const;
  double surface_height(int segment, double t) const;
  Eigen::Vector3d point_at(int segment, double t) const;

  // Nearest segment in the horizontal plane; ties go to the lower index.
  SegmentProjection project(const Eigen::Vector2d& xy) const;

  const std::vector<Eigen::Vector3d>& control_points() const { return control_; }
  const std::vector<double>& control_half_widths() const { return control_half_widths_; }

 private:
  void build_index();

  std::vector<Eigen::Vector3d> control_;
  std::vector<double> control_half_widths_;
  std::vector<Eigen::Vector3d> vertices_;
  std::vector<double> vertex_half_widths_;
  std::vector<Eigen::Vector3d> tangents_;
  std::vector<double> headings_;
  std::vector<double> lengths_;
  double total_length_ = 0.0;
  double dense_length_ = 0.0;

  // Uniform grid over the xy bounding box; each cell lists the segments whose
  // bounding boxes overlap it.
  Eigen::Vector2d grid_origin_;
  double cell_size_ = 4.0;
  int grid_nx_ = 0;
  int grid_ny_ = 0;
  std::vector<std::vector<int>> cells_;
};

}  // namespace trackrl::river
