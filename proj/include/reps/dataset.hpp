// Synthetic labeled shapes: sphere, cube, cylinder and cone surfaces with a
// random pose, per-axis scale jitter and point jitter, normalized into the
// unit ball. Also a cube variant reporting per-point edge distances and a
// table (slab top on four thin legs) for structure-preservation checks.

#ifndef REPS_DATASET_HPP
#define REPS_DATASET_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "reps/error.hpp"
#include "reps/point_cloud.hpp"
#include "reps/training.hpp"

namespace reps {

enum class ShapeClass : std::size_t { sphere = 0, cube = 1, cylinder = 2, cone = 3 };
inline constexpr std::size_t kNumShapeClasses = 4;

inline const char* shape_name(std::size_t label) {
  static constexpr const char* names[] = {"sphere", "cube", "cylinder", "cone"};
  return label < kNumShapeClasses ? names[label] : "unknown";
}

namespace detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Eigen::Vector3d sphere_point(Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::Vector3d v;
  do v = {g(rng), g(rng), g(rng)};
  while (v.norm() < 1e-12);
  return v.normalized();
}

// Point on the surface of [-1,1]^3; face_axis receives the face normal axis.
inline Eigen::Vector3d cube_point(Rng& rng, int& face_axis) {
  face_axis = int(std::uniform_int_distribution<int>(0, 5)(rng));
  const int axis = face_axis % 3;
  Eigen::Vector3d v(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  v[axis] = face_axis < 3 ? 1.0 : -1.0;
  face_axis = axis;
  return v;
}

inline Eigen::Vector3d cylinder_point(Rng& rng) {
  // lateral area 4*pi, caps 2*pi
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  if (uniform(rng, 0, 1) < 2.0 / 3.0) return {std::cos(theta), std::sin(theta), uniform(rng, -1, 1)};
  const double r = std::sqrt(uniform(rng, 0, 1));
  return {r * std::cos(theta), r * std::sin(theta), uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0};
}

inline Eigen::Vector3d cone_point(Rng& rng) {
  // apex (0,0,1), base radius 1 at z = -1; lateral area pi*sqrt(5), base pi
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  const double lateral = std::sqrt(5.0) / (1.0 + std::sqrt(5.0));
  const double t = std::sqrt(uniform(rng, 0, 1));
  if (uniform(rng, 0, 1) < lateral) return {t * std::cos(theta), t * std::sin(theta), 1.0 - 2.0 * t};
  return {t * std::cos(theta), t * std::sin(theta), -1.0};
}

struct Posed {
  Matrix coords;
  double norm_scale = 1;  // distances in local scaled frame multiply by this
};

// Scaled local points -> jitter -> rotation -> centroid removal -> unit ball.
inline Posed pose_and_normalize(std::vector<Eigen::Vector3d> pts, double jitter_sigma, Rng& rng) {
  std::normal_distribution<double> g(0.0, jitter_sigma);
  const Eigen::Matrix3d rot = random_rotation(rng);
  Matrix m(Eigen::Index(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Eigen::Vector3d p = pts[i] + Eigen::Vector3d(g(rng), g(rng), g(rng));
    m.row(Eigen::Index(i)) = (rot * p).transpose();
  }
  const Vec3 c = m.colwise().mean();
  m.rowwise() -= c;
  const double r = m.rowwise().norm().maxCoeff();
  Posed out;
  out.norm_scale = r > 0 ? 1.0 / r : 1.0;
  out.coords = m * out.norm_scale;
  return out;
}

inline Eigen::Vector3d scale_jitter(Rng& rng) {
  return {1 + uniform(rng, -0.2, 0.2), 1 + uniform(rng, -0.2, 0.2), 1 + uniform(rng, -0.2, 0.2)};
}

}  // namespace detail

/// One normalized cloud of class `label`.
inline PointCloud make_shape(std::size_t label, std::size_t n_points, std::mt19937_64& rng) {
  detail::require(label < kNumShapeClasses, "make_shape: unknown class");
  detail::require(n_points >= 1, "make_shape: need at least one point");
  const Eigen::Vector3d s = detail::scale_jitter(rng);
  std::vector<Eigen::Vector3d> pts(n_points);
  for (auto& p : pts) {
    int axis = 0;
    switch (static_cast<ShapeClass>(label)) {
      case ShapeClass::sphere: p = detail::sphere_point(rng); break;
      case ShapeClass::cube: p = detail::cube_point(rng, axis); break;
      case ShapeClass::cylinder: p = detail::cylinder_point(rng); break;
      case ShapeClass::cone: p = detail::cone_point(rng); break;
    }
    p = p.cwiseProduct(s);
  }
  return PointCloud(detail::pose_and_normalize(std::move(pts), 0.005 * s.maxCoeff(), rng).coords);
}

/// `num_per_class` clouds of each class, class-major order.
inline std::vector<LabeledCloud> make_synthetic_dataset(std::size_t num_per_class, std::size_t n_points,
                                                        std::uint64_t seed) {
  detail::require(num_per_class >= 1 && n_points >= 1, "make_synthetic_dataset: counts must be >= 1");
  std::vector<LabeledCloud> out;
  out.reserve(num_per_class * kNumShapeClasses);
  for (std::size_t label = 0; label < kNumShapeClasses; ++label)
    for (std::size_t i = 0; i < num_per_class; ++i) {
      std::mt19937_64 rng(mix_seed(mix_seed(seed, label), i));
      out.push_back(LabeledCloud{make_shape(label, n_points, rng), label});
    }
  return out;
}

struct CubeWithEdges {
  PointCloud cloud;
  std::vector<double> edge_distance;  // in normalized units
};

/// Cube-class cloud (same generator family as the dataset) plus each
/// point's distance to the nearest cube edge, measured before jitter.
inline CubeWithEdges make_cube_with_edges(std::size_t n_points, std::mt19937_64& rng) {
  const Eigen::Vector3d s = detail::scale_jitter(rng);
  std::vector<Eigen::Vector3d> pts(n_points);
  std::vector<double> dist(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    int axis = 0;
    Eigen::Vector3d p = detail::cube_point(rng, axis).cwiseProduct(s);
    double d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a)
      if (a != axis) d = std::min(d, s[a] - std::abs(p[a]));
    pts[i] = p;
    dist[i] = d;
  }
  auto posed = detail::pose_and_normalize(std::move(pts), 0.005 * s.maxCoeff(), rng);
  for (double& d : dist) d *= posed.norm_scale;
  return CubeWithEdges{PointCloud(std::move(posed.coords)), std::move(dist)};
}

struct TableShape {
  PointCloud cloud;
  std::vector<int> leg;  // 0..3 for leg points, -1 for the top
};

/// Slab top on four thin square legs, area-weighted surface samples.
inline TableShape make_table(std::size_t n_points, std::mt19937_64& rng) {
  struct Box {
    Eigen::Vector3d lo, hi;
    int leg;
  };
  const double half_x = detail::uniform(rng, 0.9, 1.1), half_y = detail::uniform(rng, 0.5, 0.7);
  const double top_lo = 0.7, top_hi = 0.7 + detail::uniform(rng, 0.08, 0.12);
  const double w = detail::uniform(rng, 0.06, 0.1), inset = 0.1;
  std::vector<Box> boxes{{{-half_x, -half_y, top_lo}, {half_x, half_y, top_hi}, -1}};
  int id = 0;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      const Eigen::Vector3d c(sx * (half_x - inset), sy * (half_y - inset), 0);
      boxes.push_back({{c.x() - w / 2, c.y() - w / 2, -0.8}, {c.x() + w / 2, c.y() + w / 2, top_lo}, id++});
    }
  // Face list with areas for area-weighted sampling.
  struct Face {
    std::size_t box;
    int axis;
    double at;
    double area;
  };
  std::vector<Face> faces;
  double total = 0;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Eigen::Vector3d e = boxes[b].hi - boxes[b].lo;
    for (int a = 0; a < 3; ++a) {
      const double area = e[(a + 1) % 3] * e[(a + 2) % 3];
      faces.push_back({b, a, boxes[b].lo[a], area});
      faces.push_back({b, a, boxes[b].hi[a], area});
      total += 2 * area;
    }
  }
  std::vector<Eigen::Vector3d> pts(n_points);
  std::vector<int> leg(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    double u = detail::uniform(rng, 0, total);
    std::size_t f = 0;
    while (f + 1 < faces.size() && u > faces[f].area) u -= faces[f++].area;
    const Box& b = boxes[faces[f].box];
    Eigen::Vector3d p;
    for (int a = 0; a < 3; ++a) p[a] = detail::uniform(rng, b.lo[a], b.hi[a]);
    p[faces[f].axis] = faces[f].at;
    pts[i] = p;
    leg[i] = b.leg;
  }
  auto posed = detail::pose_and_normalize(std::move(pts), 0.002, rng);
  return TableShape{PointCloud(std::move(posed.coords)), std::move(leg)};
}

}  // namespace reps

#endif  // REPS_DATASET_HPP
