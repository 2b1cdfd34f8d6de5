// Dense point-cloud container: N x 3 coordinates plus optional N x d features.

#ifndef REPS_POINT_CLOUD_HPP
#define REPS_POINT_CLOUD_HPP

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "reps/error.hpp"

namespace reps {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec3 = Eigen::RowVector3d;
using IndexList = std::vector<std::size_t>;

class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(Matrix coords, Matrix feats = Matrix())
      : coords_(std::move(coords)), feats_(std::move(feats)) {
    detail::require(coords_.cols() == 3 || coords_.size() == 0,
                    "point cloud coordinates must have 3 columns");
    if (coords_.size() == 0) coords_.resize(0, 3);
    detail::require(coords_.allFinite(), "point cloud coordinates must be finite");
    detail::require(feats_.size() == 0 || feats_.rows() == coords_.rows(),
                    "feature row count must equal point count");
  }

  static PointCloud from_points(std::span<const Vec3> pts) {
    Matrix m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i];
    return PointCloud(std::move(m));
  }

  std::size_t size() const { return static_cast<std::size_t>(coords_.rows()); }
  bool empty() const { return coords_.rows() == 0; }
  bool has_features() const { return feats_.size() != 0; }
  std::size_t feature_width() const { return has_features() ? static_cast<std::size_t>(feats_.cols()) : 0; }

  const Matrix& coords() const { return coords_; }
  const Matrix& feats() const { return feats_; }

  Vec3 point(std::size_t i) const { return coords_.row(static_cast<Eigen::Index>(i)); }

  void set_features(Matrix feats) {
    detail::require(feats.rows() == coords_.rows(), "feature row count must equal point count");
    feats_ = std::move(feats);
  }

  /// Rows `idx` of coordinates (and features when present), in the given order.
  PointCloud select(std::span<const std::size_t> idx) const {
    Matrix c(static_cast<Eigen::Index>(idx.size()), 3);
    Matrix f;
    if (has_features()) f.resize(static_cast<Eigen::Index>(idx.size()), feats_.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      detail::require(idx[r] < size(), "select: index out of range");
      const auto i = static_cast<Eigen::Index>(idx[r]);
      c.row(static_cast<Eigen::Index>(r)) = coords_.row(i);
      if (has_features()) f.row(static_cast<Eigen::Index>(r)) = feats_.row(i);
    }
    return PointCloud(std::move(c), std::move(f));
  }

 private:
  Matrix coords_;
  Matrix feats_;
};

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

}  // namespace reps

#endif  // REPS_POINT_CLOUD_HPP
