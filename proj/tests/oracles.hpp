// Independent straight-line reference implementations used as test oracles.
// Nothing here touches the kd-tree or the tape.

#ifndef REPS_TESTS_ORACLES_HPP
#define REPS_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "reps/nn.hpp"
#include "reps/point_cloud.hpp"
#include "reps/scoring.hpp"

namespace oracle {

using reps::Matrix;

inline double sq(const Matrix& c, std::size_t i, std::size_t j) {
  double s = 0;
  for (int a = 0; a < 3; ++a) {
    const double d = c(Eigen::Index(i), a) - c(Eigen::Index(j), a);
    s += d * d;
  }
  return s;
}

/// Sort all points by (squared distance, index) and keep the first k.
inline std::vector<std::size_t> knn(const Matrix& c, std::size_t q, std::size_t k, bool include_self) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < std::size_t(c.rows()); ++i)
    if (include_self || i != q) all.emplace_back(sq(c, q, i), i);
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

/// Greedy max-min selection by full rescans each round.
inline std::vector<std::size_t> fps(const Matrix& c, std::size_t m, std::size_t start) {
  std::vector<std::size_t> sel{start};
  while (sel.size() < m) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < std::size_t(c.rows()); ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double dmin = INFINITY;
      for (std::size_t s : sel) dmin = std::min(dmin, sq(c, i, s));
      if (dmin > best) {
        best = dmin;
        arg = i;
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

/// Number of distinct occupied cells of a grid anchored at the bbox minimum.
inline std::size_t voxel_count(const Matrix& c, double size) {
  const Eigen::RowVector3d lo = c.colwise().minCoeff();
  std::set<std::tuple<long, long, long>> cells;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    long v[3];
    for (int a = 0; a < 3; ++a) v[a] = long(std::floor((c(i, a) - lo[a]) / size));
    cells.emplace(v[0], v[1], v[2]);
  }
  return cells.size();
}

/// Per occupied cell, the point nearest the cell center (ties to the lower
/// index), found by scanning every point per cell. Returned ascending.
inline std::vector<std::size_t> voxel(const Matrix& c, double size) {
  const Eigen::RowVector3d lo = c.colwise().minCoeff();
  std::vector<std::tuple<long, long, long, std::size_t>> keyed;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    long v[3];
    for (int a = 0; a < 3; ++a) v[a] = long(std::floor((c(i, a) - lo[a]) / size));
    keyed.emplace_back(v[0], v[1], v[2], std::size_t(i));
  }
  std::set<std::tuple<long, long, long>> cells;
  for (const auto& k : keyed) cells.emplace(std::get<0>(k), std::get<1>(k), std::get<2>(k));
  std::vector<std::size_t> out;
  for (const auto& cell : cells) {
    const long v[3] = {std::get<0>(cell), std::get<1>(cell), std::get<2>(cell)};
    double best = INFINITY;
    std::size_t arg = 0;
    for (const auto& k : keyed) {
      if (std::get<0>(k) != v[0] || std::get<1>(k) != v[1] || std::get<2>(k) != v[2]) continue;
      const std::size_t i = std::get<3>(k);
      double d = 0;
      for (int a = 0; a < 3; ++a) {
        const double e = c(Eigen::Index(i), a) - (lo[a] + (double(v[a]) + 0.5) * size);
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    out.push_back(arg);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// softmax(X Xᵀ / sqrt(d)) X with explicit loops.
inline Matrix attention(const Matrix& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix out = Matrix::Zero(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> s(static_cast<std::size_t>(n));
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < n; ++j) {
      double dot = 0;
      for (Eigen::Index a = 0; a < d; ++a) dot += x(i, a) * x(j, a);
      s[std::size_t(j)] = dot / std::sqrt(double(d));
      mx = std::max(mx, s[std::size_t(j)]);
    }
    double z = 0;
    for (double& v : s) z += (v = std::exp(v - mx));
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index a = 0; a < d; ++a) out(i, a) += s[std::size_t(j)] / z * x(j, a);
  }
  return out;
}

/// Layer-by-layer dense MLP: rows of `x` times in×out weights plus bias.
struct Layer {
  Matrix w;
  Eigen::RowVectorXd b;
  bool relu = true;
};

inline Matrix mlp(Matrix x, const std::vector<Layer>& layers) {
  for (const auto& l : layers) {
    Matrix y(x.rows(), l.w.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index o = 0; o < l.w.cols(); ++o) {
        double s = l.b[o];
        for (Eigen::Index i = 0; i < x.cols(); ++i) s += x(r, i) * l.w(i, o);
        y(r, o) = l.relu ? std::max(0.0, s) : s;
      }
    x = std::move(y);
  }
  return x;
}

inline std::vector<Layer> layers_of(const reps::nn::Mlp& m) {
  std::vector<Layer> out;
  for (std::size_t l = 0; l < m.layers(); ++l)
    out.push_back({m.weight(l).value, m.bias(l).value, l + 1 < m.layers() || m.activate_last()});
  return out;
}

/// Tape-free reconstruction: anchor + decoder(max over rows of encoder(rows)).
inline Matrix reconstruct(const Matrix& coords, const Matrix& feats, const std::vector<std::size_t>& group,
                          const reps::ReconNet& net) {
  Eigen::RowVector3d anchor = Eigen::RowVector3d::Zero();
  for (std::size_t i : group) anchor += coords.row(Eigen::Index(i));
  anchor /= double(group.size());
  Matrix rows(Eigen::Index(group.size()), 3 + feats.cols());
  for (std::size_t r = 0; r < group.size(); ++r) {
    rows.block(Eigen::Index(r), 0, 1, 3) = coords.row(Eigen::Index(group[r])) - anchor;
    rows.block(Eigen::Index(r), 3, 1, feats.cols()) = feats.row(Eigen::Index(group[r]));
  }
  const Matrix code = mlp(rows, layers_of(net.encoder)).colwise().maxCoeff();
  const Matrix off = mlp(code, layers_of(net.decoder));
  Matrix out(Eigen::Index(net.outputs), 3);
  for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) = anchor + off.block(0, 3 * k, 1, 3);
  return out;
}

inline double euclid(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
  return std::sqrt((a - b).squaredNorm());
}

}  // namespace oracle

#endif  // REPS_TESTS_ORACLES_HPP
