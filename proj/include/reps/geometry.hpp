// Spatial primitives: exact kNN over a static kd-tree, the classical samplers
// (random, farthest-point, voxel) and patch partitioning. Every operation is
// deterministic given its inputs and seed.

#ifndef REPS_GEOMETRY_HPP
#define REPS_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "reps/error.hpp"
#include "reps/point_cloud.hpp"

namespace reps {

// =============================================================================
// Types
// =============================================================================

struct NeighborSet {
  std::size_t center = 0;
  IndexList indices;              // ascending distance, ties by ascending index
  std::vector<double> sq_dists;   // squared distances, parallel to indices
};

struct Patch {
  std::size_t center = 0;
  IndexList members;   // kNN order around center
  IndexList removed;
  IndexList retained;
};

struct SampleResult {
  IndexList indices;
  std::size_t source_size = 0;

  std::size_t m() const { return indices.size(); }
  double ratio() const { return indices.empty() ? 0.0 : double(source_size) / double(indices.size()); }
};

struct NeighborOptions {
  bool include_self = true;
};

enum class PatchStart {
  seeded,                 // uniform random start index drawn from the seed
  farthest_from_centroid  // order-independent start, used for inference
};

namespace detail {

inline double sq_dist(const Matrix& c, std::size_t i, const double* q) {
  const auto r = static_cast<Eigen::Index>(i);
  const double dx = c(r, 0) - q[0];
  const double dy = c(r, 1) - q[1];
  const double dz = c(r, 2) - q[2];
  return dx * dx + dy * dy + dz * dz;
}

inline void require_nonempty(const PointCloud& cloud) {
  require(!cloud.empty(), "point cloud is empty");
}

}  // namespace detail

// =============================================================================
// KdTree
// =============================================================================

/// Static 3-D kd-tree with exact k-nearest queries. Results are ordered by
/// (squared distance, index), so they coincide with a brute-force sort.
class KdTree {
 public:
  explicit KdTree(const Matrix& coords, std::size_t leaf_size = 8)
      : coords_(&coords), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(static_cast<std::size_t>(coords.rows()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }

  /// k nearest points to `q`; `exclude` (if set) is never reported.
  std::vector<std::pair<double, std::size_t>> nearest(const Vec3& q, std::size_t k,
                                                      std::optional<std::size_t> exclude = {}) const {
    std::vector<std::pair<double, std::size_t>> heap;
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    const double qp[3] = {q[0], q[1], q[2]};
    search(0, qp, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 for leaves
    double split = 0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    std::array<double, 3> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        const double v = (*coords_)(static_cast<Eigen::Index>(order_[i]), a);
        lo[a] = std::min(lo[a], v);
        hi[a] = std::max(hi[a], v);
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    if (hi[axis] - lo[axis] <= 0) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [&](std::size_t i) { return (*coords_)(static_cast<Eigen::Index>(i), axis); };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
    const double split = coord(order_[mid]);

    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::size_t id, const double* q, std::size_t k, std::optional<std::size_t> exclude,
              std::vector<std::pair<double, std::size_t>>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if (exclude && *exclude == idx) continue;
        const std::pair<double, std::size_t> cand{detail::sq_dist(*coords_, idx, q), idx};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    // Left holds coords <= split, right holds coords >= split.
    const double diff = q[n.axis] - n.split;
    const std::size_t near = diff <= 0 ? n.left : n.right;
    const std::size_t far = diff <= 0 ? n.right : n.left;
    search(near, q, k, exclude, heap);
    // Equal plane distance can still hold a tie with a smaller index.
    if (heap.size() < k || diff * diff <= heap.front().first) search(far, q, k, exclude, heap);
  }

  const Matrix* coords_;
  std::size_t leaf_size_;
  IndexList order_;
  std::vector<Node> nodes_;
};

// =============================================================================
// kNN
// =============================================================================

namespace detail {

inline NeighborSet to_neighbor_set(std::size_t center, const std::vector<std::pair<double, std::size_t>>& hits) {
  NeighborSet ns;
  ns.center = center;
  ns.indices.reserve(hits.size());
  ns.sq_dists.reserve(hits.size());
  for (const auto& [d, i] : hits) {
    ns.sq_dists.push_back(d);
    ns.indices.push_back(i);
  }
  return ns;
}

inline void check_knn_args(const PointCloud& cloud, std::size_t k, NeighborOptions opt) {
  require_nonempty(cloud);
  require(k >= 1, "knn: k must be at least 1");
  const std::size_t available = cloud.size() - (opt.include_self ? 0 : 1);
  require(k <= available, "knn: k exceeds the number of candidate points");
}

}  // namespace detail

inline std::vector<NeighborSet> knn_batch(const PointCloud& cloud, std::span<const std::size_t> queries,
                                          std::size_t k, NeighborOptions opt = {}) {
  std::vector<NeighborSet> out;
  if (queries.empty()) return out;
  detail::check_knn_args(cloud, k, opt);
  const KdTree tree(cloud.coords());
  out.reserve(queries.size());
  for (std::size_t q : queries) {
    detail::require(q < cloud.size(), "knn: query index out of range");
    std::optional<std::size_t> exclude;
    if (!opt.include_self) exclude = q;
    out.push_back(detail::to_neighbor_set(q, tree.nearest(cloud.point(q), k, exclude)));
  }
  return out;
}

inline NeighborSet knn(const PointCloud& cloud, std::size_t query, std::size_t k, NeighborOptions opt = {}) {
  const std::size_t q[1] = {query};
  detail::check_knn_args(cloud, k, opt);
  return std::move(knn_batch(cloud, q, k, opt).front());
}

inline std::vector<NeighborSet> knn_all(const PointCloud& cloud, std::size_t k, NeighborOptions opt = {}) {
  IndexList q(cloud.size());
  std::iota(q.begin(), q.end(), std::size_t{0});
  return knn_batch(cloud, q, k, opt);
}

// =============================================================================
// Samplers
// =============================================================================

inline SampleResult random_sample(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  detail::require_nonempty(cloud);
  detail::require(m >= 1 && m <= cloud.size(), "random_sample: m must be in [1, N]");
  std::mt19937_64 rng(seed);
  IndexList idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first m slots are a uniform m-subset.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return SampleResult{std::move(idx), cloud.size()};
}

/// Greedy max-min selection starting at `start`; ties by ascending index.
inline SampleResult farthest_point_sample(const PointCloud& cloud, std::size_t m, std::size_t start) {
  detail::require_nonempty(cloud);
  detail::require(m >= 1 && m <= cloud.size(), "farthest_point_sample: m must be in [1, N]");
  detail::require(start < cloud.size(), "farthest_point_sample: start index out of range");
  const std::size_t n = cloud.size();
  const Matrix& c = cloud.coords();
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  IndexList out;
  out.reserve(m);
  std::size_t cur = start;
  for (std::size_t s = 0; s < m; ++s) {
    out.push_back(cur);
    taken[cur] = 1;
    const double q[3] = {c(Eigen::Index(cur), 0), c(Eigen::Index(cur), 1), c(Eigen::Index(cur), 2)};
    std::size_t best = n;
    double best_d = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_d[i] = std::min(min_d[i], detail::sq_dist(c, i, q));
      if (min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    cur = best;
  }
  return SampleResult{std::move(out), n};
}

/// Index of the point farthest from the centroid, ties by ascending index.
inline std::size_t farthest_from_centroid(const PointCloud& cloud) {
  detail::require_nonempty(cloud);
  const Vec3 centroid = cloud.coords().colwise().mean();
  const double q[3] = {centroid[0], centroid[1], centroid[2]};
  std::size_t best = 0;
  double best_d = -1;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = detail::sq_dist(cloud.coords(), i, q);
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// One representative per occupied voxel of a grid anchored at the bounding
/// box minimum: the member nearest the cell center, ties by ascending index.
/// Output is sorted ascending.
inline SampleResult voxel_sample(const PointCloud& cloud, double voxel_size) {
  detail::require(voxel_size > 0 && std::isfinite(voxel_size), "voxel_sample: voxel size must be positive");
  detail::require_nonempty(cloud);
  const Matrix& c = cloud.coords();
  const Vec3 lo = c.colwise().minCoeff();
  std::map<std::array<std::int64_t, 3>, std::pair<double, std::size_t>> best;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::array<std::int64_t, 3> key{};
    double center[3];
    for (int a = 0; a < 3; ++a) {
      key[a] = static_cast<std::int64_t>(std::floor((c(Eigen::Index(i), a) - lo[a]) / voxel_size));
      center[a] = lo[a] + (double(key[a]) + 0.5) * voxel_size;
    }
    const std::pair<double, std::size_t> cand{detail::sq_dist(c, i, center), i};
    auto [it, inserted] = best.emplace(key, cand);
    if (!inserted && cand < it->second) it->second = cand;
  }
  IndexList out;
  out.reserve(best.size());
  for (const auto& [key, v] : best) out.push_back(v.second);
  std::sort(out.begin(), out.end());
  return SampleResult{std::move(out), cloud.size()};
}

// =============================================================================
// Patches
// =============================================================================

/// `num_patches` patches of `k` members: FPS centers, kNN membership (self
/// included), and a seeded shuffle split into removed/retained halves.
inline std::vector<Patch> partition_patches(const PointCloud& cloud, std::size_t num_patches, std::size_t k,
                                            std::uint64_t seed, PatchStart start = PatchStart::seeded) {
  detail::require_nonempty(cloud);
  detail::require(num_patches >= 1, "partition_patches: need at least one patch");
  detail::require(k >= 2 && k % 2 == 0, "partition_patches: k must be even and positive");
  detail::require(k <= cloud.size(), "partition_patches: k exceeds point count");
  detail::require(num_patches <= cloud.size(), "partition_patches: more patches than points");

  std::mt19937_64 rng(seed);
  std::size_t first = 0;
  if (start == PatchStart::seeded) {
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    first = pick(rng);
  } else {
    first = farthest_from_centroid(cloud);
  }
  const SampleResult centers = farthest_point_sample(cloud, num_patches, first);
  auto groups = knn_batch(cloud, centers.indices, k);

  std::vector<Patch> patches;
  patches.reserve(groups.size());
  for (auto& g : groups) {
    Patch p;
    p.center = g.center;
    p.members = std::move(g.indices);
    IndexList shuffled = p.members;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    p.removed.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k / 2));
    p.retained.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(k / 2), shuffled.end());
    patches.push_back(std::move(p));
  }
  return patches;
}

inline std::size_t default_num_patches(std::size_t n, std::size_t k) { return (n + k - 1) / k; }

}  // namespace reps

#endif  // REPS_GEOMETRY_HPP
