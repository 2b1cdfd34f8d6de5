// Reconstruction-based scoring.
//
// Every point is scored by how badly it can be rebuilt from its neighborhood
// (point reconstruction) and by how much removing it hurts the rebuild of the
// local patch it belongs to (shape reconstruction). The two normalized scores
// are blended with weight alpha and the top-M points are kept.

#ifndef REPS_SCORING_HPP
#define REPS_SCORING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/autodiff.hpp"
#include "reps/error.hpp"
#include "reps/geometry.hpp"
#include "reps/nn.hpp"

namespace reps {

using ad::Tape;
using ad::Tensor;

// =============================================================================
// Networks
// =============================================================================

/// Per-row encoder (3+d -> h -> h), max-pool over the group, decoder
/// (h -> h -> 3*outputs). Rows are [position - anchor | feature]; the decoder
/// emits offsets from the anchor (the group centroid).
struct ReconNet {
  nn::Mlp encoder;
  nn::Mlp decoder;
  std::size_t outputs = 1;

  void collect(std::vector<ad::Parameter*>& out) {
    encoder.collect(out);
    decoder.collect(out);
  }
};

inline ReconNet make_recon_net(const std::string& name, std::size_t feature_width, std::size_t outputs,
                               std::mt19937_64& rng, std::size_t hidden = 64) {
  ReconNet net;
  net.encoder = nn::Mlp(name + ".enc", {3 + feature_width, hidden, hidden}, rng, /*activate_last=*/true);
  net.decoder = nn::Mlp(name + ".dec", {hidden, hidden, 3 * outputs}, rng);
  net.outputs = outputs;
  return net;
}

/// Point and shape reconstruction networks for one feature width and patch size k.
struct ReconNets {
  ReconNet point;
  ReconNet shape;
  std::size_t k = 16;
  std::size_t feature_width = 0;

  void collect(std::vector<ad::Parameter*>& out) {
    point.collect(out);
    shape.collect(out);
  }

  nlohmann::json manifest() const {
    return {{"k", k},
            {"feature_width", feature_width},
            {"point", {point.encoder.manifest(), point.decoder.manifest()}},
            {"shape", {shape.encoder.manifest(), shape.decoder.manifest()}}};
  }
};

inline ReconNets make_recon_nets(const std::string& name, std::size_t feature_width, std::size_t k,
                                 std::mt19937_64& rng, std::size_t hidden = 64) {
  detail::require(k >= 2 && k % 2 == 0, "reconstruction: k must be even and at least 2");
  ReconNets nets;
  nets.point = make_recon_net(name + ".point", feature_width, 1, rng, hidden);
  nets.shape = make_recon_net(name + ".shape", feature_width, k, rng, hidden);
  nets.k = k;
  nets.feature_width = feature_width;
  return nets;
}

// =============================================================================
// Reconstruction on the tape
// =============================================================================

namespace detail {

/// Encodes equal-size groups of rows and returns one pooled code per group.
/// `flat` lists the member indices of all groups back to back; `anchors` holds
/// one 3-vector per group.
inline Tensor encode_groups(Tape& tape, const Matrix& coords, const Tensor& feats, std::span<const std::size_t> flat,
                            std::size_t group, const Matrix& anchors, const ReconNet& net) {
  const auto groups = anchors.rows();
  Matrix rel(Eigen::Index(flat.size()), 3);
  for (std::size_t r = 0; r < flat.size(); ++r)
    rel.row(Eigen::Index(r)) = coords.row(Eigen::Index(flat[r])) - anchors.row(Eigen::Index(r / group));
  require(std::size_t(groups) * group == flat.size(), "encode_groups: ragged groups");
  Tensor rows = ad::concat_cols(tape.constant(std::move(rel)), ad::gather_rows(feats, flat));
  return ad::segment_max_rows(net.encoder.forward(tape, rows), group);
}

inline void require_features(const Tensor& feats, std::size_t n, const ReconNet& net) {
  require(feats.valid() && feats.cols() > 0, "reconstruction: features are required");
  require(std::size_t(feats.rows()) == n, "reconstruction: feature rows must equal point count");
  require(std::size_t(feats.cols()) + 3 == net.encoder.in_width(), "reconstruction: feature width mismatch");
}

}  // namespace detail

/// Predicted coordinates (one row per neighbor set) from neighbor positions
/// and features. Neighbor sets must share one size and exclude their center.
inline Tensor reconstruct_points(Tape& tape, const Matrix& coords, const Tensor& feats,
                                 std::span<const NeighborSet> neighbors, const ReconNet& net) {
  detail::require_features(feats, std::size_t(coords.rows()), net);
  detail::require(!neighbors.empty(), "reconstruct_points: no neighbor sets");
  const std::size_t k = neighbors.front().indices.size();
  detail::require(k >= 1, "reconstruct_points: empty neighbor set");
  IndexList flat;
  flat.reserve(neighbors.size() * k);
  Matrix anchors(Eigen::Index(neighbors.size()), 3);
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const NeighborSet& ns = neighbors[i];
    detail::require(ns.indices.size() == k, "reconstruct_points: neighbor sets differ in size");
    detail::require(std::find(ns.indices.begin(), ns.indices.end(), ns.center) == ns.indices.end(),
                    "reconstruct_points: neighbor set must exclude its center");
    Vec3 c = Vec3::Zero();
    for (std::size_t j : ns.indices) {
      detail::require(j < std::size_t(coords.rows()), "reconstruct_points: neighbor index out of range");
      c += coords.row(Eigen::Index(j));
      flat.push_back(j);
    }
    anchors.row(Eigen::Index(i)) = c / double(k);
  }
  Tensor code = detail::encode_groups(tape, coords, feats, flat, k, anchors, net);
  Tensor offsets = net.decoder.forward(tape, code);
  return ad::add(tape.constant(std::move(anchors)), offsets);
}

/// ||p_i - p̂_i|| per neighbor-set center: n x 1.
inline Tensor point_loss(Tape& tape, const Matrix& coords, std::span<const NeighborSet> neighbors,
                         const Tensor& predicted) {
  detail::require(std::size_t(predicted.rows()) == neighbors.size() && predicted.cols() == 3,
                  "point_loss: predicted must be n x 3");
  Matrix target(predicted.rows(), 3);
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    target.row(Eigen::Index(i)) = coords.row(Eigen::Index(neighbors[i].center));
  return ad::l2_norm_rows(ad::sub(tape.constant(std::move(target)), predicted));
}

/// Predicted member coordinates of every patch, (P*K) x 3, rows aligned with
/// each patch's `members` order.
inline Tensor reconstruct_shapes(Tape& tape, const Matrix& coords, const Tensor& feats, std::span<const Patch> patches,
                                 const ReconNet& net) {
  detail::require_features(feats, std::size_t(coords.rows()), net);
  detail::require(!patches.empty(), "reconstruct_shapes: no patches");
  const std::size_t k = patches.front().members.size();
  detail::require(net.outputs == k, "reconstruct_shapes: network was built for a different patch size");
  const std::size_t half = patches.front().retained.size();
  detail::require(half >= 1, "reconstruct_shapes: retained set is empty");
  IndexList flat;
  flat.reserve(patches.size() * half);
  Matrix anchors(Eigen::Index(patches.size()), 3);
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const Patch& p = patches[j];
    detail::require(p.members.size() == k && p.retained.size() == half, "reconstruct_shapes: patches differ in size");
    Vec3 c = Vec3::Zero();
    for (std::size_t i : p.retained) {
      detail::require(i < std::size_t(coords.rows()), "reconstruct_shapes: index out of range");
      c += coords.row(Eigen::Index(i));
      flat.push_back(i);
    }
    anchors.row(Eigen::Index(j)) = c / double(half);
  }
  Tensor code = detail::encode_groups(tape, coords, feats, flat, half, anchors, net);
  Tensor offsets = ad::reshape(net.decoder.forward(tape, code), Eigen::Index(patches.size() * k), 3);
  Matrix base(Eigen::Index(patches.size() * k), 3);
  for (std::size_t r = 0; r < patches.size() * k; ++r) base.row(Eigen::Index(r)) = anchors.row(Eigen::Index(r / k));
  return ad::add(tape.constant(std::move(base)), offsets);
}

/// Sum over members of ||q_k - q̂_k|| per patch: P x 1.
inline Tensor shape_loss(Tape& tape, const Matrix& coords, std::span<const Patch> patches, const Tensor& predicted) {
  detail::require(!patches.empty(), "shape_loss: no patches");
  const std::size_t k = patches.front().members.size();
  detail::require(std::size_t(predicted.rows()) == patches.size() * k && predicted.cols() == 3,
                  "shape_loss: predicted rows must match patch members");
  Matrix target(predicted.rows(), 3);
  for (std::size_t j = 0; j < patches.size(); ++j)
    for (std::size_t m = 0; m < k; ++m)
      target.row(Eigen::Index(j * k + m)) = coords.row(Eigen::Index(patches[j].members[m]));
  return ad::segment_sum_rows(ad::l2_norm_rows(ad::sub(tape.constant(std::move(target)), predicted)), k);
}

// =============================================================================
// Single-item convenience API
// =============================================================================

struct ReconstructionResult {
  Matrix predicted;
  std::vector<double> loss;
};

inline Vec3 reconstruct_point(const PointCloud& cloud, std::size_t center, const NeighborSet& neighbors,
                              const ReconNet& net) {
  detail::require(cloud.has_features(), "reconstruct_point: cloud has no features");
  detail::require(neighbors.center == center, "reconstruct_point: neighbor set belongs to another center");
  Tape tape;
  const Tensor feats = tape.constant(cloud.feats());
  const NeighborSet one[1] = {neighbors};
  return reconstruct_points(tape, cloud.coords(), feats, one, net).value().row(0);
}

/// Per-point Euclidean distance between cloud coordinates and `predicted`.
inline std::vector<double> point_loss(const PointCloud& cloud, const Matrix& predicted) {
  detail::require(predicted.rows() == Eigen::Index(cloud.size()) && predicted.cols() == 3,
                  "point_loss: predicted must be N x 3");
  std::vector<double> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out[i] = (cloud.coords().row(Eigen::Index(i)) - predicted.row(Eigen::Index(i))).norm();
  return out;
}

inline Matrix reconstruct_shape(const PointCloud& cloud, const Patch& patch, const ReconNet& net) {
  detail::require(cloud.has_features(), "reconstruct_shape: cloud has no features");
  detail::require(!patch.retained.empty(), "reconstruct_shape: retained set is empty");
  Tape tape;
  const Tensor feats = tape.constant(cloud.feats());
  const Patch one[1] = {patch};
  return reconstruct_shapes(tape, cloud.coords(), feats, one, net).value();
}

inline double shape_loss(const PointCloud& cloud, const Patch& patch, const Matrix& predicted) {
  detail::require(predicted.rows() == Eigen::Index(patch.members.size()) && predicted.cols() == 3,
                  "shape_loss: predicted must have one row per patch member");
  double s = 0;
  for (std::size_t m = 0; m < patch.members.size(); ++m)
    s += (cloud.coords().row(Eigen::Index(patch.members[m])) - predicted.row(Eigen::Index(m))).norm();
  return s;
}

// =============================================================================
// Scoring
// =============================================================================

struct ScoreTable {
  std::vector<double> point_score;
  std::vector<double> shape_score;
  std::vector<double> total;
  double alpha = 0.8;

  std::size_t size() const { return total.size(); }
};

/// (x - min) / (max - min); all zeros when max == min.
inline std::vector<double> min_max_normalize(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

/// Removed members of patch j get normalized_loss[j], retained members get
/// 1 - normalized_loss[j]. Multiple assignments average; uncovered points get 0.5.
inline std::vector<double> assign_shape_scores(std::size_t n, std::span<const Patch> patches,
                                               std::span<const double> normalized_loss) {
  detail::require(patches.size() == normalized_loss.size(), "shape scores: one loss per patch required");
  std::vector<double> acc(n, 0.0);
  std::vector<std::size_t> hits(n, 0);
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const double l = normalized_loss[j];
    for (std::size_t i : patches[j].removed) {
      detail::require(i < n, "shape scores: patch index out of range");
      acc[i] += l;
      ++hits[i];
    }
    for (std::size_t i : patches[j].retained) {
      detail::require(i < n, "shape scores: patch index out of range");
      acc[i] += 1.0 - l;
      ++hits[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) acc[i] = hits[i] ? acc[i] / double(hits[i]) : 0.5;
  return acc;
}

inline ScoreTable score(std::span<const double> point_losses, std::span<const Patch> patches,
                        std::span<const double> shape_losses, double alpha) {
  detail::require(!point_losses.empty(), "score: no point losses");
  detail::require(!patches.empty() && patches.size() == shape_losses.size(), "score: need one loss per patch");
  detail::require(alpha >= 0 && alpha <= 1, "score: alpha must lie in [0, 1]");
  ScoreTable t;
  t.alpha = alpha;
  t.point_score = min_max_normalize(point_losses);
  const auto norm_shape = min_max_normalize(shape_losses);
  t.shape_score = assign_shape_scores(point_losses.size(), patches, norm_shape);
  t.total.resize(point_losses.size());
  for (std::size_t i = 0; i < t.total.size(); ++i)
    t.total[i] = alpha * t.point_score[i] + (1 - alpha) * t.shape_score[i];
  return t;
}

/// The m highest totals, ties by ascending index, in descending score order.
inline SampleResult sample_top_m(const ScoreTable& scores, std::size_t m) {
  const std::size_t n = scores.size();
  detail::require(m >= 1 && m <= n, "sample_top_m: m must be in [1, N]");
  IndexList idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    return scores.total[a] != scores.total[b] ? scores.total[a] > scores.total[b] : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(m), idx.end(), better);
  idx.resize(m);
  return SampleResult{std::move(idx), n};
}

// =============================================================================
// End-to-end pipeline
// =============================================================================

struct RepsConfig {
  std::size_t k = 16;
  double alpha = 0.8;
  std::size_t num_patches = 0;  // 0: ceil(N / k)
  std::uint64_t seed = 0;
  bool prefilter = false;
  PatchStart start = PatchStart::seeded;
};

struct RepsForward {
  std::vector<NeighborSet> neighbors;
  std::vector<Patch> patches;
  Tensor predicted_points;  // N x 3
  Tensor point_losses;      // N x 1
  Tensor predicted_shapes;  // (P*K) x 3
  Tensor shape_losses;      // P x 1
  ScoreTable scores;
};

inline std::vector<double> column(const Tensor& t) {
  const Matrix& v = t.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

/// Both reconstructions and the score table for one cloud. Losses stay on
/// the tape so callers can train on them.
inline RepsForward reps_forward(Tape& tape, const Matrix& coords, const Tensor& feats, const ReconNets& nets,
                                const RepsConfig& cfg) {
  detail::require(cfg.k == nets.k, "reps: k differs from the trained patch size " + std::to_string(nets.k));
  const PointCloud cloud(coords);
  const std::size_t n = cloud.size();
  detail::require(n >= cfg.k + 1, "reps: cloud needs more than k points");
  RepsForward out;
  out.neighbors = knn_all(cloud, cfg.k, NeighborOptions{.include_self = false});
  out.predicted_points = reconstruct_points(tape, coords, feats, out.neighbors, nets.point);
  out.point_losses = point_loss(tape, coords, out.neighbors, out.predicted_points);

  const std::size_t patches = cfg.num_patches ? cfg.num_patches : default_num_patches(n, cfg.k);
  out.patches = partition_patches(cloud, patches, cfg.k, cfg.seed, cfg.start);
  out.predicted_shapes = reconstruct_shapes(tape, coords, feats, out.patches, nets.shape);
  out.shape_losses = shape_loss(tape, coords, out.patches, out.predicted_shapes);

  out.scores = score(column(out.point_losses), out.patches, column(out.shape_losses), cfg.alpha);
  return out;
}

/// Score table for a cloud with fixed features (no gradients).
inline ScoreTable compute_scores(const PointCloud& cloud, const Matrix& feats, const ReconNets& nets,
                                 const RepsConfig& cfg) {
  Tape tape;
  return reps_forward(tape, cloud.coords(), tape.constant(feats), nets, cfg).scores;
}

namespace detail {

inline std::size_t start_index(const PointCloud& cloud, const RepsConfig& cfg) {
  if (cfg.start == PatchStart::farthest_from_centroid) return farthest_from_centroid(cloud);
  std::mt19937_64 rng(cfg.seed ^ 0xA5A5A5A55A5A5A5AULL);
  return std::uniform_int_distribution<std::size_t>(0, cloud.size() - 1)(rng);
}

}  // namespace detail

/// Reconstruction scoring on the whole cloud, then top-m selection. With the
/// prefilter, only the 2m points kept by FPS compete for the m slots; their
/// scores still come from the full-density neighborhoods the reconstruction
/// nets were trained on. Returned indices address the input cloud.
inline SampleResult reps_sample(const PointCloud& cloud, const Matrix& feats, std::size_t m, const RepsConfig& cfg,
                                const ReconNets& nets) {
  detail::require_nonempty(cloud);
  detail::require(m >= 1 && m <= cloud.size(), "reps_sample: m must be in [1, N]");
  detail::require(feats.rows() == Eigen::Index(cloud.size()), "reps_sample: feature rows must equal point count");
  const ScoreTable full = compute_scores(cloud, feats, nets, cfg);
  if (!cfg.prefilter) return sample_top_m(full, m);

  detail::require(2 * m <= cloud.size(), "reps_sample: prefilter needs 2m <= N");
  IndexList pool = farthest_point_sample(cloud, 2 * m, detail::start_index(cloud, cfg)).indices;
  // Ascending pool order keeps the lower-index tie rule of sample_top_m.
  std::sort(pool.begin(), pool.end());
  ScoreTable t;
  t.alpha = full.alpha;
  for (std::size_t i : pool) {
    t.point_score.push_back(full.point_score[i]);
    t.shape_score.push_back(full.shape_score[i]);
    t.total.push_back(full.total[i]);
  }
  SampleResult local = sample_top_m(t, m);
  for (std::size_t& i : local.indices) i = pool[i];
  local.source_size = cloud.size();
  return local;
}

}  // namespace reps

#endif  // REPS_SCORING_HPP
