// Global-local fusion attention feature extractor.
//
// For every sampled point: gather the features of its k nearest neighbors,
// project them, run self-attention inside the neighborhood and max-pool to a
// single row. The pooled rows then attend to each other globally before a
// final projection.

#ifndef REPS_GLFA_HPP
#define REPS_GLFA_HPP

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/autodiff.hpp"
#include "reps/geometry.hpp"
#include "reps/nn.hpp"

namespace reps {

struct GlfaParams {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  nn::Mlp pre;   // d_in -> hidden -> hidden
  nn::Mlp post;  // hidden -> d_out -> d_out

  void collect(std::vector<ad::Parameter*>& out) {
    pre.collect(out);
    post.collect(out);
  }

  nlohmann::json manifest() const { return {{"d_in", d_in}, {"d_out", d_out}, {"pre", pre.manifest()}, {"post", post.manifest()}}; }
};

inline GlfaParams make_glfa(const std::string& name, std::size_t d_in, std::size_t hidden, std::size_t d_out,
                            std::mt19937_64& rng) {
  GlfaParams p;
  p.d_in = d_in;
  p.d_out = d_out;
  p.pre = nn::Mlp(name + ".pre", {d_in, hidden, hidden}, rng, /*activate_last=*/true);
  p.post = nn::Mlp(name + ".post", {hidden, d_out, d_out}, rng, /*activate_last=*/true);
  return p;
}

/// Pooled local features, one row per sampled point (before global attention).
inline ad::Tensor glfa_local(ad::Tape& tape, const PointCloud& cloud, const ad::Tensor& feats,
                             const SampleResult& sampled, std::size_t k, const GlfaParams& params) {
  detail::require(std::size_t(feats.rows()) == cloud.size(), "glfa: feature rows must equal point count");
  detail::require(std::size_t(feats.cols()) == params.d_in, "glfa: feature width does not match d_in");
  detail::require(!sampled.indices.empty(), "glfa: no sampled points");
  detail::require(k >= 1 && k <= cloud.size(), "glfa: k must be in [1, N]");
  const auto groups = knn_batch(cloud, sampled.indices, k);
  IndexList flat;
  flat.reserve(groups.size() * k);
  for (const auto& g : groups) flat.insert(flat.end(), g.indices.begin(), g.indices.end());
  ad::Tensor rows = params.pre.forward(tape, ad::gather_rows(feats, flat));
  return ad::segment_max_rows(ad::segment_self_attention(rows, k), k);
}

/// M x d_out features for the sampled points.
inline ad::Tensor glfa_forward(ad::Tape& tape, const PointCloud& cloud, const ad::Tensor& feats,
                               const SampleResult& sampled, std::size_t k, const GlfaParams& params) {
  ad::Tensor local = glfa_local(tape, cloud, feats, sampled, k, params);
  return params.post.forward(tape, ad::self_attention(local));
}

}  // namespace reps

#endif  // REPS_GLFA_HPP
