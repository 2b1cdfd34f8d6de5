// Desk-scale networks: the REPS classifier (embedding, repeated
// [downsample + GLFA] stages, max-pool, MLP head), a PointNet-style task
// network used as the frozen evaluator, and the standalone REPS sampler
// (embedding + first-stage reconstruction nets) extracted from a classifier.

#ifndef REPS_MODELS_HPP
#define REPS_MODELS_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/autodiff.hpp"
#include "reps/geometry.hpp"
#include "reps/glfa.hpp"
#include "reps/nn.hpp"
#include "reps/scoring.hpp"
#include "reps/training.hpp"

namespace reps {

// =============================================================================
// REPS classifier
// =============================================================================

struct ClassifierConfig {
  std::size_t num_classes = 4;
  std::size_t embed_width = 32;
  std::vector<std::size_t> stage_widths{64, 64};
  std::size_t glfa_hidden = 64;
  std::size_t recon_hidden = 64;
  std::size_t head_hidden = 64;
  std::size_t k = 16;
  double alpha = 0.8;

  nlohmann::json to_json() const {
    return {{"num_classes", num_classes}, {"embed_width", embed_width}, {"stage_widths", stage_widths},
            {"glfa_hidden", glfa_hidden}, {"recon_hidden", recon_hidden}, {"head_hidden", head_hidden},
            {"k", k},                     {"alpha", alpha}};
  }

  static ClassifierConfig from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.num_classes = j.at("num_classes");
    c.embed_width = j.at("embed_width");
    c.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
    c.glfa_hidden = j.at("glfa_hidden");
    c.recon_hidden = j.at("recon_hidden");
    c.head_hidden = j.at("head_hidden");
    c.k = j.at("k");
    c.alpha = j.at("alpha");
    return c;
  }
};

struct SetAbstractionStage {
  ReconNets recon;
  GlfaParams glfa;
};

struct ForwardOptions {
  std::uint64_t seed = 0;
  /// Inference uses an order-independent patch start so that permuting the
  /// input points does not change the logits.
  PatchStart start = PatchStart::farthest_from_centroid;
};

struct ClassifyOutput {
  ad::Tensor logits;       // 1 x num_classes
  ad::Tensor sample_loss;  // 1 x 1, summed over stages
  std::vector<SampleResult> selections;
};

class RepsClassifier {
 public:
  RepsClassifier() = default;

  RepsClassifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    detail::require(!cfg.stage_widths.empty(), "classifier: need at least one stage");
    detail::require(cfg.num_classes >= 1, "classifier: need at least one class");
    std::mt19937_64 rng(seed);
    embed_ = nn::Mlp("embed", {3, cfg.embed_width, cfg.embed_width}, rng, true);
    std::size_t width = cfg.embed_width;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
      const std::string name = "stage" + std::to_string(s);
      SetAbstractionStage st;
      st.recon = make_recon_nets(name, width, cfg.k, rng, cfg.recon_hidden);
      st.glfa = make_glfa(name + ".glfa", width, cfg.glfa_hidden, cfg.stage_widths[s], rng);
      stages_.push_back(std::move(st));
      width = cfg.stage_widths[s];
    }
    head_ = nn::Mlp("head", {width, cfg.head_hidden, cfg.num_classes}, rng);
  }

  const ClassifierConfig& config() const { return cfg_; }
  const nn::Mlp& embed() const { return embed_; }
  nn::Mlp& head() { return head_; }
  const nn::Mlp& head() const { return head_; }
  const std::vector<SetAbstractionStage>& stages() const { return stages_; }

  /// Smallest cloud the stage stack accepts.
  std::size_t min_points() const {
    // The last stage sees N / 2^(S-1) points and must hold k neighbors plus self.
    return (cfg_.k + 1) << (stages_.size() - 1);
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    embed_.collect(out);
    for (auto& st : stages_) {
      st.recon.collect(out);
      st.glfa.collect(out);
    }
    head_.collect(out);
    return out;
  }

  nlohmann::json manifest() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : stages_) stages.push_back({{"recon", st.recon.manifest()}, {"glfa", st.glfa.manifest()}});
    return {{"format", "REPS"},
            {"model", "reps_classifier"},
            {"config", cfg_.to_json()},
            {"embed", embed_.manifest()},
            {"stages", stages},
            {"head", head_.manifest()}};
  }

  ClassifyOutput forward(ad::Tape& tape, const PointCloud& cloud, const ForwardOptions& opt) const {
    detail::require(cloud.size() >= min_points(),
                    "classify: cloud has " + std::to_string(cloud.size()) + " points, need at least " +
                        std::to_string(min_points()));
    ClassifyOutput out;
    Matrix coords = cloud.coords();
    ad::Tensor feats = embed_.forward(tape, tape.constant(coords));
    ad::Tensor sample_loss;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      RepsConfig rc;
      rc.k = cfg_.k;
      rc.alpha = cfg_.alpha;
      rc.seed = mix_seed(opt.seed, s);
      rc.start = opt.start;
      RepsForward rf = reps_forward(tape, coords, feats, st.recon, rc);
      ad::Tensor stage_loss = reps::sample_loss(rf.point_losses, rf.shape_losses);
      sample_loss = sample_loss.valid() ? ad::add(sample_loss, stage_loss) : stage_loss;

      const SampleResult sel = sample_top_m(rf.scores, coords.rows() / 2);
      const PointCloud current(coords);
      feats = glfa_forward(tape, current, feats, sel, cfg_.k, st.glfa);
      coords = reps::gather_rows(coords, sel.indices);
      out.selections.push_back(sel);
    }
    out.logits = head_.forward(tape, ad::max_pool_rows(feats));
    out.sample_loss = sample_loss;
    return out;
  }

  LossParts loss(ad::Tape& tape, const LabeledCloud& item, std::uint64_t step_seed, double task_weight) const {
    ClassifyOutput out = forward(tape, item.cloud, ForwardOptions{step_seed, PatchStart::seeded});
    ad::Tensor task = ad::cross_entropy(out.logits, item.label);
    LossParts parts;
    parts.sample = out.sample_loss.scalar();
    parts.task = task.scalar();
    parts.total = total_loss(out.sample_loss, task, task_weight);
    return parts;
  }

  Matrix logits(const PointCloud& cloud, const ForwardOptions& opt = {}) const {
    ad::Tape tape;
    return forward(tape, cloud, opt).logits.value();
  }

  std::size_t predict(const PointCloud& cloud) const {
    Eigen::Index arg = 0;
    logits(cloud).row(0).maxCoeff(&arg);
    return std::size_t(arg);
  }

  void save(const std::filesystem::path& path) {
    auto ps = parameters();
    std::vector<const ad::Parameter*> cps(ps.begin(), ps.end());
    nn::save_parameters(path, cps, manifest());
  }

  static RepsClassifier load(const std::filesystem::path& path) {
    const auto manifest = nn::load_manifest(path);
    if (manifest.is_null() || manifest.value("model", "") != "reps_classifier")
      throw ParseError("weights: " + path.string() + " has no REPS classifier manifest");
    RepsClassifier m(ClassifierConfig::from_json(manifest.at("config")), 0);
    nn::assign_parameters(nn::load_tensor_file(path), m.parameters());
    return m;
  }

 private:
  ClassifierConfig cfg_;
  nn::Mlp embed_;
  std::vector<SetAbstractionStage> stages_;
  nn::Mlp head_;
};

/// Logits of the classifier for one cloud (inference mode).
inline Matrix classify_forward(const PointCloud& cloud, const RepsClassifier& model, const ForwardOptions& opt = {}) {
  return model.logits(cloud, opt);
}

// =============================================================================
// PointNet-style task network
// =============================================================================

struct PointNetConfig {
  std::size_t num_classes = 4;
  std::vector<std::size_t> point_widths{3, 64, 128};
  std::size_t head_hidden = 64;
};

/// Shared per-point MLP on raw coordinates, max-pool, MLP head.
class PointNetClassifier {
 public:
  PointNetClassifier() = default;

  PointNetClassifier(const PointNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    detail::require(cfg.point_widths.size() >= 2 && cfg.point_widths.front() == 3,
                    "pointnet: point MLP must start at width 3");
    std::mt19937_64 rng(seed);
    point_ = nn::Mlp("pointnet.mlp", cfg.point_widths, rng, true);
    head_ = nn::Mlp("pointnet.head", {cfg.point_widths.back(), cfg.head_hidden, cfg.num_classes}, rng);
  }

  const PointNetConfig& config() const { return cfg_; }

  ad::Tensor forward(ad::Tape& tape, const PointCloud& cloud) const {
    detail::require(!cloud.empty(), "pointnet: empty cloud");
    return head_.forward(tape, ad::max_pool_rows(point_.forward(tape, tape.constant(cloud.coords()))));
  }

  LossParts loss(ad::Tape& tape, const LabeledCloud& item, std::uint64_t, double task_weight) const {
    ad::Tensor task = ad::cross_entropy(forward(tape, item.cloud), item.label);
    LossParts parts;
    parts.task = task.scalar();
    parts.sample = 0;
    parts.total = task_weight == 1.0 ? task : ad::scale(task, task_weight);
    return parts;
  }

  std::size_t predict(const PointCloud& cloud) const {
    ad::Tape tape;
    Eigen::Index arg = 0;
    forward(tape, cloud).value().row(0).maxCoeff(&arg);
    return std::size_t(arg);
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    point_.collect(out);
    head_.collect(out);
    return out;
  }

  std::vector<const ad::Parameter*> parameters() const {
    auto ps = const_cast<PointNetClassifier*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  nlohmann::json manifest() const {
    return {{"format", "REPS"},
            {"model", "pointnet"},
            {"config", {{"num_classes", cfg_.num_classes}, {"point_widths", cfg_.point_widths}, {"head_hidden", cfg_.head_hidden}}},
            {"point_mlp", point_.manifest()},
            {"head", head_.manifest()}};
  }

  void save(const std::filesystem::path& path) const { nn::save_parameters(path, parameters(), manifest()); }

  static PointNetClassifier load(const std::filesystem::path& path) {
    const auto manifest = nn::load_manifest(path);
    if (manifest.is_null() || manifest.value("model", "") != "pointnet")
      throw ParseError("weights: " + path.string() + " has no pointnet manifest");
    const auto& c = manifest.at("config");
    PointNetConfig cfg;
    cfg.num_classes = c.at("num_classes");
    cfg.point_widths = c.at("point_widths").get<std::vector<std::size_t>>();
    cfg.head_hidden = c.at("head_hidden");
    PointNetClassifier m(cfg, 0);
    nn::assign_parameters(nn::load_tensor_file(path), m.parameters());
    return m;
  }

 private:
  PointNetConfig cfg_;
  nn::Mlp point_;
  nn::Mlp head_;
};

// =============================================================================
// Standalone sampler
// =============================================================================

/// Coordinates-only REPS sampler: the classifier's embedding produces the
/// per-point features, the first stage's reconstruction nets score them.
class RepsSampler {
 public:
  RepsSampler() = default;
  RepsSampler(nn::Mlp embed, ReconNets recon, double alpha) : embed_(std::move(embed)), recon_(std::move(recon)), alpha_(alpha) {}

  static RepsSampler from_classifier(const RepsClassifier& model) {
    return RepsSampler(model.embed(), model.stages().front().recon, model.config().alpha);
  }

  /// Loads the sampler part of a classifier weights file.
  static RepsSampler load(const std::filesystem::path& path) {
    const auto manifest = nn::load_manifest(path);
    if (manifest.is_null() || manifest.value("model", "") != "reps_classifier")
      throw ParseError("weights: " + path.string() + " is not a REPS sampler checkpoint");
    RepsClassifier skeleton(ClassifierConfig::from_json(manifest.at("config")), 0);
    RepsSampler s = from_classifier(skeleton);
    nn::assign_parameters(nn::load_tensor_file(path), s.parameters());
    return s;
  }

  std::size_t k() const { return recon_.k; }
  double alpha() const { return alpha_; }
  const ReconNets& recon() const { return recon_; }

  Matrix features(const PointCloud& cloud) const {
    ad::Tape tape;
    return embed_.forward(tape, tape.constant(cloud.coords())).value();
  }

  RepsConfig config(std::uint64_t seed, bool prefilter) const {
    RepsConfig c;
    c.k = recon_.k;
    c.alpha = alpha_;
    c.seed = seed;
    c.prefilter = prefilter;
    return c;
  }

  ScoreTable scores(const PointCloud& cloud, const RepsConfig& cfg) const {
    return compute_scores(cloud, features(cloud), recon_, cfg);
  }

  SampleResult sample(const PointCloud& cloud, std::size_t m, const RepsConfig& cfg) const {
    return reps_sample(cloud, features(cloud), m, cfg, recon_);
  }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    embed_.collect(out);
    recon_.collect(out);
    return out;
  }

  std::vector<const ad::Parameter*> parameters() const {
    auto ps = const_cast<RepsSampler*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

 private:
  nn::Mlp embed_;
  ReconNets recon_;
  double alpha_ = 0.8;
};

}  // namespace reps

#endif  // REPS_MODELS_HPP
