// Sampler comparison: every test cloud is downsampled to M points and fed to a
// frozen task network trained on full-size clouds; overall accuracy is
// recorded per (sampler, M). Also the training/evaluation driver used by the
// CLI and the ablation sweeps over K and alpha.

#ifndef REPS_EVALUATION_HPP
#define REPS_EVALUATION_HPP

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/dataset.hpp"
#include "reps/geometry.hpp"
#include "reps/models.hpp"
#include "reps/parallel.hpp"
#include "reps/training.hpp"

namespace reps {

// =============================================================================
// Metrics
// =============================================================================

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : n_(classes), counts_(classes * classes, 0) {}

  void add(std::size_t truth, std::size_t predicted) {
    detail::require(truth < n_ && predicted < n_, "confusion matrix: class out of range");
    ++counts_[truth * n_ + predicted];
  }

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::size_t classes() const { return n_; }

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  double overall_accuracy() const {
    const std::size_t t = total();
    if (t == 0) return 0.0;
    std::size_t diag = 0;
    for (std::size_t i = 0; i < n_; ++i) diag += at(i, i);
    return double(diag) / double(t);
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

// =============================================================================
// Samplers
// =============================================================================

/// A sampler sees coordinates only, never labels.
using SamplerFn = std::function<SampleResult(const PointCloud&, std::size_t m, std::uint64_t seed)>;

struct NamedSampler {
  std::string name;
  SamplerFn fn;
};

struct EvalRow {
  std::string sampler;
  std::size_t m = 0;
  double accuracy = 0;
};

inline NamedSampler identity_sampler() {
  return {"identity", [](const PointCloud& c, std::size_t m, std::uint64_t) {
            detail::require(m >= 1 && m <= c.size(), "identity sampler: m must be in [1, N]");
            IndexList idx(m);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            return SampleResult{std::move(idx), c.size()};
          }};
}

inline NamedSampler random_sampler() {
  return {"random", [](const PointCloud& c, std::size_t m, std::uint64_t seed) { return random_sample(c, m, seed); }};
}

inline NamedSampler fps_sampler() {
  return {"fps", [](const PointCloud& c, std::size_t m, std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            return farthest_point_sample(c, m, std::uniform_int_distribution<std::size_t>(0, c.size() - 1)(rng));
          }};
}

/// Voxel grid with the size bisected so that at least m cells are occupied;
/// surplus representatives are thinned to exactly m by FPS.
inline SampleResult voxel_sample_to_m(const PointCloud& c, std::size_t m) {
  detail::require(m >= 1 && m <= c.size(), "voxel sampler: m must be in [1, N]");
  const Vec3 extent = c.coords().colwise().maxCoeff() - c.coords().colwise().minCoeff();
  double hi = std::max(extent.norm(), 1e-9) * 2;  // one voxel
  double lo = hi * 1e-6;
  SampleResult best = voxel_sample(c, lo);
  if (best.m() < m) {
    IndexList all(c.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    best = SampleResult{std::move(all), c.size()};
  }
  for (int it = 0; it < 40; ++it) {
    const double mid = std::sqrt(lo * hi);
    SampleResult r = voxel_sample(c, mid);
    if (r.m() >= m) {
      lo = mid;
      if (r.m() < best.m()) best = std::move(r);
    } else {
      hi = mid;
    }
  }
  if (best.m() > m) {
    const SampleResult thin = farthest_point_sample(c.select(best.indices), m, 0);
    IndexList idx;
    for (std::size_t i : thin.indices) idx.push_back(best.indices[i]);
    std::sort(idx.begin(), idx.end());
    best.indices = std::move(idx);
  }
  best.source_size = c.size();
  return best;
}

inline NamedSampler voxel_sampler() {
  return {"voxel", [](const PointCloud& c, std::size_t m, std::uint64_t) { return voxel_sample_to_m(c, m); }};
}

/// REPS with the FPS-to-2M prefilter whenever 2M <= N.
inline NamedSampler reps_named_sampler(const RepsSampler& sampler, std::string name = "reps") {
  return {std::move(name), [&sampler](const PointCloud& c, std::size_t m, std::uint64_t seed) {
            return sampler.sample(c, m, sampler.config(seed, 2 * m <= c.size()));
          }};
}

inline NamedSampler make_named_sampler(const std::string& name, const RepsSampler* reps) {
  if (name == "identity") return identity_sampler();
  if (name == "random") return random_sampler();
  if (name == "fps") return fps_sampler();
  if (name == "voxel") return voxel_sampler();
  if (name == "reps") {
    detail::require(reps != nullptr, "reps sampler requires trained sampler weights");
    return reps_named_sampler(*reps);
  }
  throw InvalidArgument("unknown sampler: " + name);
}

// =============================================================================
// Harness
// =============================================================================

/// Accuracy of the frozen `task` network on every test cloud downsampled by
/// each sampler to each size. Per-cloud sampler seeds derive from `seed`.
inline std::vector<EvalRow> eval_samplers(std::span<const LabeledCloud> test, const PointNetClassifier& task,
                                          std::span<const NamedSampler> samplers, std::span<const std::size_t> sizes,
                                          std::uint64_t seed = 0) {
  detail::require(!test.empty(), "eval: empty test set");
  for (std::size_t m : sizes)
    for (const auto& item : test)
      detail::require(m >= 1 && m <= item.cloud.size(), "eval: sample size exceeds cloud size");
  std::vector<EvalRow> rows;
  for (const auto& s : samplers)
    for (std::size_t m : sizes) {
      std::vector<std::size_t> pred(test.size());
      parallel_for(test.size(), [&](std::size_t i) {
        const SampleResult r = s.fn(test[i].cloud, m, mix_seed(seed, i));
        pred[i] = task.predict(test[i].cloud.select(r.indices));
      });
      ConfusionMatrix cm(task.config().num_classes);
      for (std::size_t i = 0; i < test.size(); ++i) cm.add(test[i].label, pred[i]);
      rows.push_back(EvalRow{s.name, m, cm.overall_accuracy()});
    }
  return rows;
}

inline void write_eval_csv(std::ostream& os, std::span<const EvalRow> rows) {
  os << "sampler,M,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.accuracy);
    os << r.sampler << ',' << r.m << ',' << buf << '\n';
  }
}

inline nlohmann::json eval_summary(std::span<const EvalRow> rows) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : rows) j[r.sampler][std::to_string(r.m)] = r.accuracy;
  return j;
}

// =============================================================================
// Benchmark driver
// =============================================================================

struct BenchmarkConfig {
  std::uint64_t seed = 0;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t points = 512;
  std::size_t task_epochs = 12;
  std::size_t task_batch = 16;
  /// The REPS classifier trains on the first `sampler_train_per_class` clouds of each class.
  std::size_t sampler_train_per_class = 50;
  std::size_t sampler_epochs = 2;
  std::size_t sampler_batch = 8;
  double lr = 1e-3;
  ClassifierConfig classifier{};
  std::vector<std::size_t> sizes{32, 64};
  std::vector<std::string> samplers{"random", "fps", "reps"};
};

struct BenchmarkData {
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
};

inline BenchmarkData make_benchmark_data(const BenchmarkConfig& cfg) {
  return {make_synthetic_dataset(cfg.train_per_class, cfg.points, mix_seed(cfg.seed, 101)),
          make_synthetic_dataset(cfg.test_per_class, cfg.points, mix_seed(cfg.seed, 202))};
}

inline std::vector<LabeledCloud> per_class_subset(std::span<const LabeledCloud> data, std::size_t per_class) {
  std::vector<LabeledCloud> out;
  std::map<std::size_t, std::size_t> taken;
  for (const auto& item : data)
    if (taken[item.label]++ < per_class) out.push_back(item);
  return out;
}

inline TrainReport train_task_network(PointNetClassifier& task, std::span<const LabeledCloud> train_set,
                                      const BenchmarkConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.task_epochs;
  tc.batch_size = cfg.task_batch;
  tc.lr = cfg.lr;
  tc.seed = mix_seed(cfg.seed, 303);
  return train(train_set, task, tc);
}

inline TrainReport train_reps_classifier(RepsClassifier& model, std::span<const LabeledCloud> train_set,
                                         const BenchmarkConfig& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.sampler_epochs;
  tc.batch_size = cfg.sampler_batch;
  tc.lr = cfg.lr;
  tc.seed = mix_seed(cfg.seed, 404);
  tc.alpha = cfg.classifier.alpha;
  tc.k = cfg.classifier.k;
  const auto subset = per_class_subset(train_set, cfg.sampler_train_per_class);
  // Validation on a small slice keeps epoch bookkeeping cheap.
  const auto val = per_class_subset(train_set, 5);
  return train(std::span<const LabeledCloud>(subset), model, tc, std::span<const LabeledCloud>(val));
}

struct BenchmarkResult {
  std::vector<EvalRow> rows;
  TrainReport task_report;
  TrainReport sampler_report;
  PointNetClassifier task;
  RepsClassifier classifier;
};

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  const BenchmarkData data = make_benchmark_data(cfg);
  BenchmarkResult res;
  res.task = PointNetClassifier(PointNetConfig{cfg.classifier.num_classes}, mix_seed(cfg.seed, 1));
  res.task_report = train_task_network(res.task, data.train, cfg);
  res.classifier = RepsClassifier(cfg.classifier, mix_seed(cfg.seed, 2));
  res.sampler_report = train_reps_classifier(res.classifier, data.train, cfg);
  const RepsSampler sampler = RepsSampler::from_classifier(res.classifier);
  std::vector<NamedSampler> samplers;
  for (const auto& name : cfg.samplers) samplers.push_back(make_named_sampler(name, &sampler));
  res.rows = eval_samplers(data.test, res.task, samplers, cfg.sizes, mix_seed(cfg.seed, 505));
  return res;
}

// =============================================================================
// Ablation
// =============================================================================

struct AblationConfig {
  BenchmarkConfig base{};
  std::vector<std::size_t> ks{4, 8, 16, 32};
  std::vector<double> alphas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
};

struct AblationRow {
  std::string parameter;  // "k" or "alpha"
  double value = 0;
  std::size_t m = 0;
  double accuracy = 0;
};

/// K sweep retrains the sampler per K; alpha sweep reuses the base-K sampler
/// and only changes the score blend. One frozen task network serves both.
inline std::vector<AblationRow> run_ablation(const AblationConfig& cfg) {
  const BenchmarkData data = make_benchmark_data(cfg.base);
  PointNetClassifier task(PointNetConfig{cfg.base.classifier.num_classes}, mix_seed(cfg.base.seed, 1));
  train_task_network(task, data.train, cfg.base);
  std::vector<AblationRow> rows;

  auto eval_one = [&](const RepsSampler& sampler, const std::string& param, double value) {
    const NamedSampler ns[1] = {reps_named_sampler(sampler)};
    for (const auto& r : eval_samplers(data.test, task, ns, cfg.base.sizes, mix_seed(cfg.base.seed, 505)))
      rows.push_back(AblationRow{param, value, r.m, r.accuracy});
  };

  std::map<std::size_t, RepsClassifier> trained;
  for (std::size_t k : cfg.ks) {
    BenchmarkConfig bc = cfg.base;
    bc.classifier.k = k;
    RepsClassifier model(bc.classifier, mix_seed(bc.seed, 2));
    train_reps_classifier(model, data.train, bc);
    eval_one(RepsSampler::from_classifier(model), "k", double(k));
    trained.emplace(k, std::move(model));
  }
  auto base = trained.find(cfg.base.classifier.k);
  RepsClassifier base_model;
  if (base == trained.end()) {
    base_model = RepsClassifier(cfg.base.classifier, mix_seed(cfg.base.seed, 2));
    train_reps_classifier(base_model, data.train, cfg.base);
  } else {
    base_model = base->second;
  }
  for (double a : cfg.alphas) eval_one(RepsSampler(base_model.embed(), base_model.stages().front().recon, a), "alpha", a);
  return rows;
}

inline void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "parameter,value,M,accuracy\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%g,%zu,%.6f\n", r.parameter.c_str(), r.value, r.m, r.accuracy);
    os << buf;
  }
}

}  // namespace reps

#endif  // REPS_EVALUATION_HPP
