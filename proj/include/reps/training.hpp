// Loss composition and a seeded, deterministic training loop.

#ifndef REPS_TRAINING_HPP
#define REPS_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reps/autodiff.hpp"
#include "reps/error.hpp"
#include "reps/nn.hpp"
#include "reps/point_cloud.hpp"

namespace reps {

struct LabeledCloud {
  PointCloud cloud;
  std::size_t label = 0;
};

// =============================================================================
// Losses
// =============================================================================

/// Raw sum of every point loss and every patch loss.
inline double sample_loss(std::span<const double> point_losses, std::span<const double> shape_losses) {
  detail::require(!point_losses.empty() && !shape_losses.empty(), "sample_loss: empty loss list");
  double s = 0;
  for (double v : point_losses) s += v;
  for (double v : shape_losses) s += v;
  return s;
}

inline ad::Tensor sample_loss(const ad::Tensor& point_losses, const ad::Tensor& shape_losses) {
  detail::require(point_losses.value().size() > 0 && shape_losses.value().size() > 0, "sample_loss: empty loss list");
  return ad::add(ad::sum(point_losses), ad::sum(shape_losses));
}

inline double total_loss(double sample, double task, double task_weight = 1.0) {
  if (!std::isfinite(sample) || !std::isfinite(task)) throw InvalidState("total_loss: non-finite component");
  return sample + task_weight * task;
}

inline ad::Tensor total_loss(const ad::Tensor& sample, const ad::Tensor& task, double task_weight = 1.0) {
  total_loss(sample.scalar(), task.scalar(), task_weight);
  return ad::add(sample, task_weight == 1.0 ? task : ad::scale(task, task_weight));
}

// =============================================================================
// Training loop
// =============================================================================

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double alpha = 0.8;
  std::size_t k = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double task_weight = 1.0;
  /// Stop each epoch after this many samples (0 = whole dataset).
  std::size_t max_samples_per_epoch = 0;

  void validate() const {
    detail::require(epochs >= 1, "train: epochs must be >= 1");
    detail::require(batch_size >= 1, "train: batch size must be >= 1");
    detail::require(lr >= 0 && std::isfinite(lr), "train: learning rate must be finite and nonnegative");
  }
};

/// One forward pass worth of losses. `total` is on the tape.
struct LossParts {
  ad::Tensor total;
  double sample = 0;
  double task = 0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0;
  double sample_loss = 0;
  double task_loss = 0;
  double val_accuracy = 0;
  /// max over steps of |total - (sample + w * task)|
  double decomposition_error = 0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;

  void write_jsonl(std::ostream& os) const {
    for (const auto& e : epochs) {
      nlohmann::json j{{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"sample_loss", e.sample_loss},
                       {"task_loss", e.task_loss},
                       {"val_accuracy", e.val_accuracy}};
      os << j.dump() << "\n";
    }
  }
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class Model>
double accuracy(const Model& model, std::span<const LabeledCloud> data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& item : data) hit += model.predict(item.cloud) == item.label;
  return double(hit) / double(data.size());
}

/// Seeded minibatch Adam. The model supplies
///   std::vector<ad::Parameter*> parameters();
///   LossParts loss(ad::Tape&, const LabeledCloud&, std::uint64_t step_seed, double task_weight) const;
///   std::size_t predict(const PointCloud&) const;
/// Validation accuracy is measured on `validation`, or the training set when empty.
template <class Model>
TrainReport train(std::span<const LabeledCloud> data, Model& model, const TrainConfig& cfg,
                  std::span<const LabeledCloud> validation = {}) {
  cfg.validate();
  detail::require(!data.empty(), "train: dataset is empty");
  nn::Adam opt(model.parameters(), nn::AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  TrainReport report;
  std::vector<std::size_t> order(data.size());
  const std::size_t per_epoch =
      cfg.max_samples_per_epoch ? std::min(cfg.max_samples_per_epoch, data.size()) : data.size();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochReport er;
    er.epoch = epoch;
    try {
      for (std::size_t b = 0; b < per_epoch; b += cfg.batch_size) {
        const std::size_t end = std::min(per_epoch, b + cfg.batch_size);
        opt.zero_grad();
        for (std::size_t s = b; s < end; ++s) {
          ad::Tape tape;
          const std::uint64_t step_seed = mix_seed(cfg.seed, epoch * data.size() + s + 0x1000);
          LossParts parts = model.loss(tape, data[order[s]], step_seed, cfg.task_weight);
          const double total = parts.total.scalar();
          if (!std::isfinite(total) || !std::isfinite(parts.sample) || !std::isfinite(parts.task))
            throw InvalidState("non-finite loss");
          er.decomposition_error =
              std::max(er.decomposition_error, std::abs(total - (parts.sample + cfg.task_weight * parts.task)));
          er.train_loss += total;
          er.sample_loss += parts.sample;
          er.task_loss += parts.task;
          tape.backward(parts.total);
        }
        opt.step(1.0 / double(end - b));
      }
      er.val_accuracy = validation.empty() ? accuracy(model, data) : accuracy(model, validation);
    } catch (const InvalidState& e) {
      throw InvalidState("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    er.train_loss /= double(per_epoch);
    er.sample_loss /= double(per_epoch);
    er.task_loss /= double(per_epoch);
    report.epochs.push_back(er);
  }
  return report;
}

}  // namespace reps

#endif  // REPS_TRAINING_HPP
