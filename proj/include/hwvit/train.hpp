#pragma once

// Synthetic token-classification data and a plain SGD training loop for the
// toy encoder.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hwvit/vit.hpp"

namespace hwvit {

struct DatasetConfig {
  std::uint64_t seed = 7;
  int num_samples = 1000;
  ModelMeta meta{};
  double noise = 1.5;            // per-entry Gaussian noise std (sigma)
  double min_separation = 4.0;   // prototype distance, in units of sigma
  double train_fraction = 0.8;
};

/// Each class has a fixed F x token_dim prototype; a sample is its class
/// prototype plus i.i.d. Gaussian noise. Labels cycle through the classes, so
/// classes are balanced; every class is split train/val in the same ratio.
struct Dataset {
  DatasetConfig config;
  std::vector<Matrix> prototypes;
  std::vector<Matrix> samples;
  std::vector<int> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Dataset make_dataset(const DatasetConfig& cfg);

/// Per-sample teacher logits (1 x C each), indexed like Dataset::samples.
using TeacherLogits = std::vector<Matrix>;

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 0.05;
  double min_lr = 0.0;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  KdConfig kd{};
  QuantOptions quant{};

  void validate() const;
};

struct BatchGradients {
  double loss = 0.0;  // mean over the batch
  ViTParams grads;    // mean over the batch, STE masks applied
};

BatchGradients batch_gradients(const ViTParams& p, const Dataset& data,
                               const std::vector<std::size_t>& indices, const QuantOptions& q,
                               const KdConfig& kd, const TeacherLogits* teacher);

/// Scales `g` so that its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_global_norm(ViTParams& g, double max_norm);

/// p -= lr * g, skipping precision tags.
void sgd_step(ViTParams& p, const ViTParams& g, double lr);

double cosine_lr(double base, double min_lr, std::int64_t step, std::int64_t total_steps);

/// Shuffled mini-batches of the training split for one epoch.
std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, int batch_size,
                                                    std::uint64_t seed, int epoch);

double evaluate(const ViTParams& p, const Dataset& data, const std::vector<std::size_t>& split,
                const QuantOptions& q = {});

TeacherLogits predict_logits(const ViTParams& p, const Dataset& data, const QuantOptions& q);

struct EpochReport {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// Trains in place. Throws Error on a non-finite loss.
void train_model(ViTParams& p, const Dataset& data, const TrainConfig& cfg,
                 const TeacherLogits* teacher = nullptr,
                 const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace hwvit
