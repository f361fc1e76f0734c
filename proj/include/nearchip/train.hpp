#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nearchip/bnn.hpp"
#include "nearchip/filter.hpp"

namespace nearchip {

struct TrainConfig {
  int n_filters = 200;
  int kernel = 10;
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 0.01;     ///< latent filter weights
  double readout_rate = 0.01;      ///< readout weights and bias
  double init_scale = 0.5;         ///< latent weights start uniform in [-s, s]
  std::uint64_t seed = 7;
  bool balance_classes = true;     ///< weight the loss by inverse class frequency
};

struct TrainLog {
  std::vector<double> epoch_loss;  ///< mean weighted logistic loss per epoch
};

LatentModel init_latent(const TrainConfig& config, int input_width, int input_height);

/// Forward pass on the binarized model plus gradients of the weighted
/// logistic loss. Filter gradients pass through the sign with a
/// straight-through estimator clipped at |w| <= 1.
struct Gradients {
  std::vector<double> weights;
  std::vector<double> readout;
  double bias = 0.0;
};

/// Sum of per-sample losses `weight_i * logistic(score_i, label_i)`.
double loss_and_gradients(const LatentModel& latent, std::span<const FilteredFrame> frames,
                          std::span<const std::uint8_t> labels, std::span<const double> sample_weights,
                          Gradients* grads);

/// Throws InvalidArgument for an empty or single-class dataset.
DetectorModel train(std::span<const FilteredFrame> frames, std::span<const std::uint8_t> labels,
                    const TrainConfig& config, TrainLog* log = nullptr);

}  // namespace nearchip
