#include "nearchip/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nearchip/error.hpp"

namespace nearchip {

namespace {

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
double sigmoid(double s) { return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }

struct Adam {
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double rate, int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      params[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }

  std::vector<double> m, v;
};

}  // namespace

LatentModel init_latent(const TrainConfig& config, int input_width, int input_height) {
  if (config.n_filters < 1 || config.kernel < 1) throw InvalidArgument("invalid detector shape");
  if (input_width < config.kernel || input_height < config.kernel)
    throw InvalidArgument("frames are smaller than the kernel");
  LatentModel latent;
  latent.n_filters = config.n_filters;
  latent.kernel = config.kernel;
  latent.input_width = input_width;
  latent.input_height = input_height;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uni(-config.init_scale, config.init_scale);
  latent.weights.resize(latent.filter_size() * latent.n_filters);
  for (auto& w : latent.weights) w = uni(rng);
  latent.readout.assign(latent.n_filters, 0.0);
  latent.bias = 0.0;
  return latent;
}

double loss_and_gradients(const LatentModel& latent, std::span<const FilteredFrame> frames,
                          std::span<const std::uint8_t> labels, std::span<const double> sample_weights,
                          Gradients* grads) {
  const DetectorModel model = binarize(latent);
  const PackedFilters filters(model);
  const int n = latent.n_filters;
  const int k = latent.kernel;
  const std::size_t fs = latent.filter_size();
  if (grads) {
    grads->weights.assign(latent.weights.size(), 0.0);
    grads->readout.assign(n, 0.0);
    grads->bias = 0.0;
  }

  double loss = 0.0;
  std::vector<double> feature(n);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const PackedInput input(frames[i], k);
    const auto peaks = filter_peaks(input, filters, n);
    double score = latent.bias;
    for (int f = 0; f < n; ++f) {
      feature[f] = model.alpha[f] * static_cast<double>(std::max(0, peaks[f].activation));
      score += latent.readout[f] * feature[f];
    }
    const double y = labels[i] ? 1.0 : 0.0;
    const double w = sample_weights[i];
    loss += w * (softplus(score) - y * score);
    if (!grads) continue;

    const double g = w * (sigmoid(score) - y);
    grads->bias += g;
    for (int f = 0; f < n; ++f) {
      grads->readout[f] += g * feature[f];
      const double peak = static_cast<double>(peaks[f].activation);
      if (peak <= 0.0 || latent.readout[f] == 0.0) continue;
      const double coef = g * latent.readout[f];
      const double alpha = model.alpha[f];
      const double* wf = latent.weights.data() + f * fs;
      double* gf = grads->weights.data() + f * fs;
      for (int c = 0; c < DetectorModel::kChannels; ++c) {
        for (int r = 0; r < k; ++r) {
          for (int col = 0; col < k; ++col) {
            const std::size_t j = (static_cast<std::size_t>(c) * k + r) * k + col;
            const double sign = wf[j] >= 0.0 ? 1.0 : -1.0;
            // d(alpha)/dw = sign / n; d(sign(w))/dw ~ 1 inside |w| <= 1
            double d = peak * sign / static_cast<double>(fs);
            if (std::abs(wf[j]) <= 1.0 && input.bit(c, peaks[f].oy, peaks[f].ox, r, col)) d += alpha;
            gf[j] += coef * d;
          }
        }
      }
    }
  }
  return loss;
}

DetectorModel train(std::span<const FilteredFrame> frames, std::span<const std::uint8_t> labels,
                    const TrainConfig& config, TrainLog* log) {
  if (frames.empty() || frames.size() != labels.size())
    throw InvalidArgument("training needs a non-empty dataset with one label per frame");
  const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0 || positives == labels.size()) throw InvalidArgument("training needs both classes");
  const int width = frames.front().width();
  const int height = frames.front().height();
  for (const auto& f : frames)
    if (f.width() != width || f.height() != height) throw DimensionMismatch("training frames differ in size");
  if (config.epochs < 1 || config.batch_size < 1) throw InvalidArgument("epochs and batch size must be positive");

  LatentModel latent = init_latent(config, width, height);

  std::vector<double> weights(frames.size(), 1.0);
  if (config.balance_classes) {
    const double total = static_cast<double>(frames.size());
    const double w_pos = total / (2.0 * static_cast<double>(positives));
    const double w_neg = total / (2.0 * static_cast<double>(frames.size() - positives));
    for (std::size_t i = 0; i < frames.size(); ++i) weights[i] = labels[i] ? w_pos : w_neg;
  }

  Adam adam_w(latent.weights.size());
  Adam adam_r(latent.readout.size() + 1);
  std::vector<double> readout_and_bias(latent.readout.size() + 1);
  std::vector<double> grad_rb(readout_and_bias.size());

  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<FilteredFrame> batch_frames;
  std::vector<std::uint8_t> batch_labels;
  std::vector<double> batch_weights;
  Gradients grads;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch_frames.clear();
      batch_labels.clear();
      batch_weights.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_frames.push_back(frames[order[i]]);
        batch_labels.push_back(labels[order[i]]);
        batch_weights.push_back(weights[order[i]]);
      }
      epoch_loss += loss_and_gradients(latent, batch_frames, batch_labels, batch_weights, &grads);

      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads.weights) g *= scale;
      std::copy(latent.readout.begin(), latent.readout.end(), readout_and_bias.begin());
      readout_and_bias.back() = latent.bias;
      for (std::size_t f = 0; f < grads.readout.size(); ++f) grad_rb[f] = grads.readout[f] * scale;
      grad_rb.back() = grads.bias * scale;

      ++step;
      adam_w.step(latent.weights, grads.weights, config.learning_rate, step);
      adam_r.step(readout_and_bias, grad_rb, config.readout_rate, step);
      std::copy(readout_and_bias.begin(), readout_and_bias.end() - 1, latent.readout.begin());
      latent.bias = readout_and_bias.back();
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(frames.size()));
  }
  DetectorModel model = binarize(latent);
  model.validate();
  return model;
}

}  // namespace nearchip
