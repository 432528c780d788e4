#pragma once

// The victim classifier: a small CNN trained from scratch, with hand-rolled
// reverse-mode gradients to both parameters and the input image. The input
// gradient is what links the classifier loss to the renderer's texture tape.
//
// Architecture: Conv(3->16,3x3,s1,p1)+ReLU, MaxPool2, Conv(16->32)+ReLU,
// MaxPool2, Conv(32->64)+ReLU, GlobalAvgPool, Dense(64->3). Global average
// pooling makes the net resolution-agnostic.

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cargopatch/image.hpp"
#include "cargopatch/scene_io.hpp"
#include "cargopatch/tensor.hpp"

namespace cargopatch {

struct VictimModel {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor fc_w, fc_b;
  std::uint64_t revision = 0;  // bumped on every parameter change

  static VictimModel init(std::uint64_t seed);

  std::array<std::pair<const char*, Tensor*>, 8> named_parameters();
  std::array<std::pair<const char*, const Tensor*>, 8> named_parameters() const;
};

struct ForwardCache {
  std::uint64_t revision = 0;
  int in_h = 0, in_w = 0;
  Tensor input;            // 3 x H x W
  Tensor act1, pool1;      // post-relu, pooled
  std::vector<int> arg1;   // flat argmax per pooled cell
  Tensor act2, pool2;
  std::vector<int> arg2;
  Tensor act3;
  std::array<double, 64> gap{};
  std::array<double, 3> logits{};
  std::array<double, 3> probs{};
};

std::array<double, 3> softmax3(const std::array<double, 3>& logits);

// Returns softmax probabilities; fills `cache` when given.
std::array<double, 3> forward(const VictimModel& model, const ImageRGB& image,
                              ForwardCache* cache = nullptr);

struct Gradients {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, fc_w, fc_b;

  static Gradients zeros_like(const VictimModel& model);
  std::array<Tensor*, 8> tensors();
};

// Either output may be null to skip its computation.
void backward(const VictimModel& model, const ForwardCache& cache,
              const std::array<double, 3>& grad_logits, Gradients* param_grads,
              ImageRGB* grad_input);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  int render_spp = 4;
  int workers = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
};

// Renders every manifest scene once (cached in memory), then runs momentum
// SGD. Weights end float32-representable so the weights file is lossless.
TrainResult train(VictimModel& model, const DatasetManifest& manifest,
                  const std::filesystem::path& dataset_root, const TrainConfig& cfg);

// Same optimizer on images already in memory.
TrainResult train_on_images(VictimModel& model, const std::vector<ImageRGB>& train_images,
                            const std::vector<int>& train_labels,
                            const std::vector<ImageRGB>& test_images,
                            const std::vector<int>& test_labels, const TrainConfig& cfg);

void save_weights(const VictimModel& model, const std::filesystem::path& path);
VictimModel load_weights(const std::filesystem::path& path);

void save_metrics_csv(const std::vector<EpochMetrics>& metrics,
                      const std::filesystem::path& path);

}  // namespace cargopatch
