#include "cargopatch/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cargopatch/binio.hpp"
#include "cargopatch/parallel.hpp"
#include "cargopatch/render.hpp"
#include "cargopatch/rng.hpp"
#include "cargopatch/strings.hpp"

namespace cargopatch {

namespace {

// out[oc] = bias[oc] + sum_ic conv3x3(in[ic], w[oc][ic]); stride 1, pad 1.
void conv3x3_forward(const double* in, int ic_count, int h, int w, const double* weights,
                     const double* bias, double* out, int oc_count) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int oc = 0; oc < oc_count; oc++)
    std::fill(out + oc * plane, out + (oc + 1) * plane, bias[oc]);
  for (int oc = 0; oc < oc_count; oc++) {
    double* out_plane = out + oc * plane;
    for (int ic = 0; ic < ic_count; ic++) {
      const double* in_plane = in + ic * plane;
      const double* wk = weights + static_cast<std::size_t>(oc * ic_count + ic) * 9;
      for (int ky = 0; ky < 3; ky++) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; kx++) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double wv = wk[ky * 3 + kx];
          for (int y = y0; y < y1; y++) {
            const double* irow = in_plane + static_cast<std::size_t>(y + dy) * w + dx;
            double* orow = out_plane + static_cast<std::size_t>(y) * w;
            for (int x = x0; x < x1; x++) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// Propagates grad_out (at the conv output, pre-activation) to grad_in,
// grad_weights and grad_bias; any of those may be null.
void conv3x3_backward(const double* in, int ic_count, int h, int w, const double* weights,
                      int oc_count, const double* grad_out, double* grad_in,
                      double* grad_weights, double* grad_bias) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  if (grad_bias)
    for (int oc = 0; oc < oc_count; oc++) {
      const double* g = grad_out + oc * plane;
      grad_bias[oc] += std::accumulate(g, g + plane, 0.0);
    }
  if (!grad_in && !grad_weights) return;
  for (int oc = 0; oc < oc_count; oc++) {
    const double* gout_plane = grad_out + oc * plane;
    for (int ic = 0; ic < ic_count; ic++) {
      const double* in_plane = in + ic * plane;
      double* gin_plane = grad_in ? grad_in + ic * plane : nullptr;
      const double* wk = weights + static_cast<std::size_t>(oc * ic_count + ic) * 9;
      double* gwk =
          grad_weights ? grad_weights + static_cast<std::size_t>(oc * ic_count + ic) * 9
                       : nullptr;
      for (int ky = 0; ky < 3; ky++) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; kx++) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const double wv = wk[ky * 3 + kx];
          double wacc = 0.0;
          for (int y = y0; y < y1; y++) {
            const double* grow = gout_plane + static_cast<std::size_t>(y) * w;
            const std::size_t shifted = static_cast<std::size_t>(y + dy) * w + dx;
            if (gin_plane) {
              double* girow = gin_plane + shifted;
              for (int x = x0; x < x1; x++) girow[x] += wv * grow[x];
            }
            if (gwk) {
              const double* irow = in_plane + shifted;
              for (int x = x0; x < x1; x++) wacc += irow[x] * grow[x];
            }
          }
          if (gwk) gwk[ky * 3 + kx] += wacc;
        }
      }
    }
  }
}

void relu_inplace(double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; i++) data[i] = std::max(0.0, data[i]);
}

// grad at pre-activation = grad at post-activation where act > 0.
void relu_backward_inplace(const double* act, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; i++)
    if (act[i] <= 0.0) grad[i] = 0.0;
}

void maxpool2_forward(const double* in, int c_count, int h, int w, double* out, int* argmax) {
  const int ho = h / 2, wo = w / 2;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_count; c++) {
    const double* ip = in + c * in_plane;
    double* op = out + c * out_plane;
    int* ap = argmax + c * out_plane;
    for (int yo = 0; yo < ho; yo++)
      for (int xo = 0; xo < wo; xo++) {
        const int y = yo * 2, x = xo * 2;
        int best = y * w + x;
        double best_v = ip[best];
        const int candidates[3] = {y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1};
        for (int idx : candidates)
          if (ip[idx] > best_v) {
            best_v = ip[idx];
            best = idx;
          }
        op[yo * wo + xo] = best_v;
        ap[yo * wo + xo] = best;
      }
  }
}

void maxpool2_backward(const int* argmax, int c_count, int h, int w, const double* grad_out,
                       double* grad_in) {
  const int ho = h / 2, wo = w / 2;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  std::fill(grad_in, grad_in + static_cast<std::size_t>(c_count) * in_plane, 0.0);
  for (int c = 0; c < c_count; c++) {
    const double* gp = grad_out + c * out_plane;
    const int* ap = argmax + c * out_plane;
    double* gi = grad_in + c * in_plane;
    for (std::size_t i = 0; i < out_plane; i++) gi[ap[i]] += gp[i];
  }
}

void he_init(Tensor& t, int fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (double& v : t.data) v = rng.normal() * std_dev;
}

VictimModel model_shell() {
  VictimModel m;
  m.conv1_w = Tensor::zeros({16, 3, 3, 3});
  m.conv1_b = Tensor::zeros({16});
  m.conv2_w = Tensor::zeros({32, 16, 3, 3});
  m.conv2_b = Tensor::zeros({32});
  m.conv3_w = Tensor::zeros({64, 32, 3, 3});
  m.conv3_b = Tensor::zeros({64});
  m.fc_w = Tensor::zeros({3, 64});
  m.fc_b = Tensor::zeros({3});
  return m;
}

void quantize_tensor_f32(Tensor& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

VictimModel VictimModel::init(std::uint64_t seed) {
  VictimModel m = model_shell();
  Rng rng(hash2(seed, 0x6E6574ULL));
  he_init(m.conv1_w, 3 * 9, rng);
  he_init(m.conv2_w, 16 * 9, rng);
  he_init(m.conv3_w, 32 * 9, rng);
  he_init(m.fc_w, 64, rng);
  m.revision = 1;
  return m;
}

std::array<std::pair<const char*, Tensor*>, 8> VictimModel::named_parameters() {
  return {{{"conv1_w", &conv1_w},
           {"conv1_b", &conv1_b},
           {"conv2_w", &conv2_w},
           {"conv2_b", &conv2_b},
           {"conv3_w", &conv3_w},
           {"conv3_b", &conv3_b},
           {"fc_w", &fc_w},
           {"fc_b", &fc_b}}};
}

std::array<std::pair<const char*, const Tensor*>, 8> VictimModel::named_parameters() const {
  return {{{"conv1_w", &conv1_w},
           {"conv1_b", &conv1_b},
           {"conv2_w", &conv2_w},
           {"conv2_b", &conv2_b},
           {"conv3_w", &conv3_w},
           {"conv3_b", &conv3_b},
           {"fc_w", &fc_w},
           {"fc_b", &fc_b}}};
}

std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
  const double m = std::max(logits[0], std::max(logits[1], logits[2]));
  std::array<double, 3> e{std::exp(logits[0] - m), std::exp(logits[1] - m),
                          std::exp(logits[2] - m)};
  const double sum = e[0] + e[1] + e[2];
  return {e[0] / sum, e[1] / sum, e[2] / sum};
}

std::array<double, 3> forward(const VictimModel& model, const ImageRGB& image,
                              ForwardCache* cache) {
  const int h = image.height, w = image.width;
  if (h < 4 || w < 4) throw ContractError("input image must be at least 4x4");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.revision = model.revision;
  c.in_h = h;
  c.in_w = w;

  c.input = Tensor::zeros({3, h, w});
  for (int y = 0; y < h; y++)
    for (int x = 0; x < w; x++)
      for (int ch = 0; ch < 3; ch++)
        c.input.data[(static_cast<std::size_t>(ch) * h + y) * w + x] = image.at(x, y, ch);

  c.act1 = Tensor::zeros({16, h, w});
  conv3x3_forward(c.input.data.data(), 3, h, w, model.conv1_w.data.data(),
                  model.conv1_b.data.data(), c.act1.data.data(), 16);
  relu_inplace(c.act1.data.data(), c.act1.numel());

  const int h2 = h / 2, w2 = w / 2;
  c.pool1 = Tensor::zeros({16, h2, w2});
  c.arg1.assign(c.pool1.numel(), 0);
  maxpool2_forward(c.act1.data.data(), 16, h, w, c.pool1.data.data(), c.arg1.data());

  c.act2 = Tensor::zeros({32, h2, w2});
  conv3x3_forward(c.pool1.data.data(), 16, h2, w2, model.conv2_w.data.data(),
                  model.conv2_b.data.data(), c.act2.data.data(), 32);
  relu_inplace(c.act2.data.data(), c.act2.numel());

  const int h4 = h2 / 2, w4 = w2 / 2;
  c.pool2 = Tensor::zeros({32, h4, w4});
  c.arg2.assign(c.pool2.numel(), 0);
  maxpool2_forward(c.act2.data.data(), 32, h2, w2, c.pool2.data.data(), c.arg2.data());

  c.act3 = Tensor::zeros({64, h4, w4});
  conv3x3_forward(c.pool2.data.data(), 32, h4, w4, model.conv3_w.data.data(),
                  model.conv3_b.data.data(), c.act3.data.data(), 64);
  relu_inplace(c.act3.data.data(), c.act3.numel());

  const std::size_t spatial = static_cast<std::size_t>(h4) * w4;
  for (int ch = 0; ch < 64; ch++) {
    const double* p = c.act3.data.data() + ch * spatial;
    c.gap[ch] = std::accumulate(p, p + spatial, 0.0) / static_cast<double>(spatial);
  }

  for (int k = 0; k < 3; k++) {
    double acc = model.fc_b.data[k];
    for (int ch = 0; ch < 64; ch++) acc += model.fc_w.data[k * 64 + ch] * c.gap[ch];
    c.logits[k] = acc;
  }
  c.probs = softmax3(c.logits);
  return c.probs;
}

Gradients Gradients::zeros_like(const VictimModel& model) {
  Gradients g;
  g.conv1_w = Tensor::zeros(model.conv1_w.shape);
  g.conv1_b = Tensor::zeros(model.conv1_b.shape);
  g.conv2_w = Tensor::zeros(model.conv2_w.shape);
  g.conv2_b = Tensor::zeros(model.conv2_b.shape);
  g.conv3_w = Tensor::zeros(model.conv3_w.shape);
  g.conv3_b = Tensor::zeros(model.conv3_b.shape);
  g.fc_w = Tensor::zeros(model.fc_w.shape);
  g.fc_b = Tensor::zeros(model.fc_b.shape);
  return g;
}

std::array<Tensor*, 8> Gradients::tensors() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w, &conv3_b, &fc_w, &fc_b};
}

void backward(const VictimModel& model, const ForwardCache& cache,
              const std::array<double, 3>& grad_logits, Gradients* param_grads,
              ImageRGB* grad_input) {
  if (cache.revision != model.revision)
    throw ContractError("stale forward cache: model parameters changed since forward");
  const int h = cache.in_h, w = cache.in_w;
  const int h2 = h / 2, w2 = w / 2, h4 = h2 / 2, w4 = w2 / 2;
  const std::size_t spatial = static_cast<std::size_t>(h4) * w4;

  std::array<double, 64> grad_gap{};
  for (int k = 0; k < 3; k++) {
    for (int ch = 0; ch < 64; ch++) grad_gap[ch] += grad_logits[k] * model.fc_w.data[k * 64 + ch];
    if (param_grads) {
      for (int ch = 0; ch < 64; ch++)
        param_grads->fc_w.data[k * 64 + ch] += grad_logits[k] * cache.gap[ch];
      param_grads->fc_b.data[k] += grad_logits[k];
    }
  }

  Tensor grad3 = Tensor::zeros({64, h4, w4});
  for (int ch = 0; ch < 64; ch++) {
    const double g = grad_gap[ch] / static_cast<double>(spatial);
    double* p = grad3.data.data() + ch * spatial;
    std::fill(p, p + spatial, g);
  }
  relu_backward_inplace(cache.act3.data.data(), grad3.data.data(), grad3.numel());

  Tensor grad_pool2 = Tensor::zeros({32, h4, w4});
  conv3x3_backward(cache.pool2.data.data(), 32, h4, w4, model.conv3_w.data.data(), 64,
                   grad3.data.data(), grad_pool2.data.data(),
                   param_grads ? param_grads->conv3_w.data.data() : nullptr,
                   param_grads ? param_grads->conv3_b.data.data() : nullptr);

  Tensor grad2 = Tensor::zeros({32, h2, w2});
  maxpool2_backward(cache.arg2.data(), 32, h2, w2, grad_pool2.data.data(), grad2.data.data());
  relu_backward_inplace(cache.act2.data.data(), grad2.data.data(), grad2.numel());

  Tensor grad_pool1 = Tensor::zeros({16, h2, w2});
  conv3x3_backward(cache.pool1.data.data(), 16, h2, w2, model.conv2_w.data.data(), 32,
                   grad2.data.data(), grad_pool1.data.data(),
                   param_grads ? param_grads->conv2_w.data.data() : nullptr,
                   param_grads ? param_grads->conv2_b.data.data() : nullptr);

  Tensor grad1 = Tensor::zeros({16, h, w});
  maxpool2_backward(cache.arg1.data(), 16, h, w, grad_pool1.data.data(), grad1.data.data());
  relu_backward_inplace(cache.act1.data.data(), grad1.data.data(), grad1.numel());

  Tensor grad_in;
  if (grad_input) grad_in = Tensor::zeros({3, h, w});
  conv3x3_backward(cache.input.data.data(), 3, h, w, model.conv1_w.data.data(), 16,
                   grad1.data.data(), grad_input ? grad_in.data.data() : nullptr,
                   param_grads ? param_grads->conv1_w.data.data() : nullptr,
                   param_grads ? param_grads->conv1_b.data.data() : nullptr);

  if (grad_input) {
    *grad_input = ImageRGB::zeros(w, h);
    for (int y = 0; y < h; y++)
      for (int x = 0; x < w; x++)
        for (int ch = 0; ch < 3; ch++)
          grad_input->at(x, y, ch) =
              grad_in.data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
}

TrainResult train_on_images(VictimModel& model, const std::vector<ImageRGB>& train_images,
                            const std::vector<int>& train_labels,
                            const std::vector<ImageRGB>& test_images,
                            const std::vector<int>& test_labels, const TrainConfig& cfg) {
  if (train_images.empty()) throw ConfigError("training split is empty");
  if (test_images.empty()) throw ConfigError("test split is empty");
  if (train_images.size() != train_labels.size() || test_images.size() != test_labels.size())
    throw ContractError("images and labels must pair up");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw ConfigError("train config values must be positive");

  const std::size_t n = train_images.size();
  Gradients velocity = Gradients::zeros_like(model);

  struct SampleResult {
    Gradients grads;
    double loss = 0.0;
    bool correct = false;
  };

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; epoch++) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(hash3(cfg.seed, static_cast<std::uint64_t>(epoch), 0x5D5ULL));
    for (std::size_t i = n; i > 1; i--)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, n - start);
      std::vector<SampleResult> slots(count);
      parallel_for(count, cfg.workers, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        SampleResult& slot = slots[b];
        slot.grads = Gradients::zeros_like(model);
        ForwardCache cache;
        const auto probs = forward(model, train_images[idx], &cache);
        const int label = train_labels[idx];
        slot.loss = -std::log(probs[label] + 1e-12);
        slot.correct =
            static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()) ==
            label;
        std::array<double, 3> grad_logits = probs;
        grad_logits[label] -= 1.0;
        backward(model, cache, grad_logits, &slot.grads, nullptr);
      });

      Gradients mean = Gradients::zeros_like(model);
      for (SampleResult& slot : slots) {
        auto src = slot.grads.tensors();
        auto dst = mean.tensors();
        for (int i = 0; i < 8; i++)
          for (std::size_t j = 0; j < dst[i]->numel(); j++)
            dst[i]->data[j] += src[i]->data[j] / static_cast<double>(count);
        epoch_loss += slot.loss;
        epoch_correct += slot.correct ? 1 : 0;
      }

      auto params = model.named_parameters();
      auto vel = velocity.tensors();
      auto g = mean.tensors();
      for (int i = 0; i < 8; i++)
        for (std::size_t j = 0; j < vel[i]->numel(); j++) {
          vel[i]->data[j] = cfg.momentum * vel[i]->data[j] - cfg.learning_rate * g[i]->data[j];
          params[i].second->data[j] += vel[i]->data[j];
        }
      model.revision++;
    }

    std::vector<int> predictions(test_images.size());
    parallel_for(test_images.size(), cfg.workers, [&](std::size_t i) {
      const auto probs = forward(model, test_images[i]);
      predictions[i] =
          static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    });
    std::size_t test_correct = 0;
    for (std::size_t i = 0; i < test_images.size(); i++)
      if (predictions[i] == test_labels[i]) test_correct++;

    result.metrics.push_back({epoch, epoch_loss / static_cast<double>(n),
                              static_cast<double>(epoch_correct) / static_cast<double>(n),
                              static_cast<double>(test_correct) /
                                  static_cast<double>(test_images.size())});
  }

  for (auto& [name, tensor] : model.named_parameters()) quantize_tensor_f32(*tensor);
  model.revision++;
  return result;
}

TrainResult train(VictimModel& model, const DatasetManifest& manifest,
                  const std::filesystem::path& dataset_root, const TrainConfig& cfg) {
  std::vector<const ManifestEntry*> train_entries, test_entries;
  for (const auto& entry : manifest.entries)
    (entry.split == Split::train ? train_entries : test_entries).push_back(&entry);
  if (train_entries.empty()) throw ConfigError("manifest has no train entries");
  if (test_entries.empty()) throw ConfigError("manifest has no test entries");

  auto render_all = [&](const std::vector<const ManifestEntry*>& entries,
                        std::vector<ImageRGB>& images, std::vector<int>& labels) {
    images.resize(entries.size());
    labels.resize(entries.size());
    parallel_for(entries.size(), cfg.workers, [&](std::size_t i) {
      const Scene scene = load_scene(dataset_root / entries[i]->path);
      RenderRequest request;
      request.scene = &scene;
      request.spp = cfg.render_spp;
      request.workers = 1;
      images[i] = render(request);
      labels[i] = static_cast<int>(entries[i]->label);
    });
  };

  std::vector<ImageRGB> train_images, test_images;
  std::vector<int> train_labels, test_labels;
  render_all(train_entries, train_images, train_labels);
  render_all(test_entries, test_images, test_labels);
  return train_on_images(model, train_images, train_labels, test_images, test_labels, cfg);
}

void save_weights(const VictimModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write("CPW1", 4);
  write_u32le(out, 1);  // format version
  const auto params = model.named_parameters();
  write_u32le(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    const std::string n = name;
    write_u32le(out, static_cast<std::uint32_t>(n.size()));
    out.write(n.data(), static_cast<std::streamsize>(n.size()));
    write_u32le(out, static_cast<std::uint32_t>(tensor->shape.size()));
    for (int e : tensor->shape) write_u32le(out, static_cast<std::uint32_t>(e));
    for (double v : tensor->data) write_f32le(out, static_cast<float>(v));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

VictimModel load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  const std::string ctx = path.string();
  expect_magic(in, "CPW1", ctx);
  const std::uint32_t version = read_u32le(in, ctx);
  if (version != 1)
    throw ParseError(ctx, "unsupported weights version " + std::to_string(version) +
                              " in " + ctx + ", expected 1");
  VictimModel model = model_shell();
  auto params = model.named_parameters();
  const std::uint32_t count = read_u32le(in, ctx);
  if (count != params.size())
    throw ParseError(ctx, "expected " + std::to_string(params.size()) + " layers, file has " +
                              std::to_string(count));
  for (auto& [expected_name, tensor] : params) {
    const std::uint32_t name_len = read_u32le(in, ctx);
    if (name_len > 256) throw ParseError(ctx, "implausible layer name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError(ctx, "truncated layer name");
    if (name != expected_name)
      throw ParseError(ctx, "layer '" + name + "' does not match expected '" +
                                std::string(expected_name) + "'");
    const std::uint32_t rank = read_u32le(in, ctx);
    if (rank != tensor->shape.size())
      throw ParseError(ctx, "layer '" + name + "' rank mismatch");
    for (std::size_t d = 0; d < rank; d++) {
      const std::uint32_t extent = read_u32le(in, ctx);
      if (static_cast<int>(extent) != tensor->shape[d])
        throw ParseError(ctx, "layer '" + name + "' shape mismatch");
    }
    for (double& v : tensor->data) v = static_cast<double>(read_f32le(in, ctx));
  }
  model.revision = 1;
  return model;
}

void save_metrics_csv(const std::vector<EpochMetrics>& metrics,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,train_loss,train_acc,test_acc\n";
  for (const auto& m : metrics)
    out << m.epoch << "," << format_double(m.train_loss) << "," << format_double(m.train_acc)
        << "," << format_double(m.test_acc) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace cargopatch
