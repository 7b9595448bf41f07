// Fully convolutional segmentation network.
//
// Architecture: [Conv3x3 - BN - ReLU - MaxPool2] per pooled block, then a
// dilated Conv3x3 - BN - ReLU stage without further pooling, a 1x1 projection
// to one channel, sigmoid, and fixed bilinear x4 upsampling back to the input
// resolution. Two pooled blocks are required so the stride matches the x4
// upsample.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "partsnet/core/ops.hpp"
#include "partsnet/core/rng.hpp"
#include "partsnet/core/tape.hpp"

namespace partsnet {

struct SegNetConfig {
  std::vector<int> block_channels{16, 32};
  int deep_channels = 64;
  int deep_depth = 2;
  int deep_dilation = 2;
  int in_channels = 1;

  void validate() const {
    detail::require(block_channels.size() == 2,
                    "SegNetConfig: exactly two pooled blocks are supported (stride 4 must match "
                    "the x4 upsample)");
    for (int c : block_channels) detail::require(c >= 1, "SegNetConfig: block width must be >= 1");
    detail::require(deep_channels >= 1, "SegNetConfig: deep_channels must be >= 1");
    detail::require(deep_depth >= 1, "SegNetConfig: deep_depth must be >= 1");
    detail::require(deep_dilation >= 1, "SegNetConfig: deep_dilation must be >= 1");
    detail::require(in_channels >= 1, "SegNetConfig: in_channels must be >= 1");
  }
};

template <typename T>
struct ConvBNLayer {
  Tensor<T> kernel;
  Tensor<T> bias;   // (1, outC, 1, 1)
  Tensor<T> gamma;  // (1, outC, 1, 1)
  Tensor<T> beta;   // (1, outC, 1, 1)
  BNRunning<T> running;
};

template <typename T>
struct SegNetParams {
  SegNetConfig config;
  std::vector<ConvBNLayer<T>> blocks;
  std::vector<ConvBNLayer<T>> deep;
  Tensor<T> head_kernel;  // (1, deep_channels, 1, 1)
  Tensor<T> head_bias;    // (1, 1, 1, 1)

  // Trainable parameters: conv kernels and biases, BN gamma and beta.
  std::int64_t num_trainable() const {
    std::int64_t n = head_kernel.numel() + head_bias.numel();
    for (const auto* group : {&blocks, &deep}) {
      for (const auto& l : *group) {
        n += l.kernel.numel() + l.bias.numel() + l.gamma.numel() + l.beta.numel();
      }
    }
    return n;
  }

  // Visits every tensor (trainable and BN running state) in a fixed order.
  template <typename F>
  void for_each_tensor(F&& fn) {
    auto visit_layer = [&fn](const std::string& prefix, ConvBNLayer<T>& l) {
      fn(prefix + ".kernel", l.kernel);
      fn(prefix + ".bias", l.bias);
      fn(prefix + ".bn.gamma", l.gamma);
      fn(prefix + ".bn.beta", l.beta);
      fn(prefix + ".bn.running_mean", l.running.mean);
      fn(prefix + ".bn.running_var", l.running.var);
    };
    for (std::size_t i = 0; i < blocks.size(); ++i) visit_layer("block" + std::to_string(i), blocks[i]);
    for (std::size_t i = 0; i < deep.size(); ++i) visit_layer("deep" + std::to_string(i), deep[i]);
    fn(std::string("head.kernel"), head_kernel);
    fn(std::string("head.bias"), head_bias);
  }

  // Conv kernels only; this is the weight set the regularization term covers.
  std::vector<Tensor<T>*> regularized_kernels() {
    std::vector<Tensor<T>*> out;
    for (auto* group : {&blocks, &deep}) {
      for (auto& l : *group) out.push_back(&l.kernel);
    }
    out.push_back(&head_kernel);
    return out;
  }

  template <typename U>
  SegNetParams<U> cast() const {
    SegNetParams<U> out;
    out.config = config;
    auto cast_layer = [](const ConvBNLayer<T>& l) {
      ConvBNLayer<U> r;
      r.kernel = l.kernel.template cast<U>();
      r.bias = l.bias.template cast<U>();
      r.gamma = l.gamma.template cast<U>();
      r.beta = l.beta.template cast<U>();
      r.running.mean = l.running.mean.template cast<U>();
      r.running.var = l.running.var.template cast<U>();
      r.running.initialized = l.running.initialized;
      return r;
    };
    for (const auto& l : blocks) out.blocks.push_back(cast_layer(l));
    for (const auto& l : deep) out.deep.push_back(cast_layer(l));
    out.head_kernel = head_kernel.template cast<U>();
    out.head_bias = head_bias.template cast<U>();
    return out;
  }
};

namespace detail_seg {

template <typename T>
ConvBNLayer<T> make_layer(int out_c, int in_c, int k, Rng& rng) {
  ConvBNLayer<T> l;
  l.kernel = Tensor<T>(out_c, in_c, k, k);
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
  for (std::int64_t i = 0; i < l.kernel.numel(); ++i) {
    l.kernel.data()[i] = static_cast<T>(rng.gaussian() * stddev);
  }
  l.bias = Tensor<T>(1, out_c, 1, 1, T(0));
  l.gamma = Tensor<T>(1, out_c, 1, 1, T(1));
  l.beta = Tensor<T>(1, out_c, 1, 1, T(0));
  l.running = BNRunning<T>::identity(out_c);
  return l;
}

}  // namespace detail_seg

// He-normal kernels from the given seed, zero biases, identity BN.
template <typename T>
SegNetParams<T> build_segnet(const SegNetConfig& config, std::uint64_t seed) {
  config.validate();
  SegNetParams<T> p;
  p.config = config;
  Rng rng(seed);
  int in_c = config.in_channels;
  for (int width : config.block_channels) {
    p.blocks.push_back(detail_seg::make_layer<T>(width, in_c, 3, rng));
    in_c = width;
  }
  for (int i = 0; i < config.deep_depth; ++i) {
    p.deep.push_back(detail_seg::make_layer<T>(config.deep_channels, in_c, 3, rng));
    in_c = config.deep_channels;
  }
  p.head_kernel = Tensor<T>(1, in_c, 1, 1);
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c));
  for (std::int64_t i = 0; i < p.head_kernel.numel(); ++i) {
    p.head_kernel.data()[i] = static_cast<T>(rng.gaussian() * stddev);
  }
  p.head_bias = Tensor<T>(1, 1, 1, 1, T(0));
  return p;
}

template <typename T>
struct SegNetLeaves {
  struct LayerIds {
    ValueId kernel, bias, gamma, beta;
  };
  std::vector<LayerIds> blocks;
  std::vector<LayerIds> deep;
  ValueId head_kernel = -1;
  ValueId head_bias = -1;

  std::vector<ValueId> kernel_ids() const {
    std::vector<ValueId> out;
    for (const auto* group : {&blocks, &deep}) {
      for (const auto& l : *group) out.push_back(l.kernel);
    }
    out.push_back(head_kernel);
    return out;
  }
};

template <typename T>
SegNetLeaves<T> insert_segnet_leaves(Tape<T>& tape, const SegNetParams<T>& params,
                                     bool trainable) {
  SegNetLeaves<T> ids;
  auto insert_layer = [&](const ConvBNLayer<T>& l) {
    typename SegNetLeaves<T>::LayerIds out;
    out.kernel = tape.leaf(l.kernel, trainable);
    out.bias = tape.leaf(l.bias, trainable);
    out.gamma = tape.leaf(l.gamma, trainable);
    out.beta = tape.leaf(l.beta, trainable);
    return out;
  };
  for (const auto& l : params.blocks) ids.blocks.push_back(insert_layer(l));
  for (const auto& l : params.deep) ids.deep.push_back(insert_layer(l));
  ids.head_kernel = tape.leaf(params.head_kernel, trainable);
  ids.head_bias = tape.leaf(params.head_bias, trainable);
  return ids;
}

// Forward pass; output shape (n, 1, H, W) with every value in (0, 1).
// `params` is non-const because train mode folds batch moments into the BN
// running statistics.
template <typename T>
ValueId seg_forward(Tape<T>& tape, const SegNetLeaves<T>& ids, SegNetParams<T>& params,
                    ValueId images, BNMode mode) {
  const Shape4 is = tape.value(images).shape();
  detail::require(is.c == params.config.in_channels,
                  "seg_forward: input has " + std::to_string(is.c) + " channels, expected " +
                      std::to_string(params.config.in_channels));
  if (is.h % 4 != 0 || is.w % 4 != 0) {
    throw std::invalid_argument("seg_forward: input H and W must be divisible by 4, got " +
                                is.str());
  }
  ValueId x = images;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    x = op::conv2d(tape, x, ids.blocks[i].kernel, ids.blocks[i].bias, PadMode::Same, 1);
    x = op::batchnorm(tape, x, ids.blocks[i].gamma, ids.blocks[i].beta, params.blocks[i].running,
                      mode);
    x = op::relu(tape, x);
    x = op::maxpool2(tape, x);
  }
  for (std::size_t i = 0; i < params.deep.size(); ++i) {
    x = op::conv2d(tape, x, ids.deep[i].kernel, ids.deep[i].bias, PadMode::Same,
                   params.config.deep_dilation);
    x = op::batchnorm(tape, x, ids.deep[i].gamma, ids.deep[i].beta, params.deep[i].running, mode);
    x = op::relu(tape, x);
  }
  x = op::conv2d(tape, x, ids.head_kernel, ids.head_bias, PadMode::Same, 1);
  x = op::sigmoid(tape, x, T(1));
  x = op::upsample4(tape, x);
  return x;
}

// Inference convenience: builds a throwaway tape.
template <typename T>
Tensor<T> seg_infer(SegNetParams<T>& params, const Tensor<T>& images, BNMode mode = BNMode::Infer) {
  Tape<T> tape;
  SegNetLeaves<T> ids = insert_segnet_leaves(tape, params, false);
  ValueId in = tape.leaf(images, false);
  ValueId out = seg_forward(tape, ids, params, in, mode);
  return tape.value(out);
}

}  // namespace partsnet
