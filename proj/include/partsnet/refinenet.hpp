// Differentiable refining network: density slicing with a learnable
// threshold, stacked area-statistic filtration with learnable area
// thresholds, and a whole-image classification head.
//
// density slice:  sigmoid(k * (gauss3 * x - t1))
// area layer:     relu(area9 * x - t2_j), repeated; area9 is normalized by 81
//                 so each t2_j is a fractional area threshold (the classical
//                 integer threshold maps as pixels = round(81 * t2)).
// classify head:  sigmoid(head_scale * mean(x) + head_bias); an image-sized
//                 all-ones convolution plus scale/bias is exactly a scaled
//                 spatial mean.
#pragma once

#include <algorithm>
#include <vector>

#include "partsnet/core/ops.hpp"
#include "partsnet/core/tape.hpp"
#include "partsnet/kernels.hpp"

namespace partsnet {

struct RefineConfig {
  int area_layers = 2;
  double k_slice = 50.0;
  double t1_init = 0.5;
  double t2_init = 0.1;
  double head_scale_init = 20.0;
  double head_bias_init = -1.0;

  void validate() const {
    detail::require(area_layers >= 1, "RefineConfig: area_layers must be >= 1");
    detail::require(k_slice > 0.0, "RefineConfig: k_slice must be > 0");
  }
};

template <typename T>
struct RefineParams {
  Tensor<T> t1;                // scalar slicing threshold
  std::vector<Tensor<T>> t2;   // scalar area threshold per layer
  Tensor<T> head_scale;
  Tensor<T> head_bias;
  T k_slice = T(50);           // fixed sigmoid steepness, not trained

  static RefineParams make(const RefineConfig& cfg) {
    cfg.validate();
    RefineParams p;
    p.t1 = Tensor<T>::scalar(static_cast<T>(cfg.t1_init));
    p.t2.resize(static_cast<std::size_t>(cfg.area_layers));
    for (auto& t : p.t2) t = Tensor<T>::scalar(static_cast<T>(cfg.t2_init));
    p.head_scale = Tensor<T>::scalar(static_cast<T>(cfg.head_scale_init));
    p.head_bias = Tensor<T>::scalar(static_cast<T>(cfg.head_bias_init));
    p.k_slice = static_cast<T>(cfg.k_slice);
    return p;
  }

  T t2_sum() const {
    T s = T(0);
    for (const auto& t : t2) s += t.item();
    return s;
  }

  // Thresholds live in [0.01, 0.99]; call after every optimizer step.
  void clamp_thresholds() {
    auto clamp_scalar = [](Tensor<T>& t) {
      t.data()[0] = std::clamp(t.data()[0], T(0.01), T(0.99));
    };
    clamp_scalar(t1);
    for (auto& t : t2) clamp_scalar(t);
  }

  template <typename F>
  void for_each_tensor(F&& fn) {
    fn(std::string("refine.t1"), t1);
    for (std::size_t i = 0; i < t2.size(); ++i) fn("refine.t2." + std::to_string(i), t2[i]);
    fn(std::string("refine.head_scale"), head_scale);
    fn(std::string("refine.head_bias"), head_bias);
  }

  template <typename U>
  RefineParams<U> cast() const {
    RefineParams<U> out;
    out.t1 = t1.template cast<U>();
    for (const auto& t : t2) out.t2.push_back(t.template cast<U>());
    out.head_scale = head_scale.template cast<U>();
    out.head_bias = head_bias.template cast<U>();
    out.k_slice = static_cast<U>(k_slice);
    return out;
  }
};

template <typename T>
struct RefineLeaves {
  ValueId t1 = -1;
  std::vector<ValueId> t2;
  ValueId head_scale = -1;
  ValueId head_bias = -1;
  ValueId gauss3 = -1;
  ValueId area9 = -1;
  T k_slice = T(50);
};

template <typename T>
RefineLeaves<T> insert_refine_leaves(Tape<T>& tape, const RefineParams<T>& params,
                                     const KernelBank<T>& bank, bool train_t1, bool train_t2,
                                     bool train_head) {
  RefineLeaves<T> ids;
  ids.t1 = tape.leaf(params.t1, train_t1);
  for (const auto& t : params.t2) ids.t2.push_back(tape.leaf(t, train_t2));
  ids.head_scale = tape.leaf(params.head_scale, train_head);
  ids.head_bias = tape.leaf(params.head_bias, train_head);
  ids.gauss3 = tape.leaf(bank.gauss3, false);
  ids.area9 = tape.leaf(bank.area9, false);
  ids.k_slice = params.k_slice;
  return ids;
}

template <typename T>
ValueId density_slice(Tape<T>& tape, const RefineLeaves<T>& ids, ValueId prob_map) {
  ValueId smoothed = op::conv2d(tape, prob_map, ids.gauss3, -1, PadMode::Same);
  return op::sigmoid(tape, op::sub_scalar(tape, smoothed, ids.t1), ids.k_slice);
}

template <typename T>
ValueId area_filter_stack(Tape<T>& tape, const RefineLeaves<T>& ids, ValueId sliced) {
  ValueId x = sliced;
  for (ValueId t2 : ids.t2) {
    ValueId counted = op::conv2d(tape, x, ids.area9, -1, PadMode::Same);
    x = op::relu(tape, op::sub_scalar(tape, counted, t2));
  }
  return x;
}

template <typename T>
ValueId classify_head(Tape<T>& tape, const RefineLeaves<T>& ids, ValueId filtered) {
  ValueId mean = op::mean_per_image(tape, filtered);
  ValueId z = op::add_scalar(tape, op::mul_scalar(tape, mean, ids.head_scale), ids.head_bias);
  return op::sigmoid(tape, z, T(1));
}

template <typename T>
struct RefineGraph {
  ValueId sliced = -1;
  ValueId filtered = -1;
  ValueId score = -1;  // (n, 1, 1, 1), one score per image
};

template <typename T>
RefineGraph<T> refine_forward(Tape<T>& tape, const RefineLeaves<T>& ids, ValueId prob_map) {
  RefineGraph<T> g;
  g.sliced = density_slice(tape, ids, prob_map);
  g.filtered = area_filter_stack(tape, ids, g.sliced);
  g.score = classify_head(tape, ids, g.filtered);
  return g;
}

template <typename T>
struct RefineOutput {
  Tensor<T> sliced;
  Tensor<T> filtered;
  Tensor<T> score;
};

template <typename T>
RefineOutput<T> refine_infer(const RefineParams<T>& params, const KernelBank<T>& bank,
                             const Tensor<T>& prob_map) {
  Tape<T> tape;
  RefineLeaves<T> ids = insert_refine_leaves(tape, params, bank, false, false, false);
  RefineGraph<T> g = refine_forward(tape, ids, tape.leaf(prob_map, false));
  return {tape.value(g.sliced), tape.value(g.filtered), tape.value(g.score)};
}

}  // namespace partsnet
