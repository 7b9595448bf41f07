// Central finite-difference gradient checker.
//
// Runs in double precision: the builder is invoked once per loss evaluation
// and must re-read the parameter tensors it captures, so the checker can
// perturb one coordinate at a time. Analytic gradients come from a single
// tape backward pass over the same graph.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "partsnet/core/rng.hpp"
#include "partsnet/core/tape.hpp"

namespace partsnet {

struct GradCheckGraph {
  ValueId loss = -1;
  std::vector<ValueId> params;  // leaf ids, 1:1 with the tensors under check
};

struct GradCheckOptions {
  double step = 1e-5;
  int max_coords_per_param = 64;
  std::uint64_t seed = 0x9d5c;
  // Coordinates where both sides are below this count as matching: the loss
  // is flat there at machine precision (e.g. a conv bias that a following
  // batchnorm cancels exactly), so the relative error would only compare
  // rounding noise.
  double zero_atol = 1e-9;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::int64_t coords_checked = 0;

  bool ok(double tolerance) const { return max_rel_err < tolerance; }
};

template <typename BuildFn>
GradCheckResult grad_check(BuildFn&& build, const std::vector<Tensor<double>*>& tensors,
                           GradCheckOptions opts = {}) {
  // analytic pass
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    GradCheckGraph g = build(tape);
    detail::require(g.params.size() == tensors.size(),
                    "grad_check: builder registered a different number of params than provided");
    tape.backward(g.loss);
    analytic.reserve(g.params.size());
    for (ValueId id : g.params) analytic.push_back(tape.grad(id));
  }

  auto eval_loss = [&]() {
    Tape<double> tape;
    GradCheckGraph g = build(tape);
    return tape.value(g.loss).item();
  };

  GradCheckResult result;
  Rng rng(opts.seed);
  for (std::size_t pi = 0; pi < tensors.size(); ++pi) {
    Tensor<double>& param = *tensors[pi];
    const std::int64_t count = param.numel();
    std::vector<std::int64_t> coords;
    if (count <= opts.max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<std::size_t>(opts.max_coords_per_param));
      for (int i = 0; i < opts.max_coords_per_param; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(count)));
      }
    }
    for (std::int64_t ci : coords) {
      const double saved = param.data()[ci];
      param.data()[ci] = saved + opts.step;
      const double plus = eval_loss();
      param.data()[ci] = saved - opts.step;
      const double minus = eval_loss();
      param.data()[ci] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double a = analytic[pi].data()[ci];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (std::abs(a) < opts.zero_atol && std::abs(numeric) < opts.zero_atol) rel = 0.0;
      result.max_rel_err = std::max(result.max_rel_err, rel);
      result.coords_checked += 1;
    }
  }
  return result;
}

}  // namespace partsnet
