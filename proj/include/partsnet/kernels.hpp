// Fixed handcrafted kernels shared by the refining network and the classical
// reference pipeline.
#pragma once

#include <cmath>

#include "partsnet/core/tensor.hpp"

namespace partsnet {

// gauss3:  3x3 Gaussian, sigma 1.0, normalized to sum 1 (center pixel plus its
//          eight-neighborhood).
// area9:   9x9 all-ones counting kernel divided by 81, so its response is the
//          fractional foreground area of the window.
// grad_x5/grad_y5: 5x5 Gaussian-derivative pair, sigma 1.0, scaled so a
//          unit-slope ramp along the axis yields response 1; grad_y5 is the
//          transpose of grad_x5.
// struct3: 3x3 all-ones structuring element for erosion/dilation.
template <typename T>
struct KernelBank {
  Tensor<T> gauss3;
  Tensor<T> area9;
  Tensor<T> grad_x5;
  Tensor<T> grad_y5;
  Tensor<T> struct3;
};

template <typename T>
KernelBank<T> make_kernel_bank() {
  KernelBank<T> bank;
  const double sigma = 1.0;
  const double s2 = 2.0 * sigma * sigma;

  bank.gauss3 = Tensor<T>(1, 1, 3, 3);
  double gsum = 0.0;
  for (int r = -1; r <= 1; ++r) {
    for (int c = -1; c <= 1; ++c) gsum += std::exp(-(r * r + c * c) / s2);
  }
  for (int r = -1; r <= 1; ++r) {
    for (int c = -1; c <= 1; ++c) {
      bank.gauss3.at(0, 0, r + 1, c + 1) = static_cast<T>(std::exp(-(r * r + c * c) / s2) / gsum);
    }
  }

  bank.area9 = Tensor<T>(1, 1, 9, 9, static_cast<T>(1.0 / 81.0));

  bank.grad_x5 = Tensor<T>(1, 1, 5, 5);
  bank.grad_y5 = Tensor<T>(1, 1, 5, 5);
  double ramp_response = 0.0;
  for (int r = -2; r <= 2; ++r) {
    for (int c = -2; c <= 2; ++c) {
      ramp_response += static_cast<double>(c) * c * std::exp(-(r * r + c * c) / s2);
    }
  }
  for (int r = -2; r <= 2; ++r) {
    for (int c = -2; c <= 2; ++c) {
      const double v = static_cast<double>(c) * std::exp(-(r * r + c * c) / s2) / ramp_response;
      bank.grad_x5.at(0, 0, r + 2, c + 2) = static_cast<T>(v);
      bank.grad_y5.at(0, 0, c + 2, r + 2) = static_cast<T>(v);
    }
  }

  bank.struct3 = Tensor<T>(1, 1, 3, 3, T(1));
  return bank;
}

}  // namespace partsnet
