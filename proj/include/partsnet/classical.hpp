// Non-differentiable reference pipeline: Gaussian-smoothed hard thresholding,
// binary erosion/dilation, Gaussian-derivative gradient field, connected
// components and area filtering. Serves as the oracle for the differentiable
// refining layers and as the classical baseline.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "partsnet/core/conv.hpp"
#include "partsnet/core/tensor.hpp"
#include "partsnet/kernels.hpp"

namespace partsnet {

// Binary image; only the values 0 and 255 occur.
struct BinaryMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;

  BinaryMap() = default;
  BinaryMap(int h_, int w_, std::uint8_t fill = 0)
      : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, fill) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }

  std::int64_t foreground_count() const {
    std::int64_t n = 0;
    for (std::uint8_t v : data) n += (v != 0);
    return n;
  }
  bool operator==(const BinaryMap&) const = default;
};

struct GradientField {
  Tensor<float> p;      // x-gradient
  Tensor<float> q;      // y-gradient
  Tensor<float> m;      // magnitude
  Tensor<float> theta;  // orientation in (-pi/2, pi/2], 0 where m < 1e-6
};

struct Component {
  int id = 0;
  std::int64_t count = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  std::vector<std::int32_t> pixels;  // linear indices y*w + x, ascending
};

struct ComponentTable {
  std::vector<Component> components;

  std::int64_t total_foreground() const {
    std::int64_t n = 0;
    for (const auto& c : components) n += c.count;
    return n;
  }
};

namespace detail_classical {

inline Tensor<float> single_map(const Tensor<float>& map) {
  detail::require(map.shape().n == 1 && map.shape().c == 1,
                  "classical: expected a single-channel map, got " + map.shape().str());
  return map;
}

}  // namespace detail_classical

// Gaussian smoothing followed by inclusive thresholding: 255 where the
// smoothed value >= t1, else 0. Works on whichever intensity scale the caller
// uses as long as t1 matches it.
inline BinaryMap hard_threshold(const Tensor<float>& map, float t1, const KernelBank<float>& bank) {
  detail_classical::single_map(map);
  Tensor<float> smoothed = conv2d_forward<float>(map, bank.gauss3, nullptr, PadMode::Same);
  BinaryMap out(map.shape().h, map.shape().w);
  for (std::int64_t i = 0; i < smoothed.numel(); ++i) {
    out.data[static_cast<std::size_t>(i)] = smoothed.data()[i] >= t1 ? 255 : 0;
  }
  return out;
}

namespace detail_classical {

// Morphology window walk shared by erode/dilate. The structuring element is
// the bank's 3x3 footprint; off-image pixels count as background.
template <bool kErode>
BinaryMap morphology(const BinaryMap& b, const KernelBank<float>& bank) {
  const Shape4 ss = bank.struct3.shape();
  const int rh = ss.h / 2, rw = ss.w / 2;
  BinaryMap out(b.h, b.w);
  for (int y = 0; y < b.h; ++y) {
    for (int x = 0; x < b.w; ++x) {
      bool acc = kErode;
      for (int i = 0; i < ss.h && (acc == kErode); ++i) {
        for (int j = 0; j < ss.w && (acc == kErode); ++j) {
          if (bank.struct3.at(0, 0, i, j) == 0.0f) continue;
          const int yy = y + i - rh;
          const int xx = x + j - rw;
          const bool fg = yy >= 0 && yy < b.h && xx >= 0 && xx < b.w && b.at(yy, xx) != 0;
          if (kErode) {
            acc = acc && fg;
          } else {
            acc = acc || fg;
          }
        }
      }
      out.at(y, x) = acc ? 255 : 0;
    }
  }
  return out;
}

}  // namespace detail_classical

inline BinaryMap erode(const BinaryMap& b, const KernelBank<float>& bank) {
  return detail_classical::morphology<true>(b, bank);
}

inline BinaryMap dilate(const BinaryMap& b, const KernelBank<float>& bank) {
  return detail_classical::morphology<false>(b, bank);
}

inline GradientField gradient_field(const Tensor<float>& map, const KernelBank<float>& bank) {
  detail_classical::single_map(map);
  GradientField f;
  f.p = conv2d_forward<float>(map, bank.grad_x5, nullptr, PadMode::Same);
  f.q = conv2d_forward<float>(map, bank.grad_y5, nullptr, PadMode::Same);
  f.m = Tensor<float>(map.shape());
  f.theta = Tensor<float>(map.shape());
  constexpr float kHalfPi = 1.5707963267948966f;
  for (std::int64_t i = 0; i < map.numel(); ++i) {
    const float p = f.p.data()[i];
    const float q = f.q.data()[i];
    const float m = std::sqrt(p * p + q * q);
    f.m.data()[i] = m;
    if (m < 1e-6f) {
      f.theta.data()[i] = 0.0f;
    } else {
      // two-quadrant arctan of the ratio; the open end of (-pi/2, pi/2] folds
      // onto +pi/2
      float th = p == 0.0f ? kHalfPi : std::atan(q / p);
      if (th == -kHalfPi) th = kHalfPi;
      f.theta.data()[i] = th;
    }
  }
  return f;
}

// 8-connected components by flood fill; ids assigned in raster-scan order of
// each component's first pixel.
inline ComponentTable cc_label(const BinaryMap& b) {
  ComponentTable table;
  std::vector<char> visited(b.data.size(), 0);
  std::vector<std::int32_t> stack;
  int next_id = 1;
  for (int y0 = 0; y0 < b.h; ++y0) {
    for (int x0 = 0; x0 < b.w; ++x0) {
      const std::int32_t start = y0 * b.w + x0;
      if (b.data[static_cast<std::size_t>(start)] == 0 || visited[static_cast<std::size_t>(start)]) {
        continue;
      }
      Component comp;
      comp.id = next_id++;
      comp.min_x = comp.max_x = x0;
      comp.min_y = comp.max_y = y0;
      stack.assign(1, start);
      visited[static_cast<std::size_t>(start)] = 1;
      while (!stack.empty()) {
        const std::int32_t idx = stack.back();
        stack.pop_back();
        comp.pixels.push_back(idx);
        const int y = idx / b.w, x = idx % b.w;
        comp.min_x = std::min(comp.min_x, x);
        comp.max_x = std::max(comp.max_x, x);
        comp.min_y = std::min(comp.min_y, y);
        comp.max_y = std::max(comp.max_y, y);
        for (int i = -1; i <= 1; ++i) {
          for (int j = -1; j <= 1; ++j) {
            if (i == 0 && j == 0) continue;
            const int yy = y + i, xx = x + j;
            if (yy < 0 || yy >= b.h || xx < 0 || xx >= b.w) continue;
            const std::int32_t nidx = yy * b.w + xx;
            if (b.data[static_cast<std::size_t>(nidx)] != 0 && !visited[static_cast<std::size_t>(nidx)]) {
              visited[static_cast<std::size_t>(nidx)] = 1;
              stack.push_back(nidx);
            }
          }
        }
      }
      comp.count = static_cast<std::int64_t>(comp.pixels.size());
      std::sort(comp.pixels.begin(), comp.pixels.end());
      table.components.push_back(std::move(comp));
    }
  }
  return table;
}

// Keeps components with count >= t2_pixels (inclusive), erases the rest.
inline BinaryMap cc_area_filter(const BinaryMap& b, std::int64_t t2_pixels) {
  detail::require(t2_pixels >= 0, "cc_area_filter: area threshold must be >= 0");
  ComponentTable table = cc_label(b);
  BinaryMap out(b.h, b.w);
  for (const auto& comp : table.components) {
    if (comp.count < t2_pixels) continue;
    for (std::int32_t idx : comp.pixels) out.data[static_cast<std::size_t>(idx)] = 255;
  }
  return out;
}

struct ClassicalResult {
  BinaryMap refined;
  ComponentTable components;  // survivors of the area filter
  bool defective = false;
};

// hard_threshold -> erode -> dilate (opening) -> area filter; the image is
// labeled defective iff any component survives.
inline ClassicalResult classical_pipeline(const Tensor<float>& prob_map, float t1,
                                          std::int64_t t2_pixels, const KernelBank<float>& bank) {
  ClassicalResult r;
  BinaryMap binary = hard_threshold(prob_map, t1, bank);
  binary = dilate(erode(binary, bank), bank);
  r.refined = cc_area_filter(binary, t2_pixels);
  r.components = cc_label(r.refined);
  r.defective = !r.components.components.empty();
  return r;
}

}  // namespace partsnet
