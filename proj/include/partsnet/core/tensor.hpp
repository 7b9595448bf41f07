// Dense 4-D float tensor, layout (batch, channel, height, width), row-major.
#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace partsnet {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape4{n, c, h, w}, fill) {}

  explicit Tensor(Shape4 s, T fill = T(0)) : shape_(s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw std::invalid_argument("Tensor: negative dimension in shape " + s.str());
    }
    data_.assign(static_cast<std::size_t>(s.numel()), fill);
  }

  static Tensor scalar(T v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  // Pointer to the contiguous row (n, c, h, 0..w-1).
  T* row(int n, int c, int h) { return data_.data() + index(n, c, h, 0); }
  const T* row(int n, int c, int h) const { return data_.data() + index(n, c, h, 0); }

  T item() const {
    if (numel() != 1) {
      throw std::logic_error("Tensor::item: tensor has shape " + shape_.str() + ", expected a scalar");
    }
    return data_[0];
  }

  void fill(T v) { data_.assign(data_.size(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

using TensorF = Tensor<float>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

}  // namespace partsnet
