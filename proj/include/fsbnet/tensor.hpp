// Dense row-major tensor of rank 1..3, the carrier type between layers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsbnet {

template <typename S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<size_t>(size()), S(0));
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, S v) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<S> data) {
    TensorT t;
    t.shape_ = std::move(shape);
    t.check_shape();
    if (static_cast<long long>(data.size()) != t.size())
      throw std::invalid_argument("tensor: data length does not match shape");
    t.data_ = std::move(data);
    return t;
  }

  static TensorT vec(std::vector<S> data) {
    const int n = static_cast<int>(data.size());
    return from({n}, std::move(data));
  }

  static TensorT scalar(S v) { return from({1}, {v}); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }

  long long size() const {
    long long n = 1;
    for (int d : shape_) n *= d;
    return shape_.empty() ? 0 : n;
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& raw() { return data_; }
  const std::vector<S>& raw() const { return data_; }

  S& operator()(int i) { return data_[static_cast<size_t>(i)]; }
  const S& operator()(int i) const { return data_[static_cast<size_t>(i)]; }

  S& operator()(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  const S& operator()(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

  S& operator()(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const S& operator()(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return TensorT<U>::from(shape_, std::move(d));
  }

  bool operator==(const TensorT& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  void check_shape() const {
    if (shape_.empty() || shape_.size() > 3)
      throw std::invalid_argument("tensor: rank must be 1..3");
    for (int d : shape_)
      if (d < 1) throw std::invalid_argument("tensor: extents must be >= 1");
  }

  std::vector<int> shape_;
  std::vector<S> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace fsbnet
