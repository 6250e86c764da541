// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor. Feature maps are laid out [H, W, C]; window token
// blocks are [windows, tokens, channels].

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "muster/error.hpp"

namespace muster {

using Shape = std::vector<std::int64_t>;

inline constexpr std::size_t kMaxRank = 5;

std::string shape_string(const Shape& dims);
std::int64_t shape_numel(const Shape& dims);

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape dims);
  BasicTensor(Shape dims, std::vector<T> data);

  static BasicTensor zeros(Shape dims) { return BasicTensor(std::move(dims)); }
  static BasicTensor full(Shape dims, T value);

  const Shape& dims() const noexcept { return dims_; }
  std::int64_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename... Idx>
  T& at(Idx... idx) {
    return data_[offset({static_cast<std::int64_t>(idx)...})];
  }
  template <typename... Idx>
  const T& at(Idx... idx) const {
    return data_[offset({static_cast<std::int64_t>(idx)...})];
  }

  /// Same data, new extents. Element count must match.
  BasicTensor reshaped(Shape dims) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return BasicTensor<U>(dims_, std::move(out));
  }

  /// Bit-level equality of extents and payload.
  bool identical(const BasicTensor& other) const noexcept;

 private:
  std::size_t offset(std::initializer_list<std::int64_t> idx) const;

  Shape dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Throws ErrorCode::kShape unless `t` has exactly `rank` axes.
template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what);

/// Debug-build guard: kernels must not turn finite input into NaN/Inf.
template <typename T>
void debug_check_finite(const BasicTensor<T>& t, const char* what);

/// Largest |a - b| over all elements; extents must match.
template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace muster
