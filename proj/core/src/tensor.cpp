// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace muster {

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ", ";
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

void validate_dims(const Shape& dims) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw Error(ErrorCode::kRank, "tensor rank must be in [1, 5], got " +
                                      std::to_string(dims.size()));
  }
  for (auto d : dims) {
    if (d < 1) {
      throw Error(ErrorCode::kShape, "tensor extents must be >= 1, got " + shape_string(dims));
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims) : dims_(std::move(dims)) {
  validate_dims(dims_);
  data_.assign(static_cast<std::size_t>(shape_numel(dims_)), T{0});
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  validate_dims(dims_);
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(dims_)) {
    throw Error(ErrorCode::kShape, "payload has " + std::to_string(data_.size()) +
                                       " elements but extents " + shape_string(dims_) +
                                       " need " + std::to_string(shape_numel(dims_)));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape dims, T value) {
  BasicTensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape dims) const {
  if (shape_numel(dims) != size()) {
    throw Error(ErrorCode::kShape,
                "cannot reshape " + shape_string(dims_) + " to " + shape_string(dims));
  }
  return BasicTensor(std::move(dims), data_);
}

template <typename T>
bool BasicTensor<T>::identical(const BasicTensor& other) const noexcept {
  if (dims_ != other.dims_) return false;
  return data_.empty() ||
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0;
}

template <typename T>
std::size_t BasicTensor<T>::offset(std::initializer_list<std::int64_t> idx) const {
  if (idx.size() != dims_.size()) {
    throw Error(ErrorCode::kRank, "index of rank " + std::to_string(idx.size()) +
                                      " into tensor " + shape_string(dims_));
  }
  std::int64_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    off = off * dims_[axis] + i;
    ++axis;
  }
  return static_cast<std::size_t>(off);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw Error(ErrorCode::kShape, std::string(what) + ": expected rank " + std::to_string(rank) +
                                       ", got " + shape_string(t.dims()));
  }
}

template <typename T>
void debug_check_finite([[maybe_unused]] const BasicTensor<T>& t,
                        [[maybe_unused]] const char* what) {
#ifndef NDEBUG
  for (T v : t.data()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kEvaluation, std::string(what) + " produced a non-finite value");
    }
  }
#endif
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.dims() != b.dims()) {
    throw Error(ErrorCode::kShape,
                "max_abs_diff: " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void require_rank(const BasicTensor<float>&, std::size_t, const char*);
template void require_rank(const BasicTensor<double>&, std::size_t, const char*);
template void debug_check_finite(const BasicTensor<float>&, const char*);
template void debug_check_finite(const BasicTensor<double>&, const char*);
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace muster
