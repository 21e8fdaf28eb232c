// Copyright 2026 The duplex-s2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "s2s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "s2s/error.hpp"

namespace s2s {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kDimMismatch: return "dim-mismatch";
    case ErrorCode::kInvalidK: return "invalid-k";
    case ErrorCode::kBandMismatch: return "band-mismatch";
    case ErrorCode::kInfiniteChunk: return "infinite-chunk";
    case ErrorCode::kEmptyCache: return "empty-cache";
    case ErrorCode::kFrozenViolated: return "frozen-violated";
    case ErrorCode::kUnknownToken: return "unknown-token";
    case ErrorCode::kPushAfterClose: return "push-after-close";
    case ErrorCode::kInvalidTokenId: return "invalid-token-id";
    case ErrorCode::kSessionCorrupt: return "session-corrupt";
    case ErrorCode::kIncompleteTurn: return "incomplete-turn";
    case ErrorCode::kUnknownSession: return "unknown-session";
    case ErrorCode::kOverload: return "overload";
    case ErrorCode::kBindFailure: return "bind-failure";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kIo: return "io-error";
    case ErrorCode::kDuplicateSession: return "duplicate-session";
    case ErrorCode::kBadSeq: return "bad-seq";
  }
  return "unknown";
}

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw Error(ErrorCode::kDimMismatch, "tensor data does not match shape");
  }
}

std::size_t Tensor::row_size() const {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
  return n;
}

void Tensor::append_rows(const Tensor& other) {
  if (other.rows() == 0) return;
  if (shape_.empty()) {
    *this = other;
    return;
  }
  if (!std::equal(shape_.begin() + 1, shape_.end(), other.shape_.begin() + 1,
                  other.shape_.end())) {
    throw Error(ErrorCode::kDimMismatch, "append_rows: trailing dims differ");
  }
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  shape_[0] += other.shape_[0];
}

void Tensor::append_rows(std::span<const float> rows, std::size_t count) {
  if (count == 0) return;
  if (shape_.empty() || rows.size() != count * row_size()) {
    throw Error(ErrorCode::kDimMismatch, "append_rows: bad row span");
  }
  data_.insert(data_.end(), rows.begin(), rows.end());
  shape_[0] += count;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) {
    throw Error(ErrorCode::kDimMismatch, "slice_rows out of range");
  }
  std::vector<std::size_t> shape = shape_;
  shape[0] = end - begin;
  const std::size_t rs = row_size();
  return Tensor(std::move(shape),
                std::vector<float>(data_.begin() + begin * rs,
                                   data_.begin() + end * rs));
}

void Tensor::drop_front_rows(std::size_t count) {
  if (count == 0) return;
  if (count > rows()) {
    throw Error(ErrorCode::kDimMismatch, "drop_front_rows out of range");
  }
  data_.erase(data_.begin(), data_.begin() + count * row_size());
  shape_[0] -= count;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kDimMismatch, "max_abs_diff: shapes differ");
  }
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace s2s
