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

#pragma once

// Toy-scale neural primitives shared by the encoder, the backbone and the
// speech decoders: linear layers, RMSNorm, pre-norm decoder blocks with RoPE
// and a KV cache, strided 1-D convolution with a streaming cache, and top-k
// sampling. Everything is deterministic given the parameter seed.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s::nn {

using TensorVisitor = std::function<void(const std::string&, const Tensor&)>;

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out] or empty

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
  // y = x W^T + b, row by row.
  Tensor apply(const Tensor& x) const;
  void apply_row(const float* x, float* y) const;
  void visit(const std::string& prefix, const TensorVisitor& f) const;
};

struct RmsNorm {
  Tensor gain;  // [dim]
  Tensor apply(const Tensor& x) const;
  void visit(const std::string& prefix, const TensorVisitor& f) const;
};

struct StackConfig {
  std::size_t n_layers = 2;
  std::size_t hidden = 64;
  std::size_t n_heads = 4;
  std::size_t ffn = 128;

  std::size_t head_dim() const { return hidden / n_heads; }
  // Throws invalid-config.
  void validate() const;
  // Parameters in one decoder block of this shape.
  std::size_t block_param_count() const;
};

// Llama-style pre-norm block: attention + SwiGLU MLP, no projection biases.
struct BlockParams {
  RmsNorm attn_norm;
  Linear q, k, v, o;
  RmsNorm mlp_norm;
  Linear gate, up, down;
  void visit(const std::string& prefix, const TensorVisitor& f) const;
};

struct StackParams {
  StackConfig cfg;
  std::vector<BlockParams> blocks;
  void visit(const std::string& prefix, const TensorVisitor& f) const;
};

struct LayerKv {
  Tensor keys;    // [n_past, n_heads, head_dim], RoPE already applied
  Tensor values;  // [n_past, n_heads, head_dim]
  friend bool operator==(const LayerKv&, const LayerKv&) = default;
};

struct KvCache {
  std::vector<LayerKv> layers;
  std::size_t n_past = 0;

  static KvCache empty(const StackConfig& cfg);
  bool consistent() const;
  friend bool operator==(const KvCache&, const KvCache&) = default;
};

struct AttnMask {
  bool causal = true;
  // Chunked mask: position p sees q iff q / chunk <= p / chunk.
  std::optional<std::size_t> chunk;

  static AttnMask causal_only() { return {true, std::nullopt}; }
  static AttnMask full() { return {false, std::nullopt}; }
  static AttnMask chunked(std::size_t c) { return {false, c}; }
  bool allows(std::size_t query_pos, std::size_t key_pos) const;
};

// Runs every block of `stack` over x [T, hidden], attending to the cache plus
// the current positions under `mask`. Appends T positions to the cache.
// Throws dim-mismatch.
Tensor block_forward(const Tensor& x, const StackParams& stack, KvCache& cache,
                     const AttnMask& mask);

struct ConvParams {
  Tensor weight;  // [out, in, kernel]
  Tensor bias;    // [out]
  std::size_t stride = 1;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
  void visit(const std::string& prefix, const TensorVisitor& f) const;
};

// Streaming state of one conv layer: the last kernel-1 input frames and the
// offset of the next window start relative to the first tail frame.
struct ConvCache {
  Tensor tail;  // [kernel - 1, in]
  std::size_t offset = 0;

  // Zero tail: the stream is left-padded with kernel-1 zero frames.
  static ConvCache fresh(const ConvParams& p);
  friend bool operator==(const ConvCache&, const ConvCache&) = default;
};

// Convolves a chunk of frames [T, in] given the cache; emits every window that
// becomes complete. Chunked application equals the full-sequence convolution
// of the zero-left-padded stream.
Tensor conv1d_chunk(const Tensor& x, const ConvParams& p, ConvCache& cache);

// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const float> logits);
// Indices of the k largest values, ordered by (value desc, index asc).
std::vector<std::size_t> top_k_indices(std::span<const float> logits,
                                       std::size_t k);
// Samples from the softmax restricted to the top-k logits. k = 1 is argmax.
// Throws invalid-k.
std::size_t top_k_sample(std::span<const float> logits, std::size_t k,
                         std::uint64_t seed);

// Mixes a base seed with stream coordinates into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> coords);

// Seeded parameter factory. Each tensor draws from its own stream keyed by
// (seed, name) so adding or removing a tensor never perturbs the others.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : seed_(seed) {}

  // Uniform in [-0.1, 0.1].
  Tensor uniform(std::string_view name, std::vector<std::size_t> shape) const;
  Tensor ones(std::vector<std::size_t> shape) const;

  Linear linear(std::string_view name, std::size_t in, std::size_t out,
                bool bias) const;
  RmsNorm norm(std::size_t dim) const;
  ConvParams conv(std::string_view name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride) const;
  StackParams stack(std::string_view name, const StackConfig& cfg) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// Content hash over (name, shape, bytes) of every visited tensor.
class Fingerprint {
 public:
  Fingerprint();
  ~Fingerprint();
  Fingerprint(const Fingerprint&) = delete;
  Fingerprint& operator=(const Fingerprint&) = delete;

  void update(const std::string& name, const Tensor& t);
  // Finalizes; call once.
  std::string hex();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

std::size_t param_count(const std::function<void(const TensorVisitor&)>& visit);

StackParams init_stack(const StackConfig& cfg, std::uint64_t seed);
std::string fingerprint(const StackParams& stack);

Tensor silu(const Tensor& x);

}  // namespace s2s::nn
