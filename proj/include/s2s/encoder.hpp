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

// Chunk-wise streaming speech encoder and adapter: log-mel frames at 100 Hz
// go through stride-2 convolutions down to 25 Hz, transformer blocks under a
// chunked attention mask, then an adapter convolution down to 12.5 Hz and a
// projection into the backbone embedding space.

#include <cstdint>
#include <optional>
#include <vector>

#include "s2s/frontend.hpp"
#include "s2s/nnkit.hpp"

namespace s2s {

struct EncoderConfig {
  std::size_t n_mels = kNumMelBands;
  std::size_t hidden = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn = 128;
  std::size_t kernel = 3;
  std::size_t encoder_downsample = 4;
  std::size_t adapter_downsample = 2;
  // Encoder chunk in 25 Hz frames; nullopt is the unbounded chunk.
  std::optional<std::size_t> chunk_size = 4;
  std::size_t backbone_dim = 64;

  void validate() const;
  nn::StackConfig stack() const { return {n_layers, hidden, n_heads, ffn}; }
};

struct EncoderParams {
  std::vector<nn::ConvParams> convs;  // stride 2 each
  nn::StackParams blocks;
  nn::RmsNorm norm;
  std::vector<nn::ConvParams> adapter_convs;
  nn::Linear adapter_proj;

  static EncoderParams init(const EncoderConfig& cfg, const nn::ParamInit& init);
  void visit_encoder(const nn::TensorVisitor& f) const;
  void visit_adapter(const nn::TensorVisitor& f) const;
};

struct EncoderCaches {
  std::vector<nn::ConvCache> convs;
  // 25 Hz frames waiting for a full encoder chunk.
  Tensor pending;
  nn::KvCache attn;
  std::vector<nn::ConvCache> adapter_convs;
  std::size_t frames_in = 0;
  std::size_t encoder_frames = 0;
  std::size_t embeddings_out = 0;
  std::size_t chunks_done = 0;

  static EncoderCaches fresh(const EncoderParams& params);
  friend bool operator==(const EncoderCaches&, const EncoderCaches&) = default;
};

struct EmbeddingChunk {
  Tensor embeddings;  // [n, backbone_dim]
  // Turn-global index of the final row, -1 when nothing has been emitted yet.
  std::int64_t last_frame_index = -1;

  std::size_t size() const { return embeddings.rows(); }
};

struct EncoderOutput {
  EmbeddingChunk embeddings;
  // For every encoder chunk completed by this call, the cumulative row count
  // of `embeddings` at the chunk boundary.
  std::vector<std::size_t> chunk_ends;
};

// Throws band-mismatch when the features are not 80-band.
EncoderOutput encode_chunk(const FeatureChunk& feat, const EncoderParams& params,
                           EncoderCaches& caches, const EncoderConfig& cfg);

// End of stream: runs the blocks over any partial pending chunk.
EncoderOutput encode_flush(const EncoderParams& params, EncoderCaches& caches,
                           const EncoderConfig& cfg);

// Wall-clock span of one encoder chunk (25 Hz frames, 40 ms each).
// Throws infinite-chunk.
double chunk_duration_ms(const EncoderConfig& cfg);

inline constexpr double kEncoderFrameMs = 40.0;

}  // namespace s2s
