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

// Speech output stack: NAR prefix decoder over backbone hidden states, NAR
// decoder over frozen text embeddings (with an optional pre-network), AR
// decoder sharing the NAR parameters, the speech-token FIFO, and a toy
// single-codebook codec decoder.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "s2s/backbone.hpp"
#include "s2s/nnkit.hpp"

namespace s2s {

inline constexpr int kCodebookSize = 1024;
// Extra AR-head class that ends a response; also the AR start input row.
inline constexpr int kSpeechEnd = 1024;
inline constexpr int kOutputSampleRate = 24000;
inline constexpr int kSpeechTokenRate = 40;
inline constexpr std::size_t kSamplesPerToken = kOutputSampleRate / kSpeechTokenRate;

struct DecoderConfig {
  std::size_t hidden = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn = 128;
  bool pre_network = false;
  std::size_t backbone_dim = 64;

  void validate() const;
  nn::StackConfig stack() const { return {n_layers, hidden, n_heads, ffn}; }
  // The pre-network is two decoder layers shaped like the NAR decoder.
  nn::StackConfig pre_network_stack() const { return {2, hidden, n_heads, ffn}; }
};

struct DecoderStackParams {
  DecoderConfig cfg;
  // NAR prefix decoder: its own parameters.
  nn::Linear prefix_in;
  nn::StackParams prefix;
  // NAR and AR decoders share these.
  nn::Linear nar_in;
  nn::StackParams shared;
  nn::RmsNorm final_norm;
  std::optional<nn::StackParams> pre_network;
  // AR input embedding (rows 0..1023 tokens, row 1024 start) and output head.
  Tensor speech_embedding;
  nn::Linear ar_head;

  static DecoderStackParams init(const DecoderConfig& cfg, const nn::ParamInit& init);

  void visit_prefix(const nn::TensorVisitor& f) const;
  void visit_shared(const nn::TensorVisitor& f) const;
  void visit_pre_network(const nn::TensorVisitor& f) const;
  void visit_ar_head(const nn::TensorVisitor& f) const;
  std::size_t param_count() const;
};

// Causal over the hidden-state sequence so chunking the prefix is lossless.
// Extends `cache` in place. Throws dim-mismatch (including empty input).
void nar_prefix_prefill(const Tensor& hidden, const DecoderStackParams& stack,
                        nn::KvCache& cache);

// Embeds text with the frozen backbone table, optionally through the
// pre-network, then runs the shared stack with full attention over the chunk
// on top of `prefix` (or an empty cache). Throws unknown-token.
nn::KvCache nar_prefill(std::span<const int> text, const BackboneParams& llm,
                        const DecoderStackParams& stack,
                        const nn::KvCache* prefix);

// Resumable AR speech-token generation from a NAR context.
class ArGenerator {
 public:
  ArGenerator() = default;
  ArGenerator(nn::KvCache context, std::size_t k, std::uint64_t seed,
              std::size_t max_len)
      : ctx_(std::move(context)), k_(k), seed_(seed), max_len_(max_len) {}

  // nullopt after the end class or max_len tokens. `logits_out`, when given,
  // receives the step's 1025 head logits.
  std::optional<int> next(const DecoderStackParams& stack,
                          std::vector<float>* logits_out = nullptr);

  bool done() const { return done_; }
  std::size_t emitted() const { return emitted_; }

  // Serialization access.
  const nn::KvCache& context() const { return ctx_; }
  std::size_t k() const { return k_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t max_len() const { return max_len_; }
  int prev() const { return prev_; }
  void restore(int prev, std::size_t emitted, bool done) {
    prev_ = prev;
    emitted_ = emitted;
    done_ = done;
  }

 private:
  nn::KvCache ctx_;
  std::size_t k_ = 1;
  std::uint64_t seed_ = 0;
  std::size_t max_len_ = 0;
  int prev_ = kSpeechEnd;
  std::size_t emitted_ = 0;
  bool done_ = false;
};

std::vector<int> ar_generate(const DecoderStackParams& stack,
                             const nn::KvCache& context, std::size_t k,
                             std::uint64_t seed, std::size_t max_len);

// Speech tokens between the AR decoder and the codec. Safe for one producer
// and one consumer thread.
class TokenFifo {
 public:
  explicit TokenFifo(std::size_t chunk_size = 40);
  TokenFifo(const TokenFifo& other);
  TokenFifo& operator=(const TokenFifo& other);
  TokenFifo(TokenFifo&& other) noexcept;
  TokenFifo& operator=(TokenFifo&& other) noexcept;

  // Throws invalid-token-id or push-after-close.
  void push(int token);
  // A full chunk, or the residue once closed; nullopt otherwise.
  std::optional<std::vector<int>> pop_chunk();
  // Blocks until pop_chunk would return a value or the FIFO is closed and
  // drained (then nullopt).
  std::optional<std::vector<int>> wait_pop_chunk();
  void close();
  // Drops queued tokens (interrupt).
  void flush();

  std::size_t chunk_size() const { return chunk_size_; }
  std::size_t size() const;
  bool closed() const;
  std::vector<int> snapshot() const;
  void restore(std::vector<int> tokens, bool closed);

 private:
  std::optional<std::vector<int>> take_locked();

  std::size_t chunk_size_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<int> queue_;
  bool closed_ = false;
};

struct CodecConfig {
  std::size_t dim = 64;
  std::vector<std::size_t> upsample = {5, 5, 4, 6};
  std::vector<std::size_t> channels = {32, 16, 8};
  std::size_t crossfade = 32;

  void validate() const;
  std::size_t samples_per_token() const;
};

struct TConvParams {
  Tensor weight;  // [in, out, stride]; kernel == stride
  Tensor bias;    // [out]
};

struct CodecParams {
  CodecConfig cfg;
  Tensor embedding;  // [1024, dim]
  std::vector<TConvParams> layers;
  nn::Linear tail_head;  // dim -> crossfade

  static CodecParams init(const CodecConfig& cfg, const nn::ParamInit& init);
  void visit(const nn::TensorVisitor& f) const;
};

// Crossfade carry between consecutive tokens (and chunks).
struct CodecState {
  std::vector<float> tail;
  friend bool operator==(const CodecState&, const CodecState&) = default;
};

// 600 samples at 24 kHz per token. Throws invalid-token-id.
std::vector<std::int16_t> codec_decode(std::span<const int> tokens,
                                       const CodecParams& params,
                                       CodecState& state);

}  // namespace s2s
