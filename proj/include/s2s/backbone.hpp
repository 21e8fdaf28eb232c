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

// Frozen toy decoder-only language model. Text tokens are bytes 0..255 plus
// four specials; speech embeddings from the adapter are prefilled chunk by
// chunk, and a three-way state head reads the last position of each chunk.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2s/encoder.hpp"
#include "s2s/nnkit.hpp"

namespace s2s {

inline constexpr int kTextVocab = 256;
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kUser = 258;
inline constexpr int kAssistant = 259;

enum class DialogueState : std::uint8_t {
  kContinue = 0,
  kInterrupt = 1,
  kEndNoInterrupt = 2,
};

struct BackboneConfig {
  std::size_t vocab = 260;
  std::size_t hidden = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn = 128;
  std::size_t prompt_len = 8;
  std::size_t n_special_tokens = 4;

  void validate() const;
  nn::StackConfig stack() const { return {n_layers, hidden, n_heads, ffn}; }
};

struct BackboneParams {
  BackboneConfig cfg;
  Tensor embedding;  // [vocab, hidden]
  nn::StackParams stack;
  nn::RmsNorm final_norm;
  nn::Linear lm_head;
  Tensor prompt;          // [prompt_len, hidden], prepended to every question
  Tensor special_tokens;  // [n_special, hidden]; input-training only, unused here
  nn::Linear state_head;  // hidden -> 3

  static BackboneParams init(const BackboneConfig& cfg, const nn::ParamInit& init);

  void visit_llm(const nn::TensorVisitor& f) const;
  void visit_embedding(const nn::TensorVisitor& f) const;
  void visit_prompt(const nn::TensorVisitor& f) const;
  void visit_special_tokens(const nn::TensorVisitor& f) const;
  void visit_state_head(const nn::TensorVisitor& f) const;

  // Rows of the embedding table. Throws unknown-token.
  Tensor embed(std::span<const int> tokens) const;
};

struct StatePrediction {
  DialogueState state = DialogueState::kContinue;
  std::array<float, 3> logits{};
  std::int64_t at_frame = -1;
};

// Argmax over the three state logits (lowest index on ties).
DialogueState state_from_logits(std::span<const float> logits);

// Prefills one encoder chunk's embeddings (preceded by the prompt vectors on
// the first chunk of a turn) and applies the state head to the final position.
// Throws dim-mismatch, including for an empty chunk.
StatePrediction prefill_speech_chunk(const EmbeddingChunk& emb,
                                     const BackboneParams& params,
                                     nn::KvCache& cache, bool first_chunk);

struct TextSampler {
  enum class Kind { kGreedy, kTopK, kScript };
  Kind kind = Kind::kGreedy;
  std::size_t k = 1;
  std::uint64_t seed = 0;
  // kScript: emitted verbatim, then EOS. The backbone still runs every step so
  // hidden states are genuine.
  std::vector<int> script;

  static TextSampler greedy() { return {}; }
  static TextSampler scripted(std::vector<int> tokens) {
    return {Kind::kScript, 1, 0, std::move(tokens)};
  }
};

struct TextToken {
  int id = 0;
  std::vector<float> hidden;  // final-layer (post-norm) state that predicted id
};

// Resumable autoregressive text generation over a session cache. The first
// step feeds the assistant marker; each later step feeds the previous token.
class TextGenerator {
 public:
  TextGenerator() = default;
  TextGenerator(TextSampler sampler, std::size_t max_tokens)
      : sampler_(std::move(sampler)), max_tokens_(max_tokens) {}

  // nullopt once EOS is drawn or max_tokens is reached. Throws empty-cache.
  std::optional<TextToken> next(const BackboneParams& params, nn::KvCache& cache);

  bool done() const { return done_; }
  std::size_t emitted() const { return emitted_; }

  // Serialization access.
  const TextSampler& sampler() const { return sampler_; }
  std::size_t max_tokens() const { return max_tokens_; }
  int pending() const { return pending_; }
  void restore(int pending, std::size_t emitted, bool done) {
    pending_ = pending;
    emitted_ = emitted;
    done_ = done;
  }

 private:
  TextSampler sampler_;
  std::size_t max_tokens_ = 0;
  int pending_ = kAssistant;
  std::size_t emitted_ = 0;
  bool done_ = false;
};

std::vector<TextToken> generate_text(const BackboneParams& params,
                                     nn::KvCache& cache, std::size_t max_tokens,
                                     const TextSampler& sampler);

// Byte tokens to text; specials decode to nothing.
std::string decode_tokens(std::span<const int> tokens);
std::vector<int> encode_text(std::string_view text);

// Incremental sentence segmentation: a chunk closes after the token whose
// chunk text ends in . ! ? ; or their full-width forms.
class SentenceSplitter {
 public:
  std::optional<std::vector<int>> push(int token);
  std::optional<std::vector<int>> flush();

  const std::vector<int>& buffered() const { return current_; }
  void restore(std::vector<int> buffered) { current_ = std::move(buffered); }

 private:
  std::vector<int> current_;
};

std::vector<std::vector<int>> sentence_split(std::span<const int> tokens);

}  // namespace s2s
