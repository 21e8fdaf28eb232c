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

#include "s2s/speechgen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "s2s/error.hpp"

namespace s2s {

void DecoderConfig::validate() const {
  stack().validate();
  if (backbone_dim == 0) {
    throw Error(ErrorCode::kInvalidConfig, "backbone_dim must be > 0");
  }
}

DecoderStackParams DecoderStackParams::init(const DecoderConfig& cfg,
                                            const nn::ParamInit& init) {
  cfg.validate();
  DecoderStackParams p;
  p.cfg = cfg;
  p.prefix_in = init.linear("nar_prefix.in", cfg.backbone_dim, cfg.hidden, true);
  p.prefix = init.stack("nar_prefix", cfg.stack());
  p.nar_in = init.linear("nar_ar.in", cfg.backbone_dim, cfg.hidden, true);
  p.shared = init.stack("nar_ar", cfg.stack());
  p.final_norm = init.norm(cfg.hidden);
  if (cfg.pre_network) {
    p.pre_network = init.stack("pre_network", cfg.pre_network_stack());
  }
  p.speech_embedding =
      init.uniform("ar.speech_embedding", {kCodebookSize + 1, cfg.hidden});
  p.ar_head = init.linear("ar.head", cfg.hidden, kCodebookSize + 1, true);
  return p;
}

void DecoderStackParams::visit_prefix(const nn::TensorVisitor& f) const {
  prefix_in.visit("nar_prefix.in", f);
  prefix.visit("nar_prefix", f);
}

void DecoderStackParams::visit_shared(const nn::TensorVisitor& f) const {
  nar_in.visit("nar_ar.in", f);
  shared.visit("nar_ar", f);
  final_norm.visit("nar_ar.final_norm", f);
}

void DecoderStackParams::visit_pre_network(const nn::TensorVisitor& f) const {
  if (pre_network) pre_network->visit("pre_network", f);
}

void DecoderStackParams::visit_ar_head(const nn::TensorVisitor& f) const {
  f("ar.speech_embedding", speech_embedding);
  ar_head.visit("ar.head", f);
}

std::size_t DecoderStackParams::param_count() const {
  return nn::param_count([&](const nn::TensorVisitor& f) {
    visit_prefix(f);
    visit_shared(f);
    visit_pre_network(f);
    visit_ar_head(f);
  });
}

void nar_prefix_prefill(const Tensor& hidden, const DecoderStackParams& stack,
                        nn::KvCache& cache) {
  if (hidden.rank() != 2 || hidden.rows() == 0) {
    throw Error(ErrorCode::kDimMismatch, "nar prefix needs a non-empty hidden chunk");
  }
  const Tensor x = stack.prefix_in.apply(hidden);
  nn::block_forward(x, stack.prefix, cache, nn::AttnMask::causal_only());
}

nn::KvCache nar_prefill(std::span<const int> text, const BackboneParams& llm,
                        const DecoderStackParams& stack,
                        const nn::KvCache* prefix) {
  Tensor x = stack.nar_in.apply(llm.embed(text));
  if (stack.pre_network) {
    nn::KvCache scratch = nn::KvCache::empty(stack.pre_network->cfg);
    x = nn::block_forward(x, *stack.pre_network, scratch, nn::AttnMask::full());
  }
  nn::KvCache cache = prefix ? *prefix : nn::KvCache::empty(stack.shared.cfg);
  if (x.rows() > 0) {
    nn::block_forward(x, stack.shared, cache, nn::AttnMask::full());
  }
  return cache;
}

std::optional<int> ArGenerator::next(const DecoderStackParams& stack,
                                     std::vector<float>* logits_out) {
  if (done_) return std::nullopt;
  if (emitted_ >= max_len_) {
    done_ = true;
    return std::nullopt;
  }
  Tensor x = Tensor::zeros(1, stack.cfg.hidden);
  std::copy_n(stack.speech_embedding.row(static_cast<std::size_t>(prev_)),
              stack.cfg.hidden, x.row(0));
  const Tensor h = stack.final_norm.apply(
      nn::block_forward(x, stack.shared, ctx_, nn::AttnMask::causal_only()));
  std::vector<float> logits(kCodebookSize + 1);
  stack.ar_head.apply_row(h.row(0), logits.data());
  const int token = static_cast<int>(
      nn::top_k_sample(logits, k_, nn::derive_seed(seed_, {emitted_})));
  if (logits_out) *logits_out = std::move(logits);
  if (token == kSpeechEnd) {
    done_ = true;
    return std::nullopt;
  }
  prev_ = token;
  ++emitted_;
  return token;
}

std::vector<int> ar_generate(const DecoderStackParams& stack,
                             const nn::KvCache& context, std::size_t k,
                             std::uint64_t seed, std::size_t max_len) {
  std::vector<int> out;
  if (max_len == 0) return out;
  ArGenerator gen(context, k, seed, max_len);
  while (auto t = gen.next(stack)) out.push_back(*t);
  return out;
}

TokenFifo::TokenFifo(std::size_t chunk_size) : chunk_size_(chunk_size) {
  if (chunk_size == 0) {
    throw Error(ErrorCode::kInvalidConfig, "fifo chunk size must be >= 1");
  }
}

TokenFifo::TokenFifo(const TokenFifo& other) : chunk_size_(other.chunk_size_) {
  std::lock_guard lock(other.mu_);
  queue_ = other.queue_;
  closed_ = other.closed_;
}

TokenFifo& TokenFifo::operator=(const TokenFifo& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  chunk_size_ = other.chunk_size_;
  queue_ = other.queue_;
  closed_ = other.closed_;
  return *this;
}

TokenFifo::TokenFifo(TokenFifo&& other) noexcept : chunk_size_(other.chunk_size_) {
  std::lock_guard lock(other.mu_);
  queue_ = std::move(other.queue_);
  closed_ = other.closed_;
}

TokenFifo& TokenFifo::operator=(TokenFifo&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  chunk_size_ = other.chunk_size_;
  queue_ = std::move(other.queue_);
  closed_ = other.closed_;
  cv_.notify_all();
  return *this;
}

void TokenFifo::push(int token) {
  if (token < 0 || token >= kCodebookSize) {
    throw Error(ErrorCode::kInvalidTokenId, "speech token " + std::to_string(token));
  }
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(ErrorCode::kPushAfterClose, "fifo is closed");
    queue_.push_back(token);
  }
  cv_.notify_one();
}

std::optional<std::vector<int>> TokenFifo::take_locked() {
  std::size_t n = 0;
  if (queue_.size() >= chunk_size_) {
    n = chunk_size_;
  } else if (closed_ && !queue_.empty()) {
    n = queue_.size();
  } else {
    return std::nullopt;
  }
  std::vector<int> chunk(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(n));
  queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(n));
  return chunk;
}

std::optional<std::vector<int>> TokenFifo::pop_chunk() {
  std::lock_guard lock(mu_);
  return take_locked();
}

std::optional<std::vector<int>> TokenFifo::wait_pop_chunk() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return queue_.size() >= chunk_size_ || closed_; });
  return take_locked();
}

void TokenFifo::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

void TokenFifo::flush() {
  std::lock_guard lock(mu_);
  queue_.clear();
}

std::size_t TokenFifo::size() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

bool TokenFifo::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::vector<int> TokenFifo::snapshot() const {
  std::lock_guard lock(mu_);
  return {queue_.begin(), queue_.end()};
}

void TokenFifo::restore(std::vector<int> tokens, bool closed) {
  std::lock_guard lock(mu_);
  queue_.assign(tokens.begin(), tokens.end());
  closed_ = closed;
}

void CodecConfig::validate() const {
  if (upsample.empty() || channels.size() + 1 != upsample.size() || dim == 0 ||
      crossfade == 0) {
    throw Error(ErrorCode::kInvalidConfig,
                "codec needs one channel count between each upsampling stage");
  }
  if (samples_per_token() != kSamplesPerToken) {
    throw Error(ErrorCode::kInvalidConfig,
                "codec upsampling must give 600 samples per token");
  }
  if (crossfade > samples_per_token()) {
    throw Error(ErrorCode::kInvalidConfig, "crossfade longer than a token");
  }
}

std::size_t CodecConfig::samples_per_token() const {
  return std::accumulate(upsample.begin(), upsample.end(), std::size_t{1},
                         std::multiplies<>());
}

CodecParams CodecParams::init(const CodecConfig& cfg, const nn::ParamInit& init) {
  cfg.validate();
  CodecParams p;
  p.cfg = cfg;
  p.embedding = init.uniform("codec.embedding", {kCodebookSize, cfg.dim});
  std::size_t in = cfg.dim;
  for (std::size_t i = 0; i < cfg.upsample.size(); ++i) {
    const std::size_t out = i < cfg.channels.size() ? cfg.channels[i] : 1;
    const std::string name = "codec.up." + std::to_string(i);
    p.layers.push_back({init.uniform(name + ".weight", {in, out, cfg.upsample[i]}),
                        init.uniform(name + ".bias", {out})});
    in = out;
  }
  p.tail_head = init.linear("codec.tail", cfg.dim, cfg.crossfade, true);
  return p;
}

void CodecParams::visit(const nn::TensorVisitor& f) const {
  f("codec.embedding", embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string name = "codec.up." + std::to_string(i);
    f(name + ".weight", layers[i].weight);
    f(name + ".bias", layers[i].bias);
  }
  tail_head.visit("codec.tail", f);
}

namespace {

// Non-overlapping transposed convolution: every input frame expands to
// `stride` output frames.
std::vector<float> tconv(const std::vector<float>& x, std::size_t frames,
                         const TConvParams& p) {
  const std::size_t in = p.weight.dim(0);
  const std::size_t out = p.weight.dim(1);
  const std::size_t stride = p.weight.dim(2);
  std::vector<float> y(frames * stride * out);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < stride; ++j) {
      float* dst = y.data() + (t * stride + j) * out;
      for (std::size_t o = 0; o < out; ++o) dst[o] = p.bias[o];
      for (std::size_t c = 0; c < in; ++c) {
        const float xc = x[t * in + c];
        const float* w = p.weight.data().data() + (c * out) * stride;
        for (std::size_t o = 0; o < out; ++o) dst[o] += xc * w[o * stride + j];
      }
    }
  }
  for (float& v : y) v = std::tanh(v);
  return y;
}

}  // namespace

std::vector<std::int16_t> codec_decode(std::span<const int> tokens,
                                       const CodecParams& params,
                                       CodecState& state) {
  const CodecConfig& cfg = params.cfg;
  const std::size_t fade = cfg.crossfade;
  const std::size_t per_token = cfg.samples_per_token();
  for (int t : tokens) {
    if (t < 0 || t >= kCodebookSize) {
      throw Error(ErrorCode::kInvalidTokenId, "speech token " + std::to_string(t));
    }
  }
  if (state.tail.size() != fade) state.tail.assign(fade, 0.0f);

  std::vector<std::int16_t> pcm;
  pcm.reserve(tokens.size() * per_token);
  std::vector<float> next_tail(fade);
  for (int t : tokens) {
    const float* emb = params.embedding.row(static_cast<std::size_t>(t));
    std::vector<float> x(emb, emb + cfg.dim);
    std::size_t frames = 1;
    for (const auto& layer : params.layers) {
      x = tconv(x, frames, layer);
      frames *= layer.weight.dim(2);
    }
    for (std::size_t i = 0; i < fade; ++i) {
      const float w = (static_cast<float>(i) + 0.5f) / static_cast<float>(fade);
      x[i] = w * x[i] + (1.0f - w) * state.tail[i];
    }
    params.tail_head.apply_row(emb, next_tail.data());
    for (std::size_t i = 0; i < fade; ++i) state.tail[i] = std::tanh(next_tail[i]);
    for (float v : x) {
      const float clamped = std::clamp(v, -1.0f, 1.0f);
      pcm.push_back(static_cast<std::int16_t>(std::lround(clamped * 32767.0f)));
    }
  }
  return pcm;
}

}  // namespace s2s
