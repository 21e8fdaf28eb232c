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

#include "s2s/encoder.hpp"

#include <bit>

#include "s2s/error.hpp"

namespace s2s {

namespace {

std::size_t stride2_layers(std::size_t factor) {
  return static_cast<std::size_t>(std::countr_zero(factor));
}

Tensor relu(Tensor x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
  return x;
}

// Blocks + norm + adapter over one run of 25 Hz frames.
Tensor run_chunk(const Tensor& frames, const EncoderParams& params,
                 EncoderCaches& caches, const EncoderConfig& cfg) {
  const nn::AttnMask mask = cfg.chunk_size ? nn::AttnMask::chunked(*cfg.chunk_size)
                                           : nn::AttnMask::full();
  Tensor h = nn::block_forward(frames, params.blocks, caches.attn, mask);
  h = params.norm.apply(h);
  for (std::size_t i = 0; i < params.adapter_convs.size(); ++i) {
    h = relu(nn::conv1d_chunk(h, params.adapter_convs[i], caches.adapter_convs[i]));
  }
  if (h.rows() == 0) return Tensor::zeros(0, cfg.backbone_dim);
  return params.adapter_proj.apply(h);
}

void emit(EncoderOutput& out, EncoderCaches& caches, const Tensor& emb) {
  if (out.embeddings.embeddings.rank() != 2) {
    out.embeddings.embeddings = Tensor::zeros(0, emb.cols());
  }
  out.embeddings.embeddings.append_rows(emb);
  caches.embeddings_out += emb.rows();
  out.embeddings.last_frame_index =
      static_cast<std::int64_t>(caches.embeddings_out) - 1;
}

}  // namespace

void EncoderConfig::validate() const {
  stack().validate();
  if (!std::has_single_bit(encoder_downsample) ||
      !std::has_single_bit(adapter_downsample) ||
      encoder_downsample * adapter_downsample != 8) {
    throw Error(ErrorCode::kInvalidConfig,
                "encoder x adapter downsampling must be 8 (100 Hz -> 12.5 Hz)");
  }
  if (chunk_size && *chunk_size == 0) {
    throw Error(ErrorCode::kInvalidConfig, "chunk_size must be >= 1");
  }
  if (kernel == 0 || n_mels == 0 || backbone_dim == 0) {
    throw Error(ErrorCode::kInvalidConfig, "encoder dims must be > 0");
  }
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg,
                                  const nn::ParamInit& init) {
  cfg.validate();
  EncoderParams p;
  const std::size_t n_convs = stride2_layers(cfg.encoder_downsample);
  for (std::size_t i = 0; i < n_convs; ++i) {
    p.convs.push_back(init.conv("encoder.conv." + std::to_string(i),
                                i == 0 ? cfg.n_mels : cfg.hidden, cfg.hidden,
                                cfg.kernel, 2));
  }
  p.blocks = init.stack("encoder", cfg.stack());
  p.norm = init.norm(cfg.hidden);
  const std::size_t n_adapter = stride2_layers(cfg.adapter_downsample);
  for (std::size_t i = 0; i < n_adapter; ++i) {
    p.adapter_convs.push_back(init.conv("adapter.conv." + std::to_string(i),
                                        cfg.hidden, cfg.hidden, cfg.kernel, 2));
  }
  p.adapter_proj = init.linear("adapter.proj", cfg.hidden, cfg.backbone_dim, true);
  return p;
}

void EncoderParams::visit_encoder(const nn::TensorVisitor& f) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    convs[i].visit("encoder.conv." + std::to_string(i), f);
  }
  blocks.visit("encoder", f);
  norm.visit("encoder.norm", f);
}

void EncoderParams::visit_adapter(const nn::TensorVisitor& f) const {
  for (std::size_t i = 0; i < adapter_convs.size(); ++i) {
    adapter_convs[i].visit("adapter.conv." + std::to_string(i), f);
  }
  adapter_proj.visit("adapter.proj", f);
}

EncoderCaches EncoderCaches::fresh(const EncoderParams& params) {
  EncoderCaches c;
  for (const auto& conv : params.convs) c.convs.push_back(nn::ConvCache::fresh(conv));
  c.pending = Tensor::zeros(0, params.blocks.cfg.hidden);
  c.attn = nn::KvCache::empty(params.blocks.cfg);
  for (const auto& conv : params.adapter_convs) {
    c.adapter_convs.push_back(nn::ConvCache::fresh(conv));
  }
  return c;
}

EncoderOutput encode_chunk(const FeatureChunk& feat, const EncoderParams& params,
                           EncoderCaches& caches, const EncoderConfig& cfg) {
  if (feat.frames.rank() != 2 ||
      (feat.frames.rows() > 0 && feat.frames.cols() != cfg.n_mels)) {
    throw Error(ErrorCode::kBandMismatch,
                "expected " + std::to_string(cfg.n_mels) + " mel bands");
  }
  if (caches.convs.size() != params.convs.size() ||
      caches.adapter_convs.size() != params.adapter_convs.size()) {
    throw Error(ErrorCode::kDimMismatch, "encoder caches do not match params");
  }
  EncoderOutput out;
  out.embeddings.embeddings = Tensor::zeros(0, cfg.backbone_dim);
  out.embeddings.last_frame_index =
      static_cast<std::int64_t>(caches.embeddings_out) - 1;
  caches.frames_in += feat.size();

  Tensor h = feat.frames;
  for (std::size_t i = 0; i < params.convs.size(); ++i) {
    h = relu(nn::conv1d_chunk(h, params.convs[i], caches.convs[i]));
  }
  caches.encoder_frames += h.rows();
  caches.pending.append_rows(h);

  if (!cfg.chunk_size) return out;
  const std::size_t c = *cfg.chunk_size;
  while (caches.pending.rows() >= c) {
    const Tensor frames = caches.pending.slice_rows(0, c);
    caches.pending.drop_front_rows(c);
    emit(out, caches, run_chunk(frames, params, caches, cfg));
    ++caches.chunks_done;
    out.chunk_ends.push_back(out.embeddings.size());
  }
  return out;
}

EncoderOutput encode_flush(const EncoderParams& params, EncoderCaches& caches,
                           const EncoderConfig& cfg) {
  EncoderOutput out;
  out.embeddings.embeddings = Tensor::zeros(0, cfg.backbone_dim);
  out.embeddings.last_frame_index =
      static_cast<std::int64_t>(caches.embeddings_out) - 1;
  if (caches.pending.rows() == 0) return out;
  const Tensor frames = caches.pending;
  caches.pending = Tensor::zeros(0, params.blocks.cfg.hidden);
  emit(out, caches, run_chunk(frames, params, caches, cfg));
  ++caches.chunks_done;
  out.chunk_ends.push_back(out.embeddings.size());
  return out;
}

double chunk_duration_ms(const EncoderConfig& cfg) {
  if (!cfg.chunk_size) {
    throw Error(ErrorCode::kInfiniteChunk, "unbounded chunk has no duration");
  }
  return static_cast<double>(*cfg.chunk_size) * kEncoderFrameMs;
}

}  // namespace s2s
