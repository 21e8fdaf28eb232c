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

#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "s2s/encoder.hpp"
#include "s2s/error.hpp"

using namespace s2s;
namespace t = s2s::testing;

namespace {

Tensor stream(const Tensor& feats, const EncoderParams& p, const EncoderConfig& cfg,
              std::uint64_t split_seed) {
  std::mt19937_64 rng(split_seed);
  EncoderCaches caches = EncoderCaches::fresh(p);
  Tensor out = Tensor::zeros(0, cfg.backbone_dim);
  for (std::size_t at = 0; at < feats.rows();) {
    const std::size_t n = std::min<std::size_t>(feats.rows() - at, rng() % 11);
    const EncoderOutput o = encode_chunk(FeatureChunk{feats.slice_rows(at, at + n), at}, p, caches, cfg);
    for (std::size_t i = 1; i < o.chunk_ends.size(); ++i) CHECK(o.chunk_ends[i] >= o.chunk_ends[i - 1]);
    out.append_rows(o.embeddings.embeddings);
    at += n;
  }
  out.append_rows(encode_flush(p, caches, cfg).embeddings.embeddings);
  CHECK(caches.embeddings_out == out.rows());
  return out;
}

std::size_t halve(std::size_t n) { return (n + 1) / 2; }

}  // namespace

TEST_CASE("rate chain: 100 Hz features to 25 Hz to 12.5 Hz") {
  EncoderConfig cfg;
  const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(3));
  for (std::size_t samples : {16000u, 32000u, 8000u, 48000u}) {
    const FeatureChunk f = frame_features(t::random_pcm(samples, samples));
    const std::size_t frames = t::window_count(samples, 400, 160);
    REQUIRE(f.size() == frames);
    EncoderCaches caches = EncoderCaches::fresh(p);
    const EncoderOutput a = encode_chunk(f, p, caches, cfg);
    const EncoderOutput b = encode_flush(p, caches, cfg);
    CHECK(caches.encoder_frames == halve(halve(frames)));
    CHECK(a.embeddings.size() + b.embeddings.size() == halve(halve(halve(frames))));
  }
  // One second: 98 frames, 25 encoder frames, 13 embeddings.
  CHECK(halve(halve(98)) == 25);
  CHECK(halve(halve(halve(98))) == 13);
}

TEST_CASE("streaming encoder equals the whole-utterance reference") {
  for (std::optional<std::size_t> chunk : {std::optional<std::size_t>(4), std::optional<std::size_t>(3),
                                           std::optional<std::size_t>(1), std::optional<std::size_t>()}) {
    EncoderConfig cfg;
    cfg.chunk_size = chunk;
    const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(11));
    const Tensor feats = t::random_tensor(57, 80, 99);
    const Tensor ref = t::reference_encoder(feats, p, cfg);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const Tensor got = stream(feats, p, cfg, s);
      REQUIRE(got.rows() == ref.rows());
      CHECK(max_abs_diff(got, ref) < 1e-5f);
    }
  }
}

TEST_CASE("packetisation does not change encoder output bits") {
  EncoderConfig cfg;
  const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(5));
  const Tensor feats = t::random_tensor(80, 80, 7);
  const Tensor a = stream(feats, p, cfg, 1);
  for (std::uint64_t s = 2; s < 6; ++s) CHECK(stream(feats, p, cfg, s) == a);
}

TEST_CASE("chunk boundaries are reported per completed encoder chunk") {
  EncoderConfig cfg;
  cfg.chunk_size = 4;
  const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(5));
  EncoderCaches caches = EncoderCaches::fresh(p);
  // 32 feature frames -> 8 encoder frames -> two chunks of 4 -> 2 + 2 embeddings.
  const EncoderOutput o = encode_chunk(FeatureChunk{t::random_tensor(32, 80, 1), 0}, p, caches, cfg);
  REQUIRE(o.chunk_ends.size() == 2);
  CHECK(o.chunk_ends[0] == 2);
  CHECK(o.chunk_ends[1] == 4);
  CHECK(o.embeddings.last_frame_index == 3);
  CHECK(chunk_duration_ms(cfg) == 160.0);
}

TEST_CASE("encoder errors") {
  EncoderConfig cfg;
  const EncoderParams p = EncoderParams::init(cfg, nn::ParamInit(5));
  EncoderCaches caches = EncoderCaches::fresh(p);
  try {
    encode_chunk(FeatureChunk{t::random_tensor(4, 40, 1), 0}, p, caches, cfg);
    FAIL("expected band-mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBandMismatch);
  }
  cfg.chunk_size.reset();
  CHECK_THROWS_AS(chunk_duration_ms(cfg), Error);
  cfg.chunk_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.chunk_size = 4;
  cfg.adapter_downsample = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
