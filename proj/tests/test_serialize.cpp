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

#include "doctest.h"
#include "harness.hpp"
#include "oracles.hpp"
#include "s2s/error.hpp"
#include "s2s/serialize.hpp"

using namespace s2s;
using namespace s2s::testing;

namespace {

const Models& models() {
  static const Models m = Models::build(ModelConfig{}, 1);
  return m;
}

std::string transcript(const std::vector<TurnEvent>& evs) {
  std::string s;
  for (const auto& e : evs) s += dump_line(event_to_json(e, true)) + "\n";
  return s;
}

}  // namespace

TEST_CASE("a restored session continues exactly like the original") {
  EngineConfig cfg;
  cfg.topk = 5;
  const DuplexEngine eng(models(), cfg);
  SessionPolicy pol;
  pol.states = script({{0, 2, 1}, {1, 2, 1}});
  pol.forced_text[0] = encode_text(std::string(60, 'x') + ". Done.");
  pol.seed = 9;
  const auto pcm = timeline(3500, {{200, 400}, {1300, 400}});

  SessionCaches ref = eng.new_session(pol);
  const std::string expected = transcript(drive(eng, ref, pcm));

  // Cut points cover idle, listening, generating and barge-in.
  for (std::size_t cut_packet : {3u, 30u, 45u, 60u, 80u, 95u}) {
    CAPTURE(cut_packet);
    SessionCaches s = eng.new_session(pol);
    const std::size_t cut = cut_packet * 320;
    auto evs = drive(eng, s, std::span(pcm).first(cut), 320, false);
    const auto bytes = save_session(s);
    SessionCaches restored = load_session(bytes);
    CHECK(save_session(restored) == bytes);
    auto rest = drive(eng, restored, std::span(pcm).subspan(cut), 320, true);
    evs.insert(evs.end(), rest.begin(), rest.end());
    CHECK(transcript(evs) == expected);
  }
}

TEST_CASE("encoder caches round-trip") {
  const auto& enc = models().encoder;
  EncoderCaches c = EncoderCaches::fresh(enc);
  encode_chunk(FeatureChunk{random_tensor(23, 80, 1), 0}, enc, c, models().cfg.encoder);
  const EncoderCaches back = load_encoder_caches(save_encoder_caches(c));
  CHECK(back == c);
}

TEST_CASE("malformed session bytes are rejected") {
  const DuplexEngine eng(models(), EngineConfig{});
  const auto bytes = save_session(eng.new_session({}));
  auto expect_corrupt = [](std::span<const std::uint8_t> b) {
    try {
      load_session(b);
      FAIL("expected session-corrupt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSessionCorrupt);
    }
  };
  expect_corrupt(std::span(bytes).first(bytes.size() / 2));
  expect_corrupt(std::vector<std::uint8_t>{0x01, 0x02, 0x03});
  expect_corrupt(std::vector<std::uint8_t>{});
}
