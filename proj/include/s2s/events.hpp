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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "s2s/backbone.hpp"

namespace s2s {

struct VadTriggered {
  std::size_t frame = 0;  // global 100 Hz frame index of the trigger
  double audio_ms = 0;
};

struct StateChanged {
  DialogueState state = DialogueState::kContinue;
  std::size_t chunk = 0;  // prediction index within the turn
  double audio_ms = 0;    // end of the last audio frame consumed
  std::array<float, 3> logits{};
  bool forced = false;
  std::optional<double> endpoint_ms;
};

struct TextChunkEvent {
  std::size_t index = 0;
  std::vector<int> tokens;
  std::string text;
  double decoder_prefill_ms = 0;  // when the speech decoders were primed
};

struct SpeechChunkEvent {
  std::size_t index = 0;
  std::size_t n_tokens = 0;
  std::vector<std::int16_t> pcm;  // 24 kHz
  double tokens_ready_ms = 0;     // when the token chunk left the FIFO
};

struct GenerationInterrupted {
  std::size_t speech_tokens = 0;  // produced before the abort
  std::size_t dropped_tokens = 0;  // flushed from the FIFO
};

struct TurnEnded {
  std::size_t text_tokens = 0;
  std::size_t speech_tokens = 0;
  std::size_t samples = 0;
};

using EventBody = std::variant<VadTriggered, StateChanged, TextChunkEvent,
                               SpeechChunkEvent, GenerationInterrupted, TurnEnded>;

struct TurnEvent {
  int turn = 0;
  double at_ms = 0;  // simulation clock
  EventBody body;

  // Wire name: vad, state, text, pcm, interrupted, turn_end.
  std::string_view type() const;
  template <typename T>
  const T* as() const {
    return std::get_if<T>(&body);
  }
};

// Event as a JSON object. With `with_pcm` the 24 kHz samples are included as
// base64 s16le under "pcm".
nlohmann::json event_to_json(const TurnEvent& ev, bool with_pcm);

// Compact single-line dump with sorted keys. Text decoded from arbitrary byte
// tokens may not be UTF-8; invalid sequences become U+FFFD.
std::string dump_line(const nlohmann::json& j);

}  // namespace s2s
