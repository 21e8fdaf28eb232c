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

#include "s2s/events.hpp"


#include "s2s/audio_io.hpp"
#include "s2s/base64.hpp"

namespace s2s {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::string_view TurnEvent::type() const {
  return std::visit(
      Overloaded{
          [](const VadTriggered&) { return std::string_view("vad"); },
          [](const StateChanged&) { return std::string_view("state"); },
          [](const TextChunkEvent&) { return std::string_view("text"); },
          [](const SpeechChunkEvent&) { return std::string_view("pcm"); },
          [](const GenerationInterrupted&) { return std::string_view("interrupted"); },
          [](const TurnEnded&) { return std::string_view("turn_end"); },
      },
      body);
}

nlohmann::json event_to_json(const TurnEvent& ev, bool with_pcm) {
  nlohmann::json j;
  j["type"] = ev.type();
  j["turn"] = ev.turn;
  j["at_ms"] = ev.at_ms;
  std::visit(
      Overloaded{
          [&](const VadTriggered& e) {
            j["frame"] = e.frame;
            j["audio_ms"] = e.audio_ms;
          },
          [&](const StateChanged& e) {
            j["state"] = static_cast<int>(e.state);
            j["chunk"] = e.chunk;
            j["audio_ms"] = e.audio_ms;
            j["logits"] = e.logits;
            j["forced"] = e.forced;
            if (e.endpoint_ms) j["endpoint_ms"] = *e.endpoint_ms;
          },
          [&](const TextChunkEvent& e) {
            j["index"] = e.index;
            j["tokens"] = e.tokens;
            j["text"] = e.text;
            j["decoder_prefill_ms"] = e.decoder_prefill_ms;
          },
          [&](const SpeechChunkEvent& e) {
            j["index"] = e.index;
            j["n_tokens"] = e.n_tokens;
            j["samples"] = e.pcm.size();
            j["tokens_ready_ms"] = e.tokens_ready_ms;
            if (with_pcm) {
              j["pcm"] = base64_encode(encode_s16le(e.pcm));
            }
          },
          [&](const GenerationInterrupted& e) {
            j["speech_tokens"] = e.speech_tokens;
            j["dropped_tokens"] = e.dropped_tokens;
          },
          [&](const TurnEnded& e) {
            j["text_tokens"] = e.text_tokens;
            j["speech_tokens"] = e.speech_tokens;
            j["samples"] = e.samples;
          },
      },
      ev.body);
  return j;
}

std::string dump_line(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace s2s
