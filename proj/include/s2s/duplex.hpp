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

// Per-session duplex state machine. All mutable state of a session lives in
// SessionCaches; DuplexEngine holds only immutable models and configuration,
// so any engine instance built from the same seed can serve any chunk.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "s2s/events.hpp"
#include "s2s/models.hpp"

namespace s2s {

enum class Phase : std::uint8_t { kIdle = 0, kListening = 1, kGenerating = 2 };

struct StatePolicy {
  enum class Kind : std::uint8_t {
    kHead,      // argmax of the state head
    kScript,    // scripted (turn, chunk) -> state, 0 elsewhere
    kEndpoint,  // simulated endpoint detector
  };
  struct Endpoint {
    double ms = 0;
    DialogueState state = DialogueState::kInterrupt;
    friend bool operator==(const Endpoint&, const Endpoint&) = default;
  };

  Kind kind = Kind::kHead;
  std::map<std::pair<int, std::size_t>, DialogueState> script;
  // Ascending. A turn uses the first endpoint at or after its first frame.
  std::vector<Endpoint> endpoints;

  friend bool operator==(const StatePolicy&, const StatePolicy&) = default;
};

struct SessionPolicy {
  StatePolicy states;
  // turn -> response tokens forced through the backbone.
  std::map<int, std::vector<int>> forced_text;
  std::uint64_t seed = 0;

  friend bool operator==(const SessionPolicy&, const SessionPolicy&) = default;
};

struct EngineConfig {
  std::size_t speech_chunk = 40;
  std::size_t topk = 1;
  std::size_t max_text_tokens = 32;
  // AR length cap per text token.
  std::size_t speech_tokens_per_text_token = 25;
  // Simulated compute throughput that drives the session clock.
  double sim_macs_per_ms = 1e5;
  float vad_threshold = 0.0f;
  int vad_activation_frames = 3;
  // The dialogue context is dropped once it grows past this many positions.
  std::size_t max_context = 4096;

  void validate() const;
};

// In-flight response of one turn.
struct Generation {
  bool active = false;
  int turn = -1;
  TextGenerator text;
  SentenceSplitter splitter;
  // Hidden states of the tokens buffered in the splitter.
  std::vector<std::vector<float>> pending_hidden;
  bool text_done = false;
  std::optional<ArGenerator> ar;
  std::size_t text_chunks = 0;
  std::size_t speech_chunks = 0;
  std::size_t text_tokens = 0;
  std::size_t speech_tokens = 0;
  std::size_t samples = 0;
};

struct SessionCaches {
  SessionPolicy policy;
  double now_ms = 0;
  StreamingFrontend frontend;
  VadState vad;
  // Idle-time feature frames that may precede a trigger (activation - 1).
  Tensor preroll;
  Phase phase = Phase::kIdle;

  // Listening turn.
  int turn = -1;
  std::size_t turn_first_frame = 0;
  std::size_t turn_predictions = 0;
  EncoderCaches encoder;
  // Dialogue context forked at the trigger; user speech is prefilled here and
  // committed to `backbone` only when the turn ends in state 1.
  nn::KvCache listen;

  // Dialogue context shared across turns.
  nn::KvCache backbone;
  nn::KvCache decoder_prefix;
  TokenFifo fifo;
  CodecState codec;
  Generation gen;
};

class DuplexEngine {
 public:
  DuplexEngine(const Models& models, EngineConfig cfg);

  SessionCaches new_session(SessionPolicy policy) const;

  // Frames the chunk, runs VAD/encoder/backbone, acts on every state.
  // Throws session-corrupt.
  std::vector<TurnEvent> on_audio_chunk(std::span<const std::int16_t> pcm,
                                        SessionCaches& s) const;
  // One unit of response work: a text chunk with decoder prefill, one AR
  // step (plus a codec chunk when the FIFO yields one), or the turn close.
  std::vector<TurnEvent> step_generation(SessionCaches& s) const;
  // Runs the in-flight response to completion.
  std::vector<TurnEvent> run_generation(SessionCaches& s) const;

  // Streaming driver: lets generation catch up with the audio clock, then
  // consumes the packet. Output depends only on the packet sequence.
  std::vector<TurnEvent> process_packet(std::span<const std::int16_t> pcm,
                                        SessionCaches& s) const;
  // End of input: completes any response.
  std::vector<TurnEvent> finish(SessionCaches& s) const;

  // Throws session-corrupt when caches do not fit these models.
  void check_session(const SessionCaches& s) const;

  const Models& models() const { return models_; }
  const EngineConfig& config() const { return cfg_; }

 private:
  struct Costs {
    double encoder_frame = 0;
    double backbone_pos = 0;
    double state_head = 0;
    double text_step = 0;
    double prefix_pos = 0;
    double nar_pos = 0;
    double ar_step = 0;
    double codec_token = 0;
  };

  void charge(SessionCaches& s, double macs) const;
  void start_turn(SessionCaches& s, std::size_t frame,
                  std::vector<TurnEvent>& out) const;
  // Returns true when the turn ended (state 1 or 2).
  bool forward_frames(SessionCaches& s, const Tensor& rows,
                      std::size_t first_frame,
                      std::vector<TurnEvent>& out) const;
  DialogueState decide(const SessionCaches& s, const StatePrediction& pred,
                       double audio_ms, bool& forced,
                       std::optional<double>& endpoint) const;
  void start_generation(SessionCaches& s, int turn) const;
  void interrupt(SessionCaches& s, std::vector<TurnEvent>& out) const;
  void emit_speech(SessionCaches& s, const std::vector<int>& tokens,
                   double ready_ms, std::vector<TurnEvent>& out) const;

  const Models& models_;
  EngineConfig cfg_;
  Costs costs_;
};

}  // namespace s2s
