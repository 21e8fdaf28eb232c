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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "s2s/events.hpp"

namespace s2s {

inline constexpr std::array<std::string_view, 4> kLatencySegments = {
    "interrupt_to_first_text_chunk",
    "first_text_chunk_to_decoder_prefill",
    "decoder_prefill_to_first_speech_token_chunk",
    "first_speech_token_chunk_to_first_pcm",
};

struct TurnLatency {
  int run = 0;
  int turn = 0;
  std::array<double, 4> segments{};
  double total = 0;  // always the sum of `segments`
};

struct LatencyStat {
  double avg = 0;
  double p50 = 0;
  double p90 = 0;
};

// Linear-interpolated percentile, q in [0, 100]. Empty input gives 0.
double percentile(std::vector<double> values, double q);
LatencyStat summarize(std::span<const double> values);

struct LatencyReport {
  std::vector<TurnLatency> turns;
  std::array<LatencyStat, 4> segments{};
  LatencyStat total;
  std::size_t incomplete_turns = 0;
  // Endpoint -> state output on the audio timeline, from endpoint-driven turns.
  std::vector<double> detection_lags;
  std::optional<double> chunk_ms;

  nlohmann::json to_json() const;
};

// Segments of one response: interrupt state -> first text chunk -> decoder
// prefill -> first speech-token chunk -> first PCM. Throws incomplete-turn
// when `events` lack any of these for `turn`.
TurnLatency turn_latency(std::span<const TurnEvent> events, int turn);

// Every turn that reached PCM; interrupted or silent turns are counted as
// incomplete. Throws incomplete-turn when no turn completed.
LatencyReport measure_latency(std::span<const TurnEvent> events,
                              std::optional<double> chunk_ms = std::nullopt);

// Pools several runs (e.g. repeats with different seeds).
LatencyReport merge_reports(std::span<const LatencyReport> runs);

}  // namespace s2s
