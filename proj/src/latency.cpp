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

#include "s2s/latency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "s2s/error.hpp"

namespace s2s {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LatencyStat summarize(std::span<const double> values) {
  LatencyStat s;
  if (values.empty()) return s;
  s.avg = std::accumulate(values.begin(), values.end(), 0.0) /
          static_cast<double>(values.size());
  const std::vector<double> v(values.begin(), values.end());
  s.p50 = percentile(v, 50.0);
  s.p90 = percentile(v, 90.0);
  return s;
}

TurnLatency turn_latency(std::span<const TurnEvent> events, int turn) {
  std::optional<double> interrupt, text, prefill, tokens, pcm;
  for (const auto& ev : events) {
    if (ev.turn != turn) continue;
    if (const auto* st = ev.as<StateChanged>()) {
      if (st->state == DialogueState::kInterrupt && !interrupt) interrupt = ev.at_ms;
    } else if (const auto* t = ev.as<TextChunkEvent>()) {
      if (t->index == 0 && interrupt) {
        text = ev.at_ms;
        prefill = t->decoder_prefill_ms;
      }
    } else if (const auto* p = ev.as<SpeechChunkEvent>()) {
      if (p->index == 0 && prefill) {
        tokens = p->tokens_ready_ms;
        pcm = ev.at_ms;
      }
    }
  }
  if (!pcm) {
    throw Error(ErrorCode::kIncompleteTurn,
                "turn " + std::to_string(turn) + " never reached its first PCM chunk");
  }
  TurnLatency t;
  t.turn = turn;
  t.segments = {*text - *interrupt, *prefill - *text, *tokens - *prefill, *pcm - *tokens};
  t.total = std::accumulate(t.segments.begin(), t.segments.end(), 0.0);
  return t;
}

namespace {

void finalize(LatencyReport& r) {
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> v;
    for (const auto& t : r.turns) v.push_back(t.segments[i]);
    r.segments[i] = summarize(v);
  }
  std::vector<double> totals;
  for (const auto& t : r.turns) totals.push_back(t.total);
  r.total = summarize(totals);
}

}  // namespace

LatencyReport measure_latency(std::span<const TurnEvent> events,
                              std::optional<double> chunk_ms) {
  LatencyReport r;
  r.chunk_ms = chunk_ms;
  std::set<int> generating;
  for (const auto& ev : events) {
    const auto* st = ev.as<StateChanged>();
    if (!st || st->state == DialogueState::kContinue) continue;
    if (st->state == DialogueState::kInterrupt) generating.insert(ev.turn);
    if (st->endpoint_ms) r.detection_lags.push_back(st->audio_ms - *st->endpoint_ms);
  }
  for (const int turn : generating) {
    try {
      r.turns.push_back(turn_latency(events, turn));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIncompleteTurn) throw;
      ++r.incomplete_turns;
    }
  }
  if (r.turns.empty()) {
    throw Error(ErrorCode::kIncompleteTurn, "no turn reached its first PCM chunk");
  }
  finalize(r);
  return r;
}

LatencyReport merge_reports(std::span<const LatencyReport> runs) {
  LatencyReport r;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (TurnLatency t : runs[i].turns) {
      t.run = static_cast<int>(i);
      r.turns.push_back(t);
    }
    r.incomplete_turns += runs[i].incomplete_turns;
    r.detection_lags.insert(r.detection_lags.end(), runs[i].detection_lags.begin(),
                            runs[i].detection_lags.end());
    if (!r.chunk_ms) r.chunk_ms = runs[i].chunk_ms;
  }
  if (r.turns.empty()) {
    throw Error(ErrorCode::kIncompleteTurn, "no turn reached its first PCM chunk");
  }
  finalize(r);
  return r;
}

nlohmann::json LatencyReport::to_json() const {
  using nlohmann::json;
  auto stat = [](const LatencyStat& s) {
    return json{{"avg", s.avg}, {"p50", s.p50}, {"p90", s.p90}};
  };
  json segs = json::array();
  for (std::size_t i = 0; i < 4; ++i) {
    json s = stat(segments[i]);
    s["name"] = kLatencySegments[i];
    segs.push_back(std::move(s));
  }
  json per_turn = json::array();
  for (const auto& t : turns) {
    per_turn.push_back({{"run", t.run},
                        {"turn", t.turn},
                        {"segments", t.segments},
                        {"total", t.total}});
  }
  json lag = nullptr;
  if (!detection_lags.empty()) {
    const auto [lo, hi] = std::minmax_element(detection_lags.begin(), detection_lags.end());
    lag = stat(summarize(detection_lags));
    lag["count"] = detection_lags.size();
    lag["min"] = *lo;
    lag["max"] = *hi;
    if (chunk_ms) {
      lag["chunk_ms"] = *chunk_ms;
      lag["within_one_to_two_chunks"] = *lo >= *chunk_ms && *hi <= 2.0 * *chunk_ms;
    }
  }
  return json{{"unit", "ms"},
              {"clock", "simulation"},
              {"segments", std::move(segs)},
              {"total", stat(total)},
              {"turns", turns.size()},
              {"incomplete_turns", incomplete_turns},
              {"per_turn", std::move(per_turn)},
              {"detection_lag", std::move(lag)}};
}

}  // namespace s2s
