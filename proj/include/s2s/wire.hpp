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

// Line-delimited JSON wire format. Client messages: hello, audio, bye.
// Server messages: vad, state, text, pcm, interrupted, turn_end, error. Every
// message carries "session" and a per-direction "seq"; keys are sorted and
// audio travels as base64 s16le.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/duplex.hpp"
#include "s2s/error.hpp"

namespace s2s {

std::string encode_pcm(std::span<const std::int16_t> pcm);
// Throws parse-error.
std::vector<std::int16_t> decode_pcm(std::string_view b64);

// Hello fields: "seed", "states" (head | script | endpoint), "script"
// [[turn, chunk, state], ...], "endpoints" [[ms, state], ...] and
// "force_text" [[turn, "text"], ...]. Throws parse-error.
SessionPolicy policy_from_json(const nlohmann::json& hello, std::uint64_t default_seed);
nlohmann::json policy_to_json(const SessionPolicy& p);

nlohmann::json make_hello(const std::string& session, std::uint64_t seq,
                          const SessionPolicy& policy);
nlohmann::json make_audio(const std::string& session, std::uint64_t seq,
                          std::span<const std::int16_t> pcm);
nlohmann::json make_bye(const std::string& session, std::uint64_t seq);
nlohmann::json make_error(const std::string& session, std::uint64_t seq,
                          ErrorCode code, const std::string& message);

// Throws parse-error for invalid JSON or a message without type/session/seq.
nlohmann::json parse_message(const std::string& line);

}  // namespace s2s
