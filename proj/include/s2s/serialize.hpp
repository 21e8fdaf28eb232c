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

// Binary (CBOR) snapshots of session state, so a session can be parked,
// moved between processes, or compared byte for byte.

#include <cstdint>
#include <span>
#include <vector>

#include "s2s/duplex.hpp"

namespace s2s {

std::vector<std::uint8_t> save_session(const SessionCaches& s);
// Throws session-corrupt on malformed input.
SessionCaches load_session(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> save_encoder_caches(const EncoderCaches& c);
EncoderCaches load_encoder_caches(std::span<const std::uint8_t> bytes);

}  // namespace s2s
