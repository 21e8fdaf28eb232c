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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "s2s/backbone.hpp"
#include "s2s/encoder.hpp"
#include "s2s/speechgen.hpp"

namespace s2s {

struct ModelConfig {
  EncoderConfig encoder;
  BackboneConfig backbone;
  DecoderConfig decoder;
  CodecConfig codec;

  // Also checks that the encoder, backbone and decoders agree on widths.
  void validate() const;
};

// Every parameter of the pipeline, built deterministically from (config, seed)
// and never mutated by inference.
struct Models {
  ModelConfig cfg;
  std::uint64_t seed = 0;
  EncoderParams encoder;
  BackboneParams backbone;
  DecoderStackParams decoder;
  CodecParams codec;

  static Models build(const ModelConfig& cfg, std::uint64_t seed);

  // Parameter groups in registry order.
  static const std::vector<std::string>& group_names();
  // Throws invalid-config for an unknown group.
  void visit_group(std::string_view group, const nn::TensorVisitor& f) const;
  void visit_all(const nn::TensorVisitor& f) const;

  std::string fingerprint() const;
  std::string group_fingerprint(std::string_view group) const;
  std::size_t group_param_count(std::string_view group) const;
};

// Hash of the language model proper: blocks, final norm, head and embedding.
std::string backbone_fingerprint(const BackboneParams& params);

// Throws frozen-violated when the backbone no longer hashes to `before`.
void assert_frozen(const BackboneParams& params, const std::string& before);

}  // namespace s2s
