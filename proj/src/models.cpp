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

#include "s2s/models.hpp"

#include "s2s/error.hpp"

namespace s2s {

void ModelConfig::validate() const {
  encoder.validate();
  backbone.validate();
  decoder.validate();
  codec.validate();
  if (encoder.backbone_dim != backbone.hidden ||
      decoder.backbone_dim != backbone.hidden) {
    throw Error(ErrorCode::kInvalidConfig,
                "encoder and decoder must target the backbone width");
  }
}

Models Models::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const nn::ParamInit init(seed);
  Models m;
  m.cfg = cfg;
  m.seed = seed;
  m.encoder = EncoderParams::init(cfg.encoder, init);
  m.backbone = BackboneParams::init(cfg.backbone, init);
  m.decoder = DecoderStackParams::init(cfg.decoder, init);
  m.codec = CodecParams::init(cfg.codec, init);
  return m;
}

const std::vector<std::string>& Models::group_names() {
  static const std::vector<std::string> names = {
      "encoder",     "adapter",       "prompt_embedding", "special_tokens",
      "state_head",  "llm",           "llm_embedding",    "nar_prefix",
      "nar_ar_shared", "pre_network", "ar_head",          "codec"};
  return names;
}

void Models::visit_group(std::string_view group,
                         const nn::TensorVisitor& f) const {
  if (group == "encoder") return encoder.visit_encoder(f);
  if (group == "adapter") return encoder.visit_adapter(f);
  if (group == "prompt_embedding") return backbone.visit_prompt(f);
  if (group == "special_tokens") return backbone.visit_special_tokens(f);
  if (group == "state_head") return backbone.visit_state_head(f);
  if (group == "llm") return backbone.visit_llm(f);
  if (group == "llm_embedding") return backbone.visit_embedding(f);
  if (group == "nar_prefix") return decoder.visit_prefix(f);
  if (group == "nar_ar_shared") return decoder.visit_shared(f);
  if (group == "pre_network") return decoder.visit_pre_network(f);
  if (group == "ar_head") return decoder.visit_ar_head(f);
  if (group == "codec") return codec.visit(f);
  throw Error(ErrorCode::kInvalidConfig,
              "unknown parameter group '" + std::string(group) + "'");
}

void Models::visit_all(const nn::TensorVisitor& f) const {
  for (const auto& g : group_names()) visit_group(g, f);
}

std::string Models::fingerprint() const {
  nn::Fingerprint fp;
  visit_all([&](const std::string& n, const Tensor& t) { fp.update(n, t); });
  return fp.hex();
}

std::string Models::group_fingerprint(std::string_view group) const {
  nn::Fingerprint fp;
  visit_group(group, [&](const std::string& n, const Tensor& t) { fp.update(n, t); });
  return fp.hex();
}

std::size_t Models::group_param_count(std::string_view group) const {
  return nn::param_count(
      [&](const nn::TensorVisitor& f) { visit_group(group, f); });
}

std::string backbone_fingerprint(const BackboneParams& params) {
  nn::Fingerprint fp;
  auto upd = [&](const std::string& n, const Tensor& t) { fp.update(n, t); };
  params.visit_llm(upd);
  params.visit_embedding(upd);
  return fp.hex();
}

void assert_frozen(const BackboneParams& params, const std::string& before) {
  const std::string now = backbone_fingerprint(params);
  if (now != before) {
    throw Error(ErrorCode::kFrozenViolated,
                "backbone fingerprint changed: " + before.substr(0, 12) +
                    " -> " + now.substr(0, 12));
  }
}

}  // namespace s2s
