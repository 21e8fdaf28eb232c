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

// Training plans as data: which parameter groups each stage trains or
// freezes, with what loss and data pairing, checked against the groups that
// actually exist in the model. Nothing here runs an optimizer.

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/models.hpp"

namespace s2s {

enum class LossKind {
  kCtc,
  kCeText,
  kCeMultitask,              // text tokens + dialogue state
  kCeSpeechTeacherForced,
  kCodecReconstruction,
};

std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

struct StageOptions {
  bool dynamic_chunk = false;
  bool special_tokens = false;
  bool shared_nar_ar = false;
  friend bool operator==(const StageOptions&, const StageOptions&) = default;
};

struct StageConfig {
  std::string id;
  std::set<std::string> trainable;
  std::set<std::string> frozen;
  LossKind loss = LossKind::kCeText;
  std::string data;
  StageOptions options;

  nlohmann::json to_json() const;
  // Throws parse-error.
  static StageConfig from_json(const nlohmann::json& j);
  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct GroupInfo {
  std::string name;
  std::size_t params = 0;
  std::string fingerprint;
};

struct ParamRegistry {
  std::vector<GroupInfo> groups;

  static ParamRegistry from_models(const Models& m);
  const GroupInfo* find(const std::string& name) const;
  nlohmann::json to_json() const;
};

struct Violation {
  std::string code;  // e.g. llm-must-be-frozen, uncovered-group
  std::string detail;
};

// Input stages 1-3 then output stages 1-3.
std::vector<StageConfig> builtin_stages();

// Never throws; an empty result means the stage is valid.
std::vector<Violation> validate(const StageConfig& stage, const ParamRegistry& registry);

}  // namespace s2s
