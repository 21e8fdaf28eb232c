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

#include "s2s/trainplan.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "s2s/error.hpp"

namespace s2s {
namespace {

constexpr std::array<std::pair<LossKind, const char*>, 5> kLossNames = {{
    {LossKind::kCtc, "ctc"},
    {LossKind::kCeText, "ce-text"},
    {LossKind::kCeMultitask, "ce-multitask"},
    {LossKind::kCeSpeechTeacherForced, "ce-speech-token-teacher-forced"},
    {LossKind::kCodecReconstruction, "codec-reconstruction"},
}};

// The stage trains `trainable`; every other registered group is frozen.
StageConfig stage(std::string id, std::set<std::string> trainable, LossKind loss,
                  std::string data, StageOptions options = {}) {
  StageConfig s;
  s.id = std::move(id);
  for (const auto& g : Models::group_names()) {
    if (!trainable.count(g)) s.frozen.insert(g);
  }
  s.trainable = std::move(trainable);
  s.loss = loss;
  s.data = std::move(data);
  s.options = options;
  return s;
}

}  // namespace

std::string to_string(LossKind k) {
  for (const auto& [kind, name] : kLossNames) {
    if (kind == k) return name;
  }
  return "unknown";
}

LossKind loss_from_string(const std::string& s) {
  for (const auto& [kind, name] : kLossNames) {
    if (s == name) return kind;
  }
  throw Error(ErrorCode::kParseError, "unknown loss '" + s + "'");
}

nlohmann::json StageConfig::to_json() const {
  return {{"id", id},
          {"trainable", trainable},
          {"frozen", frozen},
          {"loss", to_string(loss)},
          {"data", data},
          {"options",
           {{"dynamic_chunk", options.dynamic_chunk},
            {"special_tokens", options.special_tokens},
            {"shared_nar_ar", options.shared_nar_ar}}}};
}

StageConfig StageConfig::from_json(const nlohmann::json& j) {
  try {
    StageConfig s;
    s.id = j.at("id").get<std::string>();
    s.trainable = j.at("trainable").get<std::set<std::string>>();
    s.frozen = j.at("frozen").get<std::set<std::string>>();
    s.loss = loss_from_string(j.at("loss").get<std::string>());
    s.data = j.value("data", "");
    if (const auto it = j.find("options"); it != j.end()) {
      s.options.dynamic_chunk = it->value("dynamic_chunk", false);
      s.options.special_tokens = it->value("special_tokens", false);
      s.options.shared_nar_ar = it->value("shared_nar_ar", false);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("stage config: ") + e.what());
  }
}

ParamRegistry ParamRegistry::from_models(const Models& m) {
  ParamRegistry r;
  for (const auto& g : Models::group_names()) {
    r.groups.push_back({g, m.group_param_count(g), m.group_fingerprint(g)});
  }
  return r;
}

const GroupInfo* ParamRegistry::find(const std::string& name) const {
  const auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const GroupInfo& g) { return g.name == name; });
  return it == groups.end() ? nullptr : &*it;
}

nlohmann::json ParamRegistry::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& g : groups) {
    a.push_back({{"name", g.name}, {"params", g.params}, {"fingerprint", g.fingerprint}});
  }
  return a;
}

std::vector<StageConfig> builtin_stages() {
  return {
      stage("input_1", {"encoder"}, LossKind::kCtc,
            "speech features paired with transcripts (ASR)"),
      stage("input_2", {"encoder", "adapter", "special_tokens"}, LossKind::kCeText,
            "speech paired with transcripts as backbone output labels (ASR)",
            {.dynamic_chunk = true, .special_tokens = true}),
      stage("input_3", {"prompt_embedding", "state_head"}, LossKind::kCeMultitask,
            "multi-round spoken questions with backbone-generated answers and "
            "chunk-level state labels"),
      stage("output_1", {"codec"}, LossKind::kCodecReconstruction, "speech only"),
      stage("output_2", {"nar_ar_shared", "ar_head", "pre_network"},
            LossKind::kCeSpeechTeacherForced,
            "text paired with codec speech tokens (TTS)", {.shared_nar_ar = true}),
      stage("output_3", {"nar_prefix"}, LossKind::kCeSpeechTeacherForced,
            "backbone text tokens and hidden states paired with codec tokens of "
            "the synthesized answers",
            {.shared_nar_ar = true}),
  };
}

std::vector<Violation> validate(const StageConfig& stage, const ParamRegistry& registry) {
  std::vector<Violation> out;
  for (const auto& g : stage.trainable) {
    if (stage.frozen.count(g)) out.push_back({"overlapping-group", g});
  }
  for (const auto* set : {&stage.trainable, &stage.frozen}) {
    for (const auto& g : *set) {
      if (!registry.find(g)) out.push_back({"unknown-group", g});
    }
  }
  for (const auto& g : registry.groups) {
    if (!stage.trainable.count(g.name) && !stage.frozen.count(g.name)) {
      out.push_back({"uncovered-group", g.name});
    }
  }
  if (stage.trainable.count("llm") || !stage.frozen.count("llm")) {
    out.push_back({"llm-must-be-frozen", stage.id});
  }
  if (stage.options.shared_nar_ar) {
    // NAR and AR must resolve to the single shared group, and the prefix
    // decoder must be a separate set of parameters.
    const GroupInfo* shared = registry.find("nar_ar_shared");
    const GroupInfo* prefix = registry.find("nar_prefix");
    if (!shared) {
      out.push_back({"shared-nar-ar-inconsistent", "no nar_ar_shared group"});
    }
    for (const char* split : {"nar", "ar", "nar_decoder", "ar_decoder"}) {
      if (registry.find(split) || stage.trainable.count(split) || stage.frozen.count(split)) {
        out.push_back({"shared-nar-ar-inconsistent", std::string("separate group ") + split});
      }
    }
    if (shared && prefix && shared->fingerprint == prefix->fingerprint) {
      out.push_back({"shared-nar-ar-inconsistent", "nar_prefix aliases the shared decoder"});
    }
  }
  return out;
}

}  // namespace s2s
