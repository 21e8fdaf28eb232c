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

#include "s2s/backbone.hpp"

#include <array>
#include <limits>
#include <string_view>

#include "s2s/error.hpp"

namespace s2s {

namespace {

constexpr std::array<std::string_view, 8> kTerminators = {
    ".", "!", "?", ";", "\xE3\x80\x82", "\xEF\xBC\x81", "\xEF\xBC\x9F",
    "\xEF\xBC\x9B"};

bool ends_sentence(const std::string& text) {
  for (auto t : kTerminators) {
    if (text.size() >= t.size() &&
        text.compare(text.size() - t.size(), t.size(), t) == 0) {
      return true;
    }
  }
  return false;
}

}  // namespace

void BackboneConfig::validate() const {
  stack().validate();
  if (vocab < static_cast<std::size_t>(kAssistant) + 1) {
    throw Error(ErrorCode::kInvalidConfig,
                "vocab must hold 256 byte tokens and 4 specials");
  }
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg,
                                    const nn::ParamInit& init) {
  cfg.validate();
  BackboneParams p;
  p.cfg = cfg;
  p.embedding = init.uniform("llm.embedding", {cfg.vocab, cfg.hidden});
  p.stack = init.stack("llm", cfg.stack());
  p.final_norm = init.norm(cfg.hidden);
  p.lm_head = init.linear("llm.lm_head", cfg.hidden, cfg.vocab, false);
  p.prompt = init.uniform("prompt_embedding", {cfg.prompt_len, cfg.hidden});
  p.special_tokens =
      init.uniform("special_tokens", {cfg.n_special_tokens, cfg.hidden});
  p.state_head = init.linear("state_head", cfg.hidden, 3, true);
  return p;
}

void BackboneParams::visit_llm(const nn::TensorVisitor& f) const {
  stack.visit("llm", f);
  final_norm.visit("llm.final_norm", f);
  lm_head.visit("llm.lm_head", f);
}

void BackboneParams::visit_embedding(const nn::TensorVisitor& f) const {
  f("llm.embedding", embedding);
}

void BackboneParams::visit_prompt(const nn::TensorVisitor& f) const {
  f("prompt_embedding", prompt);
}

void BackboneParams::visit_special_tokens(const nn::TensorVisitor& f) const {
  f("special_tokens", special_tokens);
}

void BackboneParams::visit_state_head(const nn::TensorVisitor& f) const {
  state_head.visit("state_head", f);
}

Tensor BackboneParams::embed(std::span<const int> tokens) const {
  Tensor out = Tensor::zeros(tokens.size(), cfg.hidden);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int id = tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab) {
      throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(id));
    }
    std::copy_n(embedding.row(static_cast<std::size_t>(id)), cfg.hidden,
                out.row(i));
  }
  return out;
}

DialogueState state_from_logits(std::span<const float> logits) {
  return static_cast<DialogueState>(nn::argmax(logits));
}

StatePrediction prefill_speech_chunk(const EmbeddingChunk& emb,
                                     const BackboneParams& params,
                                     nn::KvCache& cache, bool first_chunk) {
  if (emb.size() == 0) {
    throw Error(ErrorCode::kDimMismatch, "empty embedding chunk");
  }
  if (emb.embeddings.cols() != params.cfg.hidden) {
    throw Error(ErrorCode::kDimMismatch,
                "embedding dim " + std::to_string(emb.embeddings.cols()) +
                    " != backbone hidden " + std::to_string(params.cfg.hidden));
  }
  Tensor x = Tensor::zeros(0, params.cfg.hidden);
  if (first_chunk) x.append_rows(params.prompt);
  x.append_rows(emb.embeddings);

  const Tensor h = nn::block_forward(x, params.stack, cache,
                                     nn::AttnMask::causal_only());
  const Tensor last = params.final_norm.apply(h.slice_rows(h.rows() - 1, h.rows()));
  StatePrediction pred;
  params.state_head.apply_row(last.row(0), pred.logits.data());
  pred.state = state_from_logits(pred.logits);
  pred.at_frame = emb.last_frame_index;
  return pred;
}

std::optional<TextToken> TextGenerator::next(const BackboneParams& params,
                                             nn::KvCache& cache) {
  if (done_) return std::nullopt;
  if (cache.n_past == 0) {
    throw Error(ErrorCode::kEmptyCache, "text generation needs a prefilled turn");
  }
  if (emitted_ >= max_tokens_) {
    done_ = true;
    return std::nullopt;
  }
  const int feed[1] = {pending_};
  const Tensor x = params.embed(feed);
  const Tensor h = params.final_norm.apply(
      nn::block_forward(x, params.stack, cache, nn::AttnMask::causal_only()));
  std::vector<float> logits(params.cfg.vocab);
  params.lm_head.apply_row(h.row(0), logits.data());
  constexpr float kMasked = -std::numeric_limits<float>::infinity();
  logits[kBos] = kMasked;
  logits[kUser] = kMasked;
  logits[kAssistant] = kMasked;

  int token = kEos;
  switch (sampler_.kind) {
    case TextSampler::Kind::kGreedy:
      token = static_cast<int>(nn::argmax(logits));
      break;
    case TextSampler::Kind::kTopK:
      token = static_cast<int>(nn::top_k_sample(
          logits, sampler_.k, nn::derive_seed(sampler_.seed, {emitted_})));
      break;
    case TextSampler::Kind::kScript:
      token = emitted_ < sampler_.script.size() ? sampler_.script[emitted_] : kEos;
      break;
  }
  if (token == kEos) {
    done_ = true;
    return std::nullopt;
  }
  pending_ = token;
  ++emitted_;
  return TextToken{token, std::vector<float>(h.row(0), h.row(0) + h.cols())};
}

std::vector<TextToken> generate_text(const BackboneParams& params,
                                     nn::KvCache& cache, std::size_t max_tokens,
                                     const TextSampler& sampler) {
  std::vector<TextToken> out;
  if (max_tokens == 0) return out;
  TextGenerator gen(sampler, max_tokens);
  while (auto tok = gen.next(params, cache)) out.push_back(std::move(*tok));
  return out;
}

std::string decode_tokens(std::span<const int> tokens) {
  std::string text;
  for (int t : tokens) {
    if (t >= 0 && t < kTextVocab) text.push_back(static_cast<char>(t));
  }
  return text;
}

std::vector<int> encode_text(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(static_cast<unsigned char>(c));
  return out;
}

std::optional<std::vector<int>> SentenceSplitter::push(int token) {
  current_.push_back(token);
  if (!ends_sentence(decode_tokens(current_))) return std::nullopt;
  return std::exchange(current_, {});
}

std::optional<std::vector<int>> SentenceSplitter::flush() {
  if (current_.empty()) return std::nullopt;
  return std::exchange(current_, {});
}

std::vector<std::vector<int>> sentence_split(std::span<const int> tokens) {
  SentenceSplitter splitter;
  std::vector<std::vector<int>> chunks;
  for (int t : tokens) {
    if (auto c = splitter.push(t)) chunks.push_back(std::move(*c));
  }
  if (auto c = splitter.flush()) chunks.push_back(std::move(*c));
  return chunks;
}

}  // namespace s2s
