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

#include "s2s/nnkit.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "s2s/error.hpp"

namespace s2s::nn {

namespace {

constexpr float kNormEps = 1e-6f;
constexpr double kRopeBase = 10000.0;

void rope_inplace(float* head, std::size_t head_dim, std::size_t pos) {
  const std::size_t half = head_dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::pow(kRopeBase, -2.0 * static_cast<double>(i) /
                                static_cast<double>(head_dim));
    const double angle = static_cast<double>(pos) * freq;
    const float c = static_cast<float>(std::cos(angle));
    const float s = static_cast<float>(std::sin(angle));
    const float a = head[i];
    const float b = head[i + half];
    head[i] = a * c - b * s;
    head[i + half] = a * s + b * c;
  }
}

void ensure_sodium() {
  static const int ready = sodium_init();
  (void)ready;
}

double unit_uniform(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

std::uint64_t name_hash(std::string_view name) {
  ensure_sodium();
  unsigned char out[8];
  crypto_generichash(out, sizeof out,
                     reinterpret_cast<const unsigned char*>(name.data()),
                     name.size(), nullptr, 0);
  std::uint64_t h = 0;
  for (unsigned char b : out) h = (h << 8) | b;
  return h;
}

void check_cache(const StackParams& stack, const KvCache& cache) {
  if (cache.layers.size() != stack.blocks.size()) {
    throw Error(ErrorCode::kDimMismatch,
                "kv cache has " + std::to_string(cache.layers.size()) +
                    " layers, stack has " +
                    std::to_string(stack.blocks.size()));
  }
  if (!cache.consistent()) {
    throw Error(ErrorCode::kDimMismatch, "kv cache layers disagree on n_past");
  }
  for (const auto& layer : cache.layers) {
    if (layer.keys.rank() != 3 || layer.keys.dim(1) != stack.cfg.n_heads ||
        layer.keys.dim(2) != stack.cfg.head_dim()) {
      throw Error(ErrorCode::kDimMismatch, "kv cache head layout mismatch");
    }
  }
}

}  // namespace

Tensor Linear::apply(const Tensor& x) const {
  if (x.cols() != in_dim()) {
    throw Error(ErrorCode::kDimMismatch,
                "linear expects " + std::to_string(in_dim()) + " inputs, got " +
                    std::to_string(x.cols()));
  }
  Tensor y = Tensor::zeros(x.rows(), out_dim());
  for (std::size_t r = 0; r < x.rows(); ++r) apply_row(x.row(r), y.row(r));
  return y;
}

void Linear::apply_row(const float* x, float* y) const {
  const std::size_t in = in_dim();
  const std::size_t out = out_dim();
  const float* w = weight.data().data();
  for (std::size_t o = 0; o < out; ++o) {
    float acc = bias.empty() ? 0.0f : bias[o];
    const float* wr = w + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

void Linear::visit(const std::string& prefix, const TensorVisitor& f) const {
  f(prefix + ".weight", weight);
  if (!bias.empty()) f(prefix + ".bias", bias);
}

Tensor RmsNorm::apply(const Tensor& x) const {
  const std::size_t d = gain.numel();
  if (x.cols() != d) {
    throw Error(ErrorCode::kDimMismatch, "rmsnorm dim mismatch");
  }
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    float* row = y.row(r);
    float ss = 0.0f;
    for (std::size_t i = 0; i < d; ++i) ss += row[i] * row[i];
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(d) + kNormEps);
    for (std::size_t i = 0; i < d; ++i) row[i] = row[i] * inv * gain[i];
  }
  return y;
}

void RmsNorm::visit(const std::string& prefix, const TensorVisitor& f) const {
  f(prefix + ".gain", gain);
}

void StackConfig::validate() const {
  if (n_layers == 0 || hidden == 0 || n_heads == 0 || ffn == 0) {
    throw Error(ErrorCode::kInvalidConfig, "all stack dims must be > 0");
  }
  if (hidden % n_heads != 0) {
    throw Error(ErrorCode::kInvalidConfig,
                std::to_string(n_heads) + " heads do not divide hidden " +
                    std::to_string(hidden));
  }
  if (head_dim() % 2 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "head_dim must be even for RoPE");
  }
}

std::size_t StackConfig::block_param_count() const {
  return 2 * hidden + 4 * hidden * hidden + 3 * hidden * ffn;
}

void BlockParams::visit(const std::string& prefix,
                        const TensorVisitor& f) const {
  attn_norm.visit(prefix + ".attn_norm", f);
  q.visit(prefix + ".q", f);
  k.visit(prefix + ".k", f);
  v.visit(prefix + ".v", f);
  o.visit(prefix + ".o", f);
  mlp_norm.visit(prefix + ".mlp_norm", f);
  gate.visit(prefix + ".gate", f);
  up.visit(prefix + ".up", f);
  down.visit(prefix + ".down", f);
}

void StackParams::visit(const std::string& prefix,
                        const TensorVisitor& f) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit(prefix + ".blocks." + std::to_string(i), f);
  }
}

KvCache KvCache::empty(const StackConfig& cfg) {
  KvCache cache;
  cache.layers.resize(cfg.n_layers);
  for (auto& layer : cache.layers) {
    layer.keys = Tensor({0, cfg.n_heads, cfg.head_dim()});
    layer.values = Tensor({0, cfg.n_heads, cfg.head_dim()});
  }
  return cache;
}

bool KvCache::consistent() const {
  return std::all_of(layers.begin(), layers.end(), [&](const LayerKv& l) {
    return l.keys.rows() == n_past && l.values.rows() == n_past &&
           l.keys.shape() == l.values.shape();
  });
}

bool AttnMask::allows(std::size_t query_pos, std::size_t key_pos) const {
  if (causal && key_pos > query_pos) return false;
  if (chunk && key_pos / *chunk > query_pos / *chunk) return false;
  return true;
}

Tensor block_forward(const Tensor& x, const StackParams& stack, KvCache& cache,
                     const AttnMask& mask) {
  const StackConfig& cfg = stack.cfg;
  if (x.rank() != 2 || x.cols() != cfg.hidden) {
    throw Error(ErrorCode::kDimMismatch,
                "block_forward expects hidden " + std::to_string(cfg.hidden));
  }
  check_cache(stack, cache);
  const std::size_t steps = x.rows();
  const std::size_t heads = cfg.n_heads;
  const std::size_t hd = cfg.head_dim();
  const std::size_t past = cache.n_past;
  const std::size_t total = past + steps;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Tensor h = x;
  std::vector<float> scores(total);
  for (std::size_t l = 0; l < stack.blocks.size(); ++l) {
    const BlockParams& blk = stack.blocks[l];
    LayerKv& kv = cache.layers[l];

    const Tensor normed = blk.attn_norm.apply(h);
    Tensor q = blk.q.apply(normed);
    Tensor k = blk.k.apply(normed);
    const Tensor v = blk.v.apply(normed);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t hh = 0; hh < heads; ++hh) {
        rope_inplace(q.row(t) + hh * hd, hd, past + t);
        rope_inplace(k.row(t) + hh * hd, hd, past + t);
      }
    }
    kv.keys.append_rows(k.data(), steps);
    kv.values.append_rows(v.data(), steps);

    Tensor attn = Tensor::zeros(steps, cfg.hidden);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t qpos = past + t;
      for (std::size_t hh = 0; hh < heads; ++hh) {
        const float* qh = q.row(t) + hh * hd;
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < total; ++j) {
          if (!mask.allows(qpos, j)) {
            scores[j] = -std::numeric_limits<float>::infinity();
            continue;
          }
          const float* kh = kv.keys.row(j) + hh * hd;
          float dot = 0.0f;
          for (std::size_t i = 0; i < hd; ++i) dot += qh[i] * kh[i];
          scores[j] = dot * scale;
          best = std::max(best, scores[j]);
        }
        float denom = 0.0f;
        for (std::size_t j = 0; j < total; ++j) {
          scores[j] = std::isinf(scores[j]) ? 0.0f : std::exp(scores[j] - best);
          denom += scores[j];
        }
        float* out = attn.row(t) + hh * hd;
        for (std::size_t j = 0; j < total; ++j) {
          if (scores[j] == 0.0f) continue;
          const float p = scores[j] / denom;
          const float* vh = kv.values.row(j) + hh * hd;
          for (std::size_t i = 0; i < hd; ++i) out[i] += p * vh[i];
        }
      }
    }
    const Tensor projected = blk.o.apply(attn);
    for (std::size_t i = 0; i < h.numel(); ++i) h[i] += projected[i];

    const Tensor normed2 = blk.mlp_norm.apply(h);
    Tensor gate = silu(blk.gate.apply(normed2));
    const Tensor up = blk.up.apply(normed2);
    for (std::size_t i = 0; i < gate.numel(); ++i) gate[i] *= up[i];
    const Tensor down = blk.down.apply(gate);
    for (std::size_t i = 0; i < h.numel(); ++i) h[i] += down[i];
  }
  cache.n_past = total;
  return h;
}

void ConvParams::visit(const std::string& prefix,
                       const TensorVisitor& f) const {
  f(prefix + ".weight", weight);
  f(prefix + ".bias", bias);
}

ConvCache ConvCache::fresh(const ConvParams& p) {
  return ConvCache{Tensor::zeros(p.kernel() - 1, p.in_channels()), 0};
}

Tensor conv1d_chunk(const Tensor& x, const ConvParams& p, ConvCache& cache) {
  const std::size_t kernel = p.kernel();
  const std::size_t in = p.in_channels();
  const std::size_t out_ch = p.out_channels();
  if (x.rank() != 2 || (x.rows() > 0 && x.cols() != in)) {
    throw Error(ErrorCode::kDimMismatch,
                "conv expects " + std::to_string(in) + " channels");
  }
  if (cache.tail.rows() != kernel - 1) {
    throw Error(ErrorCode::kDimMismatch, "conv cache tail length mismatch");
  }
  const std::size_t steps = x.rows();
  Tensor buffer = cache.tail;
  if (buffer.rank() != 2) buffer = Tensor::zeros(0, in);
  buffer.append_rows(x);
  const std::size_t len = buffer.rows();

  std::vector<float> out_data;
  std::size_t produced = 0;
  std::size_t start = cache.offset;
  const float* w = p.weight.data().data();
  while (start + kernel <= len) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      float acc = p.bias[o];
      const float* wo = w + o * in * kernel;
      for (std::size_t c = 0; c < in; ++c) {
        const float* wc = wo + c * kernel;
        for (std::size_t kk = 0; kk < kernel; ++kk) {
          acc += wc[kk] * buffer.row(start + kk)[c];
        }
      }
      out_data.push_back(acc);
    }
    ++produced;
    start += p.stride;
  }
  cache.offset = start - steps;
  cache.tail = buffer.slice_rows(len - (kernel - 1), len);
  return Tensor({produced, out_ch}, std::move(out_data));
}

std::size_t argmax(std::span<const float> logits) {
  if (logits.empty()) throw Error(ErrorCode::kInvalidK, "argmax of empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> top_k_indices(std::span<const float> logits,
                                       std::size_t k) {
  if (k == 0 || k > logits.size()) {
    throw Error(ErrorCode::kInvalidK, "k=" + std::to_string(k) +
                                          " outside [1, " +
                                          std::to_string(logits.size()) + "]");
  }
  std::vector<std::size_t> idx(logits.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

std::size_t top_k_sample(std::span<const float> logits, std::size_t k,
                         std::uint64_t seed) {
  const auto idx = top_k_indices(logits, k);
  if (k == 1) return idx[0];
  const float best = logits[idx[0]];
  std::vector<double> weights(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const float v = logits[idx[i]];
    weights[i] = std::isfinite(v) ? std::exp(static_cast<double>(v - best)) : 0.0;
    total += weights[i];
  }
  std::mt19937_64 eng(seed);
  double u = unit_uniform(eng) * total;
  for (std::size_t i = 0; i < k; ++i) {
    if (u < weights[i]) return idx[i];
    u -= weights[i];
  }
  return idx[0];
}

std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> coords) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * coords.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(base);
  for (auto c : coords) push(c);
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

Tensor ParamInit::uniform(std::string_view name,
                          std::vector<std::size_t> shape) const {
  Tensor t(std::move(shape));
  std::mt19937_64 eng(derive_seed(seed_, {name_hash(name)}));
  for (float& v : t.data()) {
    v = static_cast<float>(unit_uniform(eng) * 0.2 - 0.1);
  }
  return t;
}

Tensor ParamInit::ones(std::vector<std::size_t> shape) const {
  Tensor t(std::move(shape));
  std::fill(t.data().begin(), t.data().end(), 1.0f);
  return t;
}

Linear ParamInit::linear(std::string_view name, std::size_t in,
                         std::size_t out, bool bias) const {
  const std::string n(name);
  Linear l;
  l.weight = uniform(n + ".weight", {out, in});
  if (bias) l.bias = uniform(n + ".bias", {out});
  return l;
}

RmsNorm ParamInit::norm(std::size_t dim) const { return RmsNorm{ones({dim})}; }

ConvParams ParamInit::conv(std::string_view name, std::size_t in,
                           std::size_t out, std::size_t kernel,
                           std::size_t stride) const {
  if (kernel == 0 || stride == 0) {
    throw Error(ErrorCode::kInvalidConfig, "conv kernel and stride must be >= 1");
  }
  const std::string n(name);
  ConvParams p;
  p.weight = uniform(n + ".weight", {out, in, kernel});
  p.bias = uniform(n + ".bias", {out});
  p.stride = stride;
  return p;
}

StackParams ParamInit::stack(std::string_view name,
                             const StackConfig& cfg) const {
  cfg.validate();
  StackParams s;
  s.cfg = cfg;
  const std::size_t d = cfg.hidden;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = std::string(name) + ".blocks." + std::to_string(i);
    BlockParams b;
    b.attn_norm = norm(d);
    b.q = linear(p + ".q", d, d, false);
    b.k = linear(p + ".k", d, d, false);
    b.v = linear(p + ".v", d, d, false);
    b.o = linear(p + ".o", d, d, false);
    b.mlp_norm = norm(d);
    b.gate = linear(p + ".gate", d, cfg.ffn, false);
    b.up = linear(p + ".up", d, cfg.ffn, false);
    b.down = linear(p + ".down", cfg.ffn, d, false);
    s.blocks.push_back(std::move(b));
  }
  return s;
}

struct Fingerprint::State {
  crypto_generichash_state st;
};

Fingerprint::Fingerprint() : state_(std::make_unique<State>()) {
  ensure_sodium();
  crypto_generichash_init(&state_->st, nullptr, 0, 32);
}

Fingerprint::~Fingerprint() = default;

void Fingerprint::update(const std::string& name, const Tensor& t) {
  crypto_generichash_update(
      &state_->st, reinterpret_cast<const unsigned char*>(name.data()),
      name.size() + 1);
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    crypto_generichash_update(
        &state_->st, reinterpret_cast<const unsigned char*>(&v), sizeof v);
  }
  const auto data = t.data();
  crypto_generichash_update(&state_->st,
                            reinterpret_cast<const unsigned char*>(data.data()),
                            data.size_bytes());
}

std::string Fingerprint::hex() {
  unsigned char out[32];
  crypto_generichash_final(&state_->st, out, sizeof out);
  char buf[65];
  sodium_bin2hex(buf, sizeof buf, out, sizeof out);
  return std::string(buf);
}

std::size_t param_count(
    const std::function<void(const TensorVisitor&)>& visit) {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

StackParams init_stack(const StackConfig& cfg, std::uint64_t seed) {
  return ParamInit(seed).stack("stack", cfg);
}

std::string fingerprint(const StackParams& stack) {
  Fingerprint fp;
  stack.visit("stack", [&](const std::string& n, const Tensor& t) {
    fp.update(n, t);
  });
  return fp.hex();
}

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data()) v = v / (1.0f + std::exp(-v));
  return y;
}

}  // namespace s2s::nn
