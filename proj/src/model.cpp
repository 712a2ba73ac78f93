#include "genex/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "genex/errors.hpp"

namespace genex {

namespace {

std::atomic<std::size_t> g_fallbacks{0};

const Tensor& param(const ModelParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw UsageError("missing model parameter '" + name + "'");
  return it->second;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a nonnegative integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void add_attention_shapes(std::map<std::string, Shape>& s, const std::string& prefix, std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) s[prefix + "." + w] = {d, d};
}

void add_norm_shapes(std::map<std::string, Shape>& s, const std::string& prefix, std::size_t d) {
  s[prefix + ".gain"] = {d};
  s[prefix + ".bias"] = {d};
}

void add_ffn_shapes(std::map<std::string, Shape>& s, const std::string& prefix, std::size_t d,
                    std::size_t f) {
  s[prefix + ".w1"] = {d, f};
  s[prefix + ".b1"] = {f};
  s[prefix + ".w2"] = {f, d};
  s[prefix + ".b2"] = {d};
}

void add_encoder_layer_shapes(std::map<std::string, Shape>& s, const std::string& prefix,
                              const ModelConfig& cfg) {
  add_attention_shapes(s, prefix + ".attn", cfg.d_model);
  add_norm_shapes(s, prefix + ".ln1", cfg.d_model);
  add_ffn_shapes(s, prefix + ".ffn", cfg.d_model, cfg.ffn_dim);
  add_norm_shapes(s, prefix + ".ln2", cfg.d_model);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Tensor norm(const Tensor& x, const std::string& prefix, const ModelParams& p, const ModelConfig& cfg) {
  return layer_norm(x, param(p, prefix + ".gain"), param(p, prefix + ".bias"), cfg.layer_norm_eps);
}

Tensor drop(const Tensor& x, const ModelConfig& cfg, ForwardContext& ctx) {
  if (!ctx.train || cfg.dropout == 0.0) return x;
  if (!ctx.rng) throw UsageError("training forward needs an RNG for dropout");
  return dropout(x, cfg.dropout, true, *ctx.rng);
}

// Multi-head scaled dot-product attention of xq over xkv.
Tensor attention(const Tensor& xq, const Tensor& xkv, const Mask& mask, const std::string& prefix,
                 const ModelParams& p, const ModelConfig& cfg, ForwardContext& ctx) {
  const Tensor q = matmul(xq, param(p, prefix + ".wq"));
  const Tensor k = matmul(xkv, param(p, prefix + ".wk"));
  const Tensor v = matmul(xkv, param(p, prefix + ".wv"));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t off = h * cfg.head_dim;
    Tensor qh = cfg.n_heads == 1 ? q : slice_cols(q, off, cfg.head_dim);
    Tensor kh = cfg.n_heads == 1 ? k : slice_cols(k, off, cfg.head_dim);
    Tensor vh = cfg.n_heads == 1 ? v : slice_cols(v, off, cfg.head_dim);
    Tensor w = masked_softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), mask);
    if (ctx.trace) ctx.trace->weights.emplace_back(prefix + ".h" + std::to_string(h), w.detach());
    heads.push_back(matmul(w, vh));
  }
  Tensor joined = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return matmul(joined, param(p, prefix + ".wo"));
}

Tensor feed_forward(const Tensor& x, const std::string& prefix, const ModelParams& p) {
  Tensor h = relu(add_bias(matmul(x, param(p, prefix + ".w1")), param(p, prefix + ".b1")));
  return add_bias(matmul(h, param(p, prefix + ".w2")), param(p, prefix + ".b2"));
}

// Post-norm residual block: norm(x + dropout(sub)).
Tensor residual(const Tensor& x, const Tensor& sub, const std::string& norm_prefix, const ModelParams& p,
                const ModelConfig& cfg, ForwardContext& ctx) {
  return norm(add(x, drop(sub, cfg, ctx)), norm_prefix, p, cfg);
}

Tensor encoder_stack(Tensor x, const std::string& stack, std::size_t layers, const ModelParams& p,
                     const ModelConfig& cfg, ForwardContext& ctx) {
  const Mask all(x.rows(), x.rows(), true);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string pre = stack + "." + std::to_string(l);
    x = residual(x, attention(x, x, all, pre + ".attn", p, cfg, ctx), pre + ".ln1", p, cfg, ctx);
    x = residual(x, feed_forward(x, pre + ".ffn", p), pre + ".ln2", p, cfg, ctx);
  }
  return x;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kOrig: return "ORIG";
    case Variant::kSegQToks: return "SEG_Q_TOKS";
    case Variant::kSepQDoc: return "SEP_Q_DOC";
    case Variant::kGenex: return "GENEX";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : {Variant::kOrig, Variant::kSegQToks, Variant::kSepQDoc, Variant::kGenex}) {
    if (to_string(v) == text) return v;
  }
  throw UsageError("unknown variant '" + text + "' (ORIG, SEG_Q_TOKS, SEP_Q_DOC, GENEX)");
}

SegmentScheme scheme_for(Variant v) {
  switch (v) {
    case Variant::kOrig: return SegmentScheme::kPart;
    case Variant::kSegQToks: return SegmentScheme::kOccur;
    default: return SegmentScheme::kSplit;
  }
}

bool uses_query_attention(Variant v) { return v == Variant::kSepQDoc || v == Variant::kGenex; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid model config: " + what); };
  if (d_model == 0 || n_heads == 0 || head_dim == 0) fail("d_model, n_heads and head_dim must be positive");
  if (n_heads * head_dim != d_model) fail("n_heads * head_dim must equal d_model");
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must lie in [0, 1)");
  if (max_input_len < 1 || max_target_len < 1) fail("max lengths must be at least 1");
  if (vocab_size <= kNumSpecials) fail("vocab_size must exceed the special tokens");
  if (n_layers_enc1 < 1 || n_layers_dec < 1) fail("encoder and decoder need at least one layer");
  if (uses_query_attention(variant) && n_layers_qattn < 1) fail("query attention needs at least one layer");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

const std::set<std::string>& model_config_keys() {
  static const std::set<std::string> keys = {
      "variant",       "d_model",        "n_heads",         "head_dim",   "n_layers_enc1",
      "n_layers_qattn", "n_layers_dec",  "ffn_dim",         "dropout",    "max_input_len",
      "max_target_len", "vocab_size",    "label_smoothing", "layer_norm_eps"};
  return keys;
}

ConfigMap ModelConfig::to_map() const {
  return {{"variant", to_string(variant)},
          {"d_model", std::to_string(d_model)},
          {"n_heads", std::to_string(n_heads)},
          {"head_dim", std::to_string(head_dim)},
          {"n_layers_enc1", std::to_string(n_layers_enc1)},
          {"n_layers_qattn", std::to_string(n_layers_qattn)},
          {"n_layers_dec", std::to_string(n_layers_dec)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"dropout", format_double(dropout)},
          {"max_input_len", std::to_string(max_input_len)},
          {"max_target_len", std::to_string(max_target_len)},
          {"vocab_size", std::to_string(vocab_size)},
          {"label_smoothing", format_double(label_smoothing)},
          {"layer_norm_eps", format_double(layer_norm_eps)}};
}

std::set<std::string> apply_model_config(const ConfigMap& map, ModelConfig& cfg) {
  std::set<std::string> used;
  for (const auto& [key, value] : map) {
    if (!model_config_keys().count(key)) continue;
    used.insert(key);
    if (key == "variant") cfg.variant = parse_variant(value);
    else if (key == "d_model") cfg.d_model = parse_size(key, value);
    else if (key == "n_heads") cfg.n_heads = parse_size(key, value);
    else if (key == "head_dim") cfg.head_dim = parse_size(key, value);
    else if (key == "n_layers_enc1") cfg.n_layers_enc1 = parse_size(key, value);
    else if (key == "n_layers_qattn") cfg.n_layers_qattn = parse_size(key, value);
    else if (key == "n_layers_dec") cfg.n_layers_dec = parse_size(key, value);
    else if (key == "ffn_dim") cfg.ffn_dim = parse_size(key, value);
    else if (key == "dropout") cfg.dropout = parse_double(key, value);
    else if (key == "max_input_len") cfg.max_input_len = parse_size(key, value);
    else if (key == "max_target_len") cfg.max_target_len = parse_size(key, value);
    else if (key == "vocab_size") cfg.vocab_size = parse_size(key, value);
    else if (key == "label_smoothing") cfg.label_smoothing = parse_double(key, value);
    else if (key == "layer_norm_eps") cfg.layer_norm_eps = parse_double(key, value);
  }
  return used;
}

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model;
  std::map<std::string, Shape> s;
  s["embed.token"] = {cfg.vocab_size, d};
  s["embed.segment"] = {2, d};
  for (std::size_t l = 0; l < cfg.n_layers_enc1; ++l) add_encoder_layer_shapes(s, "enc." + std::to_string(l), cfg);
  if (uses_query_attention(cfg.variant)) {
    for (std::size_t l = 0; l < cfg.n_layers_qattn; ++l) {
      add_encoder_layer_shapes(s, "qattn." + std::to_string(l), cfg);
    }
  }
  for (std::size_t l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    add_attention_shapes(s, pre + ".self", d);
    add_norm_shapes(s, pre + ".ln1", d);
    add_attention_shapes(s, pre + ".cross", d);
    add_norm_shapes(s, pre + ".ln2", d);
    add_ffn_shapes(s, pre + ".ffn", d, cfg.ffn_dim);
    add_norm_shapes(s, pre + ".ln3", d);
  }
  s["out.proj"] = {d, cfg.vocab_size};
  return s;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams params;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    std::size_t numel = 1;
    for (auto s : shape) numel *= s;
    std::vector<double> values(numel, 0.0);
    if (name.rfind("embed.", 0) == 0) {
      // Half the unit scale so the sinusoid (per-dim variance 1/2) is not drowned out.
      for (auto& v : values) v = 0.5 * rng.normal();
    } else if (ends_with(name, ".gain")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& v : values) v = rng.uniform(-limit, limit);
    }
    params.emplace(name, Tensor::from_values(shape, std::move(values), true));
  }
  return params;
}

std::size_t count_parameters(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.numel();
  return n;
}

const Tensor* AttentionTrace::find(const std::string& name) const {
  for (const auto& [n, t] : weights) {
    if (n == name) return &t;
  }
  return nullptr;
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<double> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * rate;
      pe[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_values({length, d_model}, std::move(pe));
}

Tensor embed_input(const TokenSeq& seq, const ModelParams& params, const ModelConfig& cfg,
                   ForwardContext& ctx) {
  if (seq.empty()) throw UsageError("cannot embed an empty sequence");
  if (seq.size() > cfg.max_input_len) {
    throw UsageError("sequence of length " + std::to_string(seq.size()) + " exceeds max_input_len " +
                     std::to_string(cfg.max_input_len));
  }
  std::vector<TokenId> segments(seq.size(), 0);
  for (std::size_t i = 0; i < seq.size() && i < seq.segments.size(); ++i) segments[i] = seq.segments[i];
  Tensor x = embedding(param(params, "embed.token"), seq.ids);
  x = add(x, positional_encoding(seq.size(), cfg.d_model));
  x = add(x, embedding(param(params, "embed.segment"), segments));
  return drop(x, cfg, ctx);
}

Mask qattn_mask(std::size_t m, std::size_t n) {
  Mask mask(n, m + n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) mask.set(i, j, true);
    mask.set(i, m + i, true);
  }
  return mask;
}

Mask cross_mask(std::size_t target_len, const std::vector<std::uint8_t>& memory_allowed) {
  Mask mask(target_len, memory_allowed.size(), false);
  for (std::size_t i = 0; i < target_len; ++i) {
    for (std::size_t j = 0; j < memory_allowed.size(); ++j) mask.set(i, j, memory_allowed[j] != 0);
  }
  return mask;
}

std::size_t mask_fallback_count() { return g_fallbacks.load(); }

MaskSet build_masks(const EncodedSample& sample, const ModelConfig& cfg) {
  MaskSet masks;
  const std::unordered_set<TokenId> query_ids(sample.query_ids.begin(), sample.query_ids.end());
  switch (cfg.variant) {
    case Variant::kOrig:
      masks.memory_allowed.assign(sample.input.size(), 1);
      break;
    case Variant::kSegQToks: {
      // Query part and its separator, then query-id occurrences in the document.
      masks.memory_allowed.assign(sample.input.size(), 1);
      for (std::size_t j = 0; j < sample.input.size(); ++j) {
        if (j <= sample.query_len || query_ids.count(sample.input.ids[j])) masks.memory_allowed[j] = 0;
      }
      break;
    }
    case Variant::kSepQDoc:
      masks.qattn = qattn_mask(sample.query.size(), sample.document.size());
      masks.memory_allowed.assign(sample.document.size(), 1);
      break;
    case Variant::kGenex:
      masks.qattn = qattn_mask(sample.query.size(), sample.document.size());
      masks.memory_allowed.assign(sample.document.size(), 1);
      for (std::size_t j = 0; j < sample.document.size(); ++j) {
        if (query_ids.count(sample.document.ids[j])) masks.memory_allowed[j] = 0;
      }
      break;
  }
  const bool any = std::find(masks.memory_allowed.begin(), masks.memory_allowed.end(), 1) !=
                   masks.memory_allowed.end();
  if (!any && !masks.memory_allowed.empty()) {
    std::fill(masks.memory_allowed.begin(), masks.memory_allowed.end(), 1);
    masks.fallback = true;
    g_fallbacks.fetch_add(1);
  }
  return masks;
}

SharedEncoding encode_shared(const TokenSeq& query, const TokenSeq& document, const ModelParams& params,
                             const ModelConfig& cfg, ForwardContext& ctx) {
  SharedEncoding out;
  out.z_q = encoder_stack(embed_input(query, params, cfg, ctx), "enc", cfg.n_layers_enc1, params, cfg, ctx);
  out.z_d = encoder_stack(embed_input(document, params, cfg, ctx), "enc", cfg.n_layers_enc1, params, cfg, ctx);
  return out;
}

Tensor query_attention_encode(const Tensor& z_q, const Tensor& z_d, const ModelParams& params,
                              const ModelConfig& cfg, ForwardContext& ctx) {
  const Mask mask = qattn_mask(z_q.rows(), z_d.rows());
  Tensor x = z_d;
  for (std::size_t l = 0; l < cfg.n_layers_qattn; ++l) {
    const std::string pre = "qattn." + std::to_string(l);
    const Tensor parts[] = {z_q, x};
    const Tensor kv = concat_rows(parts);
    x = residual(x, attention(x, kv, mask, pre + ".attn", params, cfg, ctx), pre + ".ln1", params, cfg, ctx);
    x = residual(x, feed_forward(x, pre + ".ffn", params), pre + ".ln2", params, cfg, ctx);
  }
  return x;
}

EncoderOutput encode_memory(const EncodedSample& sample, const ModelParams& params,
                            const ModelConfig& cfg, ForwardContext& ctx) {
  EncoderOutput out;
  out.masks = build_masks(sample, cfg);
  if (uses_query_attention(cfg.variant)) {
    if (sample.query.empty() || sample.document.empty()) {
      throw UsageError(to_string(cfg.variant) + " needs a split query/document sample");
    }
    auto shared = encode_shared(sample.query, sample.document, params, cfg, ctx);
    out.memory = query_attention_encode(shared.z_q, shared.z_d, params, cfg, ctx);
  } else {
    if (sample.input.empty()) throw UsageError(to_string(cfg.variant) + " needs a concatenated sample");
    out.memory = encoder_stack(embed_input(sample.input, params, cfg, ctx), "enc", cfg.n_layers_enc1, params,
                               cfg, ctx);
  }
  return out;
}

Tensor decoder_forward(std::span<const TokenId> target_in, const Tensor& memory,
                       const std::vector<std::uint8_t>& memory_allowed, const ModelParams& params,
                       const ModelConfig& cfg, ForwardContext& ctx) {
  const std::size_t t = target_in.size();
  if (t == 0) throw UsageError("decoder input is empty");
  if (memory_allowed.size() != memory.rows()) {
    throw DimensionError("memory mask covers " + std::to_string(memory_allowed.size()) + " of " +
                         std::to_string(memory.rows()) + " memory rows");
  }
  Tensor x = embedding(param(params, "embed.token"), target_in);
  x = drop(add(x, positional_encoding(t, cfg.d_model)), cfg, ctx);
  const Mask causal = Mask::causal(t);
  const Mask cross = cross_mask(t, memory_allowed);
  for (std::size_t l = 0; l < cfg.n_layers_dec; ++l) {
    const std::string pre = "dec." + std::to_string(l);
    x = residual(x, attention(x, x, causal, pre + ".self", params, cfg, ctx), pre + ".ln1", params, cfg, ctx);
    x = residual(x, attention(x, memory, cross, pre + ".cross", params, cfg, ctx), pre + ".ln2", params, cfg,
                 ctx);
    x = residual(x, feed_forward(x, pre + ".ffn", params), pre + ".ln3", params, cfg, ctx);
  }
  return log_softmax(matmul(x, param(params, "out.proj")));
}

ForwardResult model_forward(const EncodedSample& sample, const ModelParams& params,
                            const ModelConfig& cfg, ForwardContext& ctx) {
  const auto& target = sample.target.ids;
  if (target.size() < 2 || target.front() != kBosId) {
    throw UsageError("target must start with BOS and hold at least one more token");
  }
  auto enc = encode_memory(sample, params, cfg, ctx);
  std::span<const TokenId> in(target.data(), target.size() - 1);
  std::span<const TokenId> gold(target.data() + 1, target.size() - 1);

  ForwardResult r;
  r.log_probs = decoder_forward(in, enc.memory, enc.masks.memory_allowed, params, cfg, ctx);
  r.loss = cross_entropy_smoothed(r.log_probs, gold, cfg.label_smoothing);
  r.target_tokens = gold.size();
  const std::size_t v = r.log_probs.cols();
  const auto lp = r.log_probs.data();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (lp[i * v + j] > lp[i * v + best]) best = j;
    }
    if (static_cast<TokenId>(best) == gold[i]) ++r.correct_tokens;
  }
  return r;
}

GradCheckReport full_model_gradcheck(const ModelConfig& config, std::uint64_t seed,
                                     const GradCheckOptions& options) {
  ModelConfig cfg = config;
  cfg.dropout = 0.0;
  cfg.validate();
  if (cfg.vocab_size <= kNumSpecials + 1) throw UsageError("gradcheck needs content ids beyond the specials");
  Rng rng(seed);
  auto id = [&] { return static_cast<TokenId>(kNumSpecials + rng.below(cfg.vocab_size - kNumSpecials)); };
  const std::vector<TokenId> q = {id(), id(), id()};
  const std::vector<TokenId> d = {id(), q[0], id(), id(), q[2]};
  const std::vector<TokenId> e = {id(), id()};
  const auto sample = encode_ids(q, d, e, scheme_for(cfg.variant), cfg.max_input_len);

  auto params = init_params(cfg, seed);
  std::vector<Tensor> list;
  std::vector<std::string> names;
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    list.push_back(t);
    names.push_back(name);
  }
  const LossFn loss = [&] {
    ForwardContext ctx;
    return model_forward(sample, params, cfg, ctx).loss;
  };
  return finite_diff_check(loss, list, options, names);
}

}  // namespace genex
