#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "genex/gradcheck.hpp"
#include "genex/ops.hpp"
#include "genex/rng.hpp"
#include "genex/tensor.hpp"
#include "genex/vocab.hpp"

namespace genex {

enum class Variant { kOrig, kSegQToks, kSepQDoc, kGenex };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);  // ORIG, SEG_Q_TOKS, SEP_Q_DOC, GENEX
SegmentScheme scheme_for(Variant v);
bool uses_query_attention(Variant v);

using ConfigMap = std::map<std::string, std::string>;

struct ModelConfig {
  Variant variant = Variant::kGenex;
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t head_dim = 32;
  std::size_t n_layers_enc1 = 2;
  std::size_t n_layers_qattn = 2;
  std::size_t n_layers_dec = 2;
  std::size_t ffn_dim = 256;
  double dropout = 0.1;
  std::size_t max_input_len = 256;
  std::size_t max_target_len = 32;
  std::size_t vocab_size = 4096;
  double label_smoothing = 0.1;
  double layer_norm_eps = 1e-6;

  // Throws UsageError naming the violated invariant.
  void validate() const;
  ConfigMap to_map() const;
  bool operator==(const ModelConfig&) const = default;
};

// Reads the model keys present in `map`; returns the keys it consumed.
std::set<std::string> apply_model_config(const ConfigMap& map, ModelConfig& cfg);
const std::set<std::string>& model_config_keys();

using ModelParams = std::map<std::string, Tensor>;

// Xavier-uniform weights, N(0, 0.25) embeddings, unit gains, zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
// Expected parameter names and shapes for the config.
std::map<std::string, Shape> param_shapes(const ModelConfig& cfg);
std::size_t count_parameters(const ModelParams& params);

// Records attention weights (detached) under names like "qattn.0.h1".
struct AttentionTrace {
  std::vector<std::pair<std::string, Tensor>> weights;
  const Tensor* find(const std::string& name) const;
};

struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;  // required when train and dropout > 0
  AttentionTrace* trace = nullptr;
};

// Sinusoid of the original Transformer: sin at even dims, cos at odd dims.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

Tensor embed_input(const TokenSeq& seq, const ModelParams& params, const ModelConfig& cfg,
                   ForwardContext& ctx);

struct MaskSet {
  Mask qattn;                            // n x (m + n); row i allows all query columns and m + i
  std::vector<std::uint8_t> memory_allowed;  // per decoder memory position
  bool fallback = false;                 // every memory position was masked and got unmasked
};

MaskSet build_masks(const EncodedSample& sample, const ModelConfig& cfg);
Mask qattn_mask(std::size_t m, std::size_t n);
Mask cross_mask(std::size_t target_len, const std::vector<std::uint8_t>& memory_allowed);

// Number of times build_masks had to unmask a fully masked memory.
std::size_t mask_fallback_count();

struct SharedEncoding {
  Tensor z_q;
  Tensor z_d;
};

SharedEncoding encode_shared(const TokenSeq& query, const TokenSeq& document, const ModelParams& params,
                             const ModelConfig& cfg, ForwardContext& ctx);
Tensor query_attention_encode(const Tensor& z_q, const Tensor& z_d, const ModelParams& params,
                              const ModelConfig& cfg, ForwardContext& ctx);

struct EncoderOutput {
  Tensor memory;
  MaskSet masks;
};

// Variant-dispatched encoder producing the decoder memory.
EncoderOutput encode_memory(const EncodedSample& sample, const ModelParams& params,
                            const ModelConfig& cfg, ForwardContext& ctx);

// Log-probabilities [T x V] for each prefix position of `target_in`.
Tensor decoder_forward(std::span<const TokenId> target_in, const Tensor& memory,
                       const std::vector<std::uint8_t>& memory_allowed, const ModelParams& params,
                       const ModelConfig& cfg, ForwardContext& ctx);

struct ForwardResult {
  Tensor loss;       // smoothed cross entropy, mean over target positions
  Tensor log_probs;  // [T x V]
  std::size_t target_tokens = 0;
  std::size_t correct_tokens = 0;  // teacher-forced argmax hits
};

ForwardResult model_forward(const EncodedSample& sample, const ModelParams& params,
                            const ModelConfig& cfg, ForwardContext& ctx);

// Finite-difference check of every parameter on one random sample (3-token
// query, 5-token document sharing a query id, 2-token explanation). Dropout
// is disabled for the check.
GradCheckReport full_model_gradcheck(const ModelConfig& cfg, std::uint64_t seed,
                                     const GradCheckOptions& options = {});

}  // namespace genex
