#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "genex/model.hpp"
#include "genex/training.hpp"

namespace genex {

struct DecodeOptions {
  std::size_t max_len = 16;  // generated tokens, EOS excluded
  // Not part of the attention mechanism: forbids emitting query ids outright.
  bool ban_query_logits = false;
};

// Scores for the next token given the tokens so far (BOS first).
using NextTokenScorer = std::function<std::vector<double>(std::span<const TokenId> prefix)>;

// Argmax generation from BOS until EOS or max_len tokens. Ties go to the
// lowest id; banned ids are never chosen. The result excludes BOS and EOS.
std::vector<TokenId> greedy_search(const NextTokenScorer& scorer, std::size_t max_len,
                                   const std::unordered_set<TokenId>& banned = {});

// Eval-mode generation for one encoded sample. The memory is encoded once;
// `trace`, when given, records every attention map of every step.
std::vector<TokenId> greedy_decode_ids(const EncodedSample& sample, const ModelParams& params,
                                       const ModelConfig& cfg, const DecodeOptions& options,
                                       AttentionTrace* trace = nullptr);

// Throws UsageError when the query or document has no tokens.
std::string greedy_decode(const std::string& query, const std::string& document, const TrainState& state,
                          const DecodeOptions& options = {});

struct DecodeRequest {
  std::string query;
  std::string document;
};

// Decodes every request; output order follows the input whatever the thread count.
std::vector<std::string> decode_batch(const std::vector<DecodeRequest>& requests, const TrainState& state,
                                      const DecodeOptions& options, std::size_t threads);

}  // namespace genex
