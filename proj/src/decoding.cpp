#include "genex/decoding.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "genex/errors.hpp"

namespace genex {

std::vector<TokenId> greedy_search(const NextTokenScorer& scorer, std::size_t max_len,
                                   const std::unordered_set<TokenId>& banned) {
  if (max_len == 0) throw UsageError("max_len must be at least 1");
  std::vector<TokenId> prefix = {kBosId};
  while (prefix.size() - 1 < max_len) {
    const auto scores = scorer(prefix);
    std::size_t best = scores.size();
    for (std::size_t v = 0; v < scores.size(); ++v) {
      if (banned.count(static_cast<TokenId>(v))) continue;
      if (best == scores.size() || scores[v] > scores[best]) best = v;
    }
    if (best == scores.size()) throw UsageError("every token is banned");
    if (static_cast<TokenId>(best) == kEosId) break;
    prefix.push_back(static_cast<TokenId>(best));
  }
  return {prefix.begin() + 1, prefix.end()};
}

std::vector<TokenId> greedy_decode_ids(const EncodedSample& sample, const ModelParams& params,
                                       const ModelConfig& cfg, const DecodeOptions& options,
                                       AttentionTrace* trace) {
  NoGradGuard guard;
  ForwardContext ctx{false, nullptr, trace};
  const auto enc = encode_memory(sample, params, cfg, ctx);
  std::unordered_set<TokenId> banned;
  if (options.ban_query_logits) banned.insert(sample.query_ids.begin(), sample.query_ids.end());
  // The EOS slot must stay available to end generation.
  banned.erase(kEosId);
  const NextTokenScorer scorer = [&](std::span<const TokenId> prefix) {
    const auto lp = decoder_forward(prefix, enc.memory, enc.masks.memory_allowed, params, cfg, ctx);
    const auto row = lp.data().subspan((prefix.size() - 1) * lp.cols(), lp.cols());
    return std::vector<double>(row.begin(), row.end());
  };
  return greedy_search(scorer, options.max_len, banned);
}

std::string greedy_decode(const std::string& query, const std::string& document, const TrainState& state,
                          const DecodeOptions& options) {
  const auto& cfg = state.config;
  const auto sample = encode(query, document, "", state.vocab, scheme_for(cfg.variant), cfg.max_input_len);
  return state.vocab.decode(greedy_decode_ids(sample, state.params, cfg, options));
}

std::vector<std::string> decode_batch(const std::vector<DecodeRequest>& requests, const TrainState& state,
                                      const DecodeOptions& options, std::size_t threads) {
  std::vector<std::string> out(requests.size());
  if (requests.empty()) return out;
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, requests.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        out[i] = greedy_decode(requests[i].query, requests[i].document, state, options);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace genex
