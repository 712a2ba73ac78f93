#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genex/model.hpp"
#include "genex/triple.hpp"
#include "genex/vocab.hpp"

namespace genex {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Moment buffers per parameter name. Values are kept at single precision so a
// checkpoint round trip is exact.
struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

AdamState make_adam_state(const ModelParams& params, const AdamOptions& options);

using GradMap = std::map<std::string, std::vector<double>>;

// Bias-corrected Adam; params, m and v are rounded to float afterwards.
// Throws UsageError when a parameter has no gradient.
void adam_step(ModelParams& params, const GradMap& grads, AdamState& state);

// Rounds every value to the nearest float, in place.
void round_to_float(ModelParams& params);

struct Batch {
  std::vector<std::size_t> indices;  // into the sample list
  std::size_t tokens = 0;
};

// Shuffle with seed, sort each bucket of `bucket_size` samples by descending
// length, pack greedily under `cap`, then shuffle the batch order. A sample
// longer than cap forms its own batch.
std::vector<Batch> make_batches(const std::vector<std::size_t>& lengths, std::size_t cap,
                                std::uint64_t seed, std::size_t bucket_size = 1024);

struct TrainOptions {
  AdamOptions adam;
  std::size_t epochs = 10;
  std::size_t batch_tokens = 2048;
  std::size_t bucket_size = 1024;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
};

// Gradient shards per batch. Fixed so results do not depend on thread count.
inline constexpr std::size_t kGradShards = 4;

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double mean_loss = 0.0;     // token-weighted
  double token_accuracy = 0.0;  // teacher-forced, train mode
};

struct TrainState {
  ModelConfig config;
  Vocab vocab;
  ModelParams params;
  AdamState adam;
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::uint64_t seed = 1;
  std::size_t batch_tokens = 2048;
  std::size_t bucket_size = 1024;
  std::vector<double> epoch_losses;
};

// Fresh state: params from init_params(seed) rounded to float, empty Adam moments.
TrainState init_train_state(const ModelConfig& cfg, const Vocab& vocab, const TrainOptions& options);

// Encodes triples for cfg.variant, truncating documents to max_input_len and
// explanations so the target fits max_target_len + 1 (BOS + tokens + EOS).
std::vector<EncodedSample> encode_triples(const std::vector<ExplanationTriple>& triples, const Vocab& vocab,
                                          const ModelConfig& cfg);

using EpochCallback = std::function<void(const EpochStats&, const TrainState&)>;

// One pass over the samples. Batches and dropout streams derive from
// (seed, epoch, step), so resuming from a checkpoint repeats an
// uninterrupted run bit for bit. Throws NumericError on a non-finite loss.
EpochStats train_epoch(TrainState& state, const std::vector<EncodedSample>& samples, std::size_t threads);

// Runs epochs until state.epoch reaches target_epoch.
std::vector<EpochStats> train(TrainState& state, const std::vector<EncodedSample>& samples,
                              std::size_t target_epoch, std::size_t threads,
                              const EpochCallback& on_epoch = {});

// Teacher-forced argmax accuracy in eval mode.
double teacher_forced_accuracy(const ModelParams& params, const ModelConfig& cfg,
                               const std::vector<EncodedSample>& samples, std::size_t threads = 1);

// Binary checkpoint: magic, manifest, float32 tensors, Adam moments under
// "adam.m/<name>" and "adam.v/<name>".
void save_checkpoint(const TrainState& state, const std::string& path);
std::string serialize_checkpoint(const TrainState& state);
// Throws DataError on a bad magic, truncation or a tensor that disagrees
// with the manifest's config.
TrainState load_checkpoint(const std::string& path);
TrainState parse_checkpoint(const std::string& bytes);
// As above and additionally requires the stored config to produce the
// same tensors as `expected`; the error names the first mismatch.
TrainState load_checkpoint(const std::string& path, const ModelConfig& expected);

// Applies training keys (lr, beta1, beta2, adam_eps, epochs, batch_tokens,
// bucket_size, seed, threads) and returns the keys consumed.
std::set<std::string> apply_train_config(const ConfigMap& map, TrainOptions& options);
const std::set<std::string>& train_config_keys();

// key = value lines with # comments. Throws UsageError on a malformed line.
ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::string& path);

}  // namespace genex
