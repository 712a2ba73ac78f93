#include "genex/training.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "genex/errors.hpp"
#include "genex/text.hpp"

namespace genex {

namespace {

constexpr char kMagic[] = "GENEX1\n";
constexpr std::uint64_t kDropoutStream = 0xd20f;

double to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a nonnegative integer, got '" + value + "'");
  }
  if (pos != value.size()) {
    throw UsageError("config key '" + key + "' expects a nonnegative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  if (pos != value.size() || !std::isfinite(v)) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ModelParams clone_for_grad(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, t] : params) {
    out.emplace(name, Tensor::from_values(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                                          true));
  }
  return out;
}

struct ShardResult {
  GradMap grads;
  double weighted_loss = 0.0;  // sum of per-sample mean loss times target tokens
  std::size_t correct = 0;
  std::size_t bad_sample = SIZE_MAX;
};

// Runs forward and backward for the samples of one shard on its own parameter
// copy, so shards never share gradient buffers.
void run_shard(const std::vector<std::size_t>& members, const std::vector<EncodedSample>& samples,
               ModelParams& work, const ModelConfig& cfg, std::uint64_t seed, std::size_t step,
               std::size_t batch_targets, ShardResult& out) {
  for (auto& [_, t] : work) t.zero_grad();
  for (std::size_t idx : members) {
    Rng rng(mix_seed(seed ^ kDropoutStream, step, idx));
    ForwardContext ctx{true, &rng, nullptr};
    auto r = model_forward(samples[idx], work, cfg, ctx);
    const double loss = r.loss.item();
    if (!std::isfinite(loss)) {
      out.bad_sample = idx;
      return;
    }
    out.weighted_loss += loss * static_cast<double>(r.target_tokens);
    out.correct += r.correct_tokens;
    scale(r.loss, static_cast<double>(r.target_tokens) / static_cast<double>(batch_targets)).backward();
  }
  for (const auto& [name, t] : work) {
    if (t.has_grad()) {
      out.grads[name].assign(t.grad().begin(), t.grad().end());
    } else {
      out.grads[name].assign(t.numel(), 0.0);
    }
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_tensor(std::string& out, const std::string& name, const Shape& shape, const std::vector<double>& values) {
  put_u64(out, name.size());
  out += name;
  put_u64(out, shape.size());
  for (auto d : shape) put_u64(out, d);
  for (double v : values) put_f32(out, static_cast<float>(v));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct StoredTensor {
  Shape shape;
  std::vector<double> values;
};

std::string join_losses(const std::vector<double>& losses) {
  std::string out;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (i) out += ",";
    out += format_real(losses[i]);
  }
  return out;
}

}  // namespace

AdamState make_adam_state(const ModelParams& params, const AdamOptions& options) {
  if (!(options.lr > 0.0) || !(options.eps > 0.0) || options.beta1 < 0.0 || options.beta1 >= 1.0 ||
      options.beta2 < 0.0 || options.beta2 >= 1.0) {
    throw UsageError("Adam needs lr > 0, eps > 0 and betas in [0, 1)");
  }
  AdamState s;
  s.options = options;
  for (const auto& [name, t] : params) {
    s.m[name].assign(t.numel(), 0.0);
    s.v[name].assign(t.numel(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, const GradMap& grads, AdamState& state) {
  for (const auto& [name, t] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw UsageError("no gradient for parameter " + name);
    if (it->second.size() != t.numel()) throw DimensionError("gradient size mismatch for " + name);
    if (state.m[name].size() != t.numel() || state.v[name].size() != t.numel()) {
      throw DimensionError("Adam buffers do not match parameter " + name);
    }
  }
  const auto& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      w[i] = to_float(w[i] - o.lr * (mi / c1) / (std::sqrt(vi / c2) + o.eps));
      m[i] = to_float(mi);
      v[i] = to_float(vi);
    }
  }
}

void round_to_float(ModelParams& params) {
  for (auto& [_, t] : params)
    for (auto& x : t.data()) x = to_float(x);
}

std::vector<Batch> make_batches(const std::vector<std::size_t>& lengths, std::size_t cap, std::uint64_t seed,
                                std::size_t bucket_size) {
  if (cap == 0) throw UsageError("batch token cap must be positive");
  if (bucket_size == 0) throw UsageError("bucket size must be positive");
  Rng rng(seed);
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += bucket_size) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bucket_size));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
    Batch current;
    for (auto it = first; it != last; ++it) {
      const std::size_t len = lengths[*it];
      if (!current.indices.empty() && current.tokens + len > cap) {
        batches.push_back(std::move(current));
        current = Batch{};
      }
      current.indices.push_back(*it);
      current.tokens += len;
    }
    if (!current.indices.empty()) batches.push_back(std::move(current));
  }
  rng.shuffle(batches);
  return batches;
}

TrainState init_train_state(const ModelConfig& cfg, const Vocab& vocab, const TrainOptions& options) {
  cfg.validate();
  if (vocab.size() != cfg.vocab_size) {
    throw UsageError("vocab has " + std::to_string(vocab.size()) + " pieces but vocab_size is " +
                     std::to_string(cfg.vocab_size));
  }
  TrainState s;
  s.config = cfg;
  s.vocab = vocab;
  s.params = init_params(cfg, options.seed);
  round_to_float(s.params);
  s.adam = make_adam_state(s.params, options.adam);
  s.seed = options.seed;
  s.batch_tokens = options.batch_tokens;
  s.bucket_size = options.bucket_size;
  if (s.batch_tokens == 0 || s.bucket_size == 0) throw UsageError("batch_tokens and bucket_size must be positive");
  return s;
}

std::vector<EncodedSample> encode_triples(const std::vector<ExplanationTriple>& triples, const Vocab& vocab,
                                          const ModelConfig& cfg) {
  std::vector<EncodedSample> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    auto s = encode(t.query, t.document, t.explanation, vocab, scheme_for(cfg.variant), cfg.max_input_len);
    auto& ids = s.target.ids;
    if (ids.size() > cfg.max_target_len + 1) {
      ids.resize(cfg.max_target_len);
      ids.push_back(kEosId);
      s.target.segments.assign(ids.size(), 1);
    }
    out.push_back(std::move(s));
  }
  return out;
}

EpochStats train_epoch(TrainState& state, const std::vector<EncodedSample>& samples, std::size_t threads) {
  if (samples.empty()) throw UsageError("training needs at least one sample");
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, kGradShards);
  std::vector<std::size_t> lengths;
  lengths.reserve(samples.size());
  for (const auto& s : samples) lengths.push_back(s.token_count());
  const auto batches = make_batches(lengths, state.batch_tokens, mix_seed(state.seed, state.epoch),
                                    state.bucket_size);

  EpochStats stats;
  stats.epoch = state.epoch + 1;
  double loss_sum = 0.0;
  std::size_t correct = 0, targets = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    std::size_t batch_targets = 0;
    for (std::size_t idx : batch.indices) batch_targets += samples[idx].target.size() - 1;

    std::vector<std::vector<std::size_t>> shards(kGradShards);
    for (std::size_t k = 0; k < batch.indices.size(); ++k) shards[k % kGradShards].push_back(batch.indices[k]);
    std::vector<ShardResult> results(kGradShards);
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
      try {
        auto copy = clone_for_grad(state.params);
        for (std::size_t s = w; s < kGradShards; s += workers) {
          run_shard(shards[s], samples, copy, state.config, state.seed, state.step, batch_targets, results[s]);
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

    GradMap total = std::move(results[0].grads);
    for (std::size_t s = 0; s < kGradShards; ++s) {
      const auto& r = results[s];
      if (r.bad_sample != SIZE_MAX) {
        throw NumericError("non-finite loss in batch " + std::to_string(b) + " of epoch " +
                           std::to_string(stats.epoch) + " (sample " + std::to_string(r.bad_sample) + ")");
      }
      if (s > 0) {
        for (auto& [name, g] : total) {
          const auto& add = r.grads.at(name);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += add[i];
        }
      }
      loss_sum += r.weighted_loss;
      correct += r.correct;
    }
    targets += batch_targets;
    adam_step(state.params, total, state.adam);
    ++state.step;
    ++stats.steps;
  }
  stats.mean_loss = loss_sum / static_cast<double>(targets);
  stats.token_accuracy = static_cast<double>(correct) / static_cast<double>(targets);
  ++state.epoch;
  state.epoch_losses.push_back(stats.mean_loss);
  return stats;
}

std::vector<EpochStats> train(TrainState& state, const std::vector<EncodedSample>& samples,
                              std::size_t target_epoch, std::size_t threads, const EpochCallback& on_epoch) {
  std::vector<EpochStats> out;
  while (state.epoch < target_epoch) {
    out.push_back(train_epoch(state, samples, threads));
    if (on_epoch) on_epoch(out.back(), state);
  }
  return out;
}

double teacher_forced_accuracy(const ModelParams& params, const ModelConfig& cfg,
                               const std::vector<EncodedSample>& samples, std::size_t threads) {
  if (samples.empty()) return 0.0;
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, samples.size());
  std::vector<std::size_t> correct(samples.size()), total(samples.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      NoGradGuard guard;
      for (std::size_t i = next++; i < samples.size(); i = next++) {
        ForwardContext ctx;
        const auto r = model_forward(samples[i], params, cfg, ctx);
        correct[i] = r.correct_tokens;
        total[i] = r.target_tokens;
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
  const auto hits = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  const auto all = std::accumulate(total.begin(), total.end(), std::size_t{0});
  return static_cast<double>(hits) / static_cast<double>(all);
}

std::string serialize_checkpoint(const TrainState& state) {
  std::ostringstream manifest;
  for (const auto& [k, v] : state.config.to_map()) manifest << k << " = " << v << "\n";
  const auto& o = state.adam.options;
  manifest << "lr = " << format_real(o.lr) << "\n"
           << "beta1 = " << format_real(o.beta1) << "\n"
           << "beta2 = " << format_real(o.beta2) << "\n"
           << "adam_eps = " << format_real(o.eps) << "\n"
           << "adam_step = " << state.adam.step << "\n"
           << "epoch = " << state.epoch << "\n"
           << "step = " << state.step << "\n"
           << "seed = " << state.seed << "\n"
           << "batch_tokens = " << state.batch_tokens << "\n"
           << "bucket_size = " << state.bucket_size << "\n"
           << "epoch_losses = " << join_losses(state.epoch_losses) << "\n"
           << "tensors = " << state.params.size() * 3 << "\n"
           << "[vocab]\n"
           << state.vocab.serialize();

  std::string out(kMagic);
  const std::string text = manifest.str();
  put_u64(out, text.size());
  out += text;
  for (const auto& [name, t] : state.params) {
    put_tensor(out, name, t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  }
  for (const auto& [name, t] : state.params) put_tensor(out, "adam.m/" + name, t.shape(), state.adam.m.at(name));
  for (const auto& [name, t] : state.params) put_tensor(out, "adam.v/" + name, t.shape(), state.adam.v.at(name));
  return out;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  write_file(path, serialize_checkpoint(state));
}

TrainState parse_checkpoint(const std::string& bytes) {
  const std::size_t magic_len = sizeof(kMagic) - 1;
  if (bytes.size() < magic_len || bytes.compare(0, magic_len, kMagic) != 0) {
    throw DataError("not a checkpoint (bad magic or version)");
  }
  const std::string body = bytes.substr(magic_len);
  Reader in(body);
  const std::string manifest = in.str(in.u64());

  const auto split = manifest.find("[vocab]\n");
  if (split == std::string::npos) throw DataError("checkpoint manifest has no vocabulary");
  ConfigMap keys;
  try {
    keys = parse_config_text(manifest.substr(0, split));
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }
  std::vector<std::string> pieces;
  std::istringstream vocab_lines(manifest.substr(split + 8));
  for (std::string line; std::getline(vocab_lines, line);) pieces.push_back(line);

  TrainState s;
  try {
    const auto model_keys = apply_model_config(keys, s.config);
    if (model_keys != model_config_keys()) throw DataError("checkpoint manifest lacks model config keys");
    s.config.validate();
    s.vocab = Vocab::from_pieces(std::move(pieces));
    auto need = [&](const char* key) -> const std::string& {
      auto it = keys.find(key);
      if (it == keys.end()) throw DataError(std::string("checkpoint manifest lacks ") + key);
      return it->second;
    };
    s.adam.options.lr = parse_real("lr", need("lr"));
    s.adam.options.beta1 = parse_real("beta1", need("beta1"));
    s.adam.options.beta2 = parse_real("beta2", need("beta2"));
    s.adam.options.eps = parse_real("adam_eps", need("adam_eps"));
    s.adam.step = parse_count("adam_step", need("adam_step"));
    s.epoch = parse_count("epoch", need("epoch"));
    s.step = parse_count("step", need("step"));
    s.seed = parse_count("seed", need("seed"));
    s.batch_tokens = parse_count("batch_tokens", need("batch_tokens"));
    s.bucket_size = parse_count("bucket_size", need("bucket_size"));
    std::stringstream losses(need("epoch_losses"));
    for (std::string part; std::getline(losses, part, ',');) {
      s.epoch_losses.push_back(parse_real("epoch_losses", part));
    }
    const std::size_t count = parse_count("tensors", need("tensors"));

    std::map<std::string, StoredTensor> stored;
    for (std::size_t i = 0; i < count; ++i) {
      const std::string name = in.str(in.u64());
      StoredTensor t;
      const auto rank = in.u64();
      if (rank > 8) throw DataError("tensor " + name + " has implausible rank");
      std::size_t n = 1;
      for (std::uint64_t r = 0; r < rank; ++r) {
        t.shape.push_back(static_cast<std::size_t>(in.u64()));
        n *= t.shape.back();
      }
      if (n > (1ULL << 34)) throw DataError("tensor " + name + " is implausibly large");
      t.values.resize(n);
      for (auto& v : t.values) v = static_cast<double>(in.f32());
      if (!stored.emplace(name, std::move(t)).second) throw DataError("tensor " + name + " appears twice");
    }
    if (!in.done()) throw DataError("checkpoint has trailing bytes");

    const auto shapes = param_shapes(s.config);
    if (stored.size() != shapes.size() * 3) throw DataError("checkpoint holds an unexpected number of tensors");
    for (const auto& [name, shape] : shapes) {
      for (const std::string prefix : {"", "adam.m/", "adam.v/"}) {
        auto it = stored.find(prefix + name);
        if (it == stored.end()) throw DataError("checkpoint lacks tensor " + prefix + name);
        if (it->second.shape != shape) {
          throw DataError("tensor " + prefix + name + " has shape " + shape_str(it->second.shape) +
                          ", manifest config needs " + shape_str(shape));
        }
      }
      s.params.emplace(name, Tensor::from_values(shape, std::move(stored.at(name).values)));
      s.adam.m[name] = std::move(stored.at("adam.m/" + name).values);
      s.adam.v[name] = std::move(stored.at("adam.v/" + name).values);
    }
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (s.vocab.size() != s.config.vocab_size) throw DataError("checkpoint vocabulary disagrees with vocab_size");
  return s;
}

TrainState load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

TrainState load_checkpoint(const std::string& path, const ModelConfig& expected) {
  auto s = load_checkpoint(path);
  const auto want = param_shapes(expected);
  const auto have = param_shapes(s.config);
  for (const auto& [name, shape] : want) {
    auto it = have.find(name);
    if (it == have.end()) throw DataError("checkpoint lacks tensor " + name + " required by the config");
    if (it->second != shape) {
      throw DataError("tensor " + name + " has shape " + shape_str(it->second) + " in the checkpoint, config needs " +
                      shape_str(shape));
    }
  }
  for (const auto& [name, _] : have) {
    if (!want.count(name)) throw DataError("checkpoint tensor " + name + " is not part of the config");
  }
  return s;
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {"lr",         "beta1",       "beta2", "adam_eps", "epochs",
                                             "batch_tokens", "bucket_size", "seed",  "threads"};
  return keys;
}

std::set<std::string> apply_train_config(const ConfigMap& map, TrainOptions& options) {
  std::set<std::string> used;
  for (const auto& [key, value] : map) {
    if (!train_config_keys().count(key)) continue;
    used.insert(key);
    if (key == "lr") options.adam.lr = parse_real(key, value);
    else if (key == "beta1") options.adam.beta1 = parse_real(key, value);
    else if (key == "beta2") options.adam.beta2 = parse_real(key, value);
    else if (key == "adam_eps") options.adam.eps = parse_real(key, value);
    else if (key == "epochs") options.epochs = parse_count(key, value);
    else if (key == "batch_tokens") options.batch_tokens = parse_count(key, value);
    else if (key == "bucket_size") options.bucket_size = parse_count(key, value);
    else if (key == "seed") options.seed = parse_count(key, value);
    else if (key == "threads") options.threads = parse_count(key, value);
  }
  return used;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::istringstream lines(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(lines, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + " has an empty key");
    if (!out.emplace(key, value).second) {
      throw UsageError("config key '" + key + "' is set twice (line " + std::to_string(lineno) + ")");
    }
  }
  return out;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace genex
