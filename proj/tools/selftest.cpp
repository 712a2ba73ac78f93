#include "selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "genex/baselines.hpp"
#include "genex/datagen.hpp"
#include "genex/decoding.hpp"
#include "genex/gradcheck.hpp"
#include "genex/metrics.hpp"
#include "genex/model.hpp"
#include "genex/training.hpp"

namespace genex {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

ModelConfig small_config(Variant v, std::size_t vocab_size) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.d_model = 16;
  cfg.head_dim = 8;
  cfg.n_layers_enc1 = cfg.n_layers_qattn = cfg.n_layers_dec = 1;
  cfg.ffn_dim = 32;
  cfg.vocab_size = vocab_size;
  return cfg;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  auto t = Tensor::zeros({r, c});
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

const std::vector<Variant> kVariants = {Variant::kOrig, Variant::kSegQToks, Variant::kSepQDoc, Variant::kGenex};

}  // namespace

std::vector<SelftestLine> run_selftest(std::uint64_t seed, std::size_t threads) {
  std::vector<SelftestLine> out;
  auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    // body returns "" on success or a failure description
    try {
      const auto failure = body();
      out.push_back({name, failure.empty(), failure});
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };

  const auto triples = synth_keyvalue_dataset(48, synthetic_words(90), SynthOptions{}, seed);
  std::vector<std::string> corpus;
  for (const auto& t : triples) {
    corpus.push_back(t.query);
    corpus.push_back(t.document);
    corpus.push_back(t.explanation);
  }
  const auto vocab = Vocab::train(corpus, 160);

  check("tensor.gradcheck", [&]() -> std::string {
    Rng rng(seed);
    auto a = random_matrix(3, 4, rng), w = random_matrix(4, 5, rng), g = random_matrix(1, 5, rng);
    auto b = random_matrix(1, 5, rng);
    std::vector<Tensor> params = {a, w, g, b};
    for (auto& p : params) p.set_requires_grad(true);
    Mask mask(3, 3, true);
    mask.set(0, 2, false);
    const std::vector<TokenId> gold = {1, 4, 2};
    const LossFn f = [&] {
      auto h = layer_norm(matmul(a, w), g, b, 1e-6);
      auto att = masked_softmax(matmul(h, transpose(h)), mask);
      return cross_entropy_smoothed(log_softmax(matmul(att, h)), gold, 0.1);
    };
    const auto r = finite_diff_check(f, params);
    return r.passed ? "" : "max relative error " + num(r.max_rel_error);
  });

  check("vocab.roundtrip", [&]() -> std::string {
    for (const auto& t : triples) {
      if (vocab.decode(vocab.encode_text(t.document)) != t.document) return "document does not round trip";
    }
    return "";
  });

  check("datagen.synthetic", [&]() -> std::string {
    const auto again = synth_keyvalue_dataset(48, synthetic_words(90), SynthOptions{}, seed);
    if (again != triples) return "generation is not deterministic";
    for (const auto& t : triples) {
      if ((" " + t.document + " ").find(" " + t.query + " is " + t.explanation + " ") == std::string::npos) {
        return "answer clause missing for " + t.query;
      }
    }
    return "";
  });

  check("datagen.summary", [&]() -> std::string {
    std::string text;
    for (std::size_t i = 0; i < 40; ++i) text += "Sentence " + triples[i].document + ". ";
    SummaryOptions opt;
    opt.cap = 60;
    const auto summary = query_biased_summary(text, triples[0].query, opt);
    if (split_whitespace(summary).size() > 60) return "summary exceeds its cap";
    if (summary.empty()) return "summary is empty";
    return "";
  });

  check("model.qattn_structure", [&]() -> std::string {
    auto cfg = small_config(Variant::kGenex, vocab.size());
    const auto p = init_params(cfg, seed);
    Rng rng(seed + 1);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(32);
      AttentionTrace trace;
      ForwardContext ctx{false, nullptr, &trace};
      query_attention_encode(random_matrix(m, 16, rng), random_matrix(n, 16, rng), p, cfg, ctx);
      for (const auto& [name, w] : trace.weights) {
        for (std::size_t i = 0; i < n; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < m + n; ++j) {
            total += w.at(i, j);
            if (j >= m && j - m != i && w.at(i, j) != 0.0) return name + " reaches another document token";
          }
          if (std::abs(total - 1.0) > 1e-9) return name + " row does not sum to 1";
        }
      }
    }
    return "";
  });

  check("model.masked_memory_perturbation", [&]() -> std::string {
    for (Variant v : {Variant::kSegQToks, Variant::kGenex}) {
      const auto cfg = small_config(v, vocab.size());
      const auto p = init_params(cfg, seed);
      const auto s = encode(triples[0].query, triples[0].document, triples[0].explanation, vocab, scheme_for(v));
      ForwardContext ctx;
      const auto enc = encode_memory(s, p, cfg, ctx);
      auto noisy = Tensor::from_values(enc.memory.shape(),
                                       std::vector<double>(enc.memory.data().begin(), enc.memory.data().end()));
      for (std::size_t r = 0; r < noisy.rows(); ++r) {
        if (enc.masks.memory_allowed[r]) continue;
        for (std::size_t c = 0; c < noisy.cols(); ++c) noisy.data()[r * noisy.cols() + c] += 7.0;
      }
      std::span<const TokenId> in(s.target.ids.data(), s.target.size() - 1);
      const auto a = decoder_forward(in, enc.memory, enc.masks.memory_allowed, p, cfg, ctx);
      const auto b = decoder_forward(in, noisy, enc.masks.memory_allowed, p, cfg, ctx);
      if (!std::equal(a.data().begin(), a.data().end(), b.data().begin())) {
        return to_string(v) + " output moved with masked memory";
      }
    }
    return "";
  });

  check("model.gradcheck", [&]() -> std::string {
    for (Variant v : kVariants) {
      auto cfg = small_config(v, 16);
      cfg.d_model = 8;
      cfg.head_dim = 4;
      cfg.ffn_dim = 16;
      const auto r = full_model_gradcheck(cfg, seed);
      if (!r.passed) return to_string(v) + " worst " + r.worst + " relative error " + num(r.max_rel_error);
    }
    return "";
  });

  check("training.adam_first_step", [&]() -> std::string {
    Rng rng(seed);
    ModelParams p;
    p.emplace("w", random_matrix(4, 8, rng));
    round_to_float(p);
    const std::vector<double> before(p.at("w").data().begin(), p.at("w").data().end());
    GradMap g{{"w", std::vector<double>(32)}};
    for (auto& x : g["w"]) x = rng.normal() * 10.0;
    AdamOptions o;
    o.lr = 1e-3;
    auto state = make_adam_state(p, o);
    adam_step(p, g, state);
    for (std::size_t i = 0; i < 32; ++i) {
      if (std::abs(p.at("w").at(i) - before[i]) > 1e-3 * (1 + 1e-6) + 1e-6) return "step exceeds lr";
    }
    return "";
  });

  check("training.batches", [&]() -> std::string {
    Rng rng(seed);
    std::vector<std::size_t> lengths(200);
    for (auto& l : lengths) l = 1 + rng.below(300);
    const auto batches = make_batches(lengths, 600, seed, 50);
    std::vector<int> seen(200, 0);
    for (const auto& b : batches) {
      if (b.tokens > 600 && b.indices.size() > 1) return "batch over cap";
      for (auto i : b.indices) ++seen[i];
    }
    for (int c : seen)
      if (c != 1) return "sample not batched exactly once";
    return "";
  });

  check("training.determinism", [&]() -> std::string {
    const auto cfg = small_config(Variant::kGenex, vocab.size());
    const auto samples = encode_triples(triples, vocab, cfg);
    TrainOptions opt;
    opt.adam.lr = 1e-3;
    opt.batch_tokens = 400;
    opt.seed = seed;
    std::string reference;
    for (std::size_t t : {std::size_t{1}, std::max<std::size_t>(threads, 2)}) {
      auto state = init_train_state(cfg, vocab, opt);
      train(state, samples, 1, t);
      const auto bytes = serialize_checkpoint(state);
      if (reference.empty()) reference = bytes;
      if (bytes != reference) return "thread count changed the trained state";
      const auto back = parse_checkpoint(bytes);
      if (serialize_checkpoint(back) != bytes) return "checkpoint does not round trip";
    }
    return "";
  });

  check("decoding.bounds", [&]() -> std::string {
    const auto cfg = small_config(Variant::kGenex, vocab.size());
    TrainOptions opt;
    opt.seed = seed;
    const auto state = init_train_state(cfg, vocab, opt);
    std::vector<DecodeRequest> reqs;
    for (std::size_t i = 0; i < 8; ++i) reqs.push_back({triples[i].query, triples[i].document});
    DecodeOptions d;
    d.max_len = 5;
    const auto a = decode_batch(reqs, state, d, 1);
    if (a != decode_batch(reqs, state, d, threads)) return "decoding depends on thread count";
    for (const auto& r : reqs) {
      const auto s = encode(r.query, r.document, "", vocab, SegmentScheme::kSplit);
      if (greedy_decode_ids(s, state.params, cfg, d).size() > 5) return "output longer than max_len";
    }
    return "";
  });

  check("baselines.pagerank", [&]() -> std::string {
    const auto g = build_term_graph(triples[0].document + " " + triples[1].document);
    const auto r = pagerank(g);
    double total = 0.0;
    for (double s : r.scores) {
      if (s < 0.0) return "negative score";
      total += s;
    }
    if (!r.converged || std::abs(total - 1.0) > 1e-6) return "scores do not form a distribution";
    const auto plain = textrank_keywords(triples[0].document, 5);
    const auto ts = ts_textrank_keywords(triples[0].document, "zzzz qqqq", 5);
    if (plain.size() != ts.size()) return "fallback size differs";
    for (std::size_t i = 0; i < plain.size(); ++i) {
      if (plain[i].term != ts[i].term || plain[i].score != ts[i].score) return "fallback differs from TextRank";
    }
    return "";
  });

  check("baselines.top_tokens", [&]() -> std::string {
    const auto top = select_top_tokens({{"a", 1.0}, {"b", 0.5}, {"c", 0.1}, {"d", 0.05}});
    if (top != std::vector<std::string>{"a", "b", "c"}) return "threshold or cap rule broken";
    return "";
  });

  check("metrics.identity", [&]() -> std::string {
    const Words w = split_whitespace(triples[0].document);
    if (corpus_bleu({w}, std::vector<Words>{w}, 2) != 1.0) return "BLEU of identical text is not 1";
    if (rouge_n(w, w, 1).f1 != 1.0 || rouge_n(w, w, 2).f1 != 1.0 || rouge_l(w, w).f1 != 1.0) {
      return "ROUGE of identical text is not 1";
    }
    return "";
  });

  check("metrics.ttest", [&]() -> std::string {
    const std::vector<double> a = {0.1, 0.4, 0.35, 0.8, 0.5}, b = {0.2, 0.3, 0.3, 0.6, 0.45};
    const auto ab = paired_ttest(a, b), ba = paired_ttest(b, a);
    if (std::abs(ab.t + ba.t) > 1e-12 || std::abs(ab.p - ba.p) > 1e-12) return "t-test is not antisymmetric";
    if (!(ab.p > 0.0 && ab.p <= 1.0)) return "p-value out of range";
    return "";
  });

  return out;
}

}  // namespace genex
