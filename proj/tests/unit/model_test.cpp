#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "genex/errors.hpp"
#include "genex/gradcheck.hpp"
#include "genex/model.hpp"

using namespace genex;

namespace {

ModelConfig tiny_config(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.head_dim = 4;
  cfg.n_layers_enc1 = 1;
  cfg.n_layers_qattn = 1;
  cfg.n_layers_dec = 1;
  cfg.ffn_dim = 16;
  cfg.vocab_size = 16;
  cfg.max_input_len = 40;
  cfg.max_target_len = 8;
  cfg.dropout = 0.0;
  return cfg;
}

EncodedSample sample_for(Variant v, std::vector<TokenId> q, std::vector<TokenId> d,
                         std::vector<TokenId> e) {
  return encode_ids(q, d, e, scheme_for(v));
}

// Raw split sample without separators, for exercising mask rules directly.
EncodedSample raw_split(std::vector<TokenId> q, std::vector<TokenId> d) {
  EncodedSample s;
  s.scheme = SegmentScheme::kSplit;
  s.query.ids = q;
  s.query.segments.assign(q.size(), 0);
  s.document.ids = d;
  s.document.segments.assign(d.size(), 1);
  s.query_ids = q;
  s.query_len = q.size();
  s.target.ids = {kBosId, 5, kEosId};
  return s;
}

const std::vector<Variant> kAllVariants = {Variant::kOrig, Variant::kSegQToks, Variant::kSepQDoc,
                                           Variant::kGenex};

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data(), y = b.data();
  return std::equal(x.begin(), x.end(), y.begin());
}

}  // namespace

TEST(ModelConfig, ValidatesInvariants) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.head_dim = 16;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = ModelConfig{};
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = ModelConfig{};
  cfg.max_target_len = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(ModelConfig, MapRoundTrip) {
  ModelConfig cfg = tiny_config(Variant::kSegQToks);
  cfg.label_smoothing = 0.123456789012345;
  ModelConfig back;
  const auto used = apply_model_config(cfg.to_map(), back);
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(used, model_config_keys());
}

TEST(ModelConfig, RejectsMalformedValues) {
  ModelConfig cfg;
  EXPECT_THROW(apply_model_config({{"d_model", "6x"}}, cfg), UsageError);
  EXPECT_THROW(apply_model_config({{"variant", "BERT"}}, cfg), UsageError);
  EXPECT_THROW(apply_model_config({{"dropout", "abc"}}, cfg), UsageError);
}

TEST(Params, ShapesMatchConfigAndInitIsSeeded) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 3);
  const auto shapes = param_shapes(cfg);
  ASSERT_EQ(p.size(), shapes.size());
  for (const auto& [name, shape] : shapes) EXPECT_EQ(p.at(name).shape(), shape) << name;
  EXPECT_EQ(p.at("embed.token").shape(), (Shape{16, 8}));
  EXPECT_EQ(p.at("out.proj").shape(), (Shape{8, 16}));
  EXPECT_TRUE(p.count("qattn.0.attn.wq"));
  EXPECT_FALSE(init_params(tiny_config(Variant::kOrig), 3).count("qattn.0.attn.wq"));
  const auto again = init_params(cfg, 3);
  for (const auto& [name, t] : p) EXPECT_TRUE(bit_equal(t, again.at(name))) << name;
  EXPECT_FALSE(bit_equal(p.at("out.proj"), init_params(cfg, 4).at("out.proj")));
}

TEST(Embed, PositionZeroAlternatesZeroOne) {
  const auto pe = positional_encoding(3, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(pe.at(0, i), i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe.at(1, 0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe.at(1, 3), std::cos(1.0 / std::pow(10000.0, 2.0 / 8.0)), 1e-15);
}

TEST(Embed, PositionsAndSegmentsAreAdditive) {
  const auto cfg = tiny_config(Variant::kOrig);
  const auto p = init_params(cfg, 1);
  ForwardContext ctx;
  TokenSeq seq{{7, 7}, {0, 0}};
  const auto x = embed_input(seq, p, cfg, ctx);
  bool differ = false;
  for (std::size_t c = 0; c < 8; ++c) differ |= x.at(0, c) != x.at(1, c);
  EXPECT_TRUE(differ);

  TokenSeq seg1{{7, 7}, {1, 0}};
  const auto y = embed_input(seg1, p, cfg, ctx);
  const auto& segtab = p.at("embed.segment");
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(y.at(0, c) - x.at(0, c), segtab.at(1, c) - segtab.at(0, c), 1e-12);
    EXPECT_EQ(y.at(1, c), x.at(1, c));
  }
}

TEST(Embed, TooLongSequenceIsAnError) {
  auto cfg = tiny_config(Variant::kOrig);
  cfg.max_input_len = 3;
  const auto p = init_params(cfg, 1);
  ForwardContext ctx;
  EXPECT_THROW(embed_input(TokenSeq{{5, 6, 7, 8}, {}}, p, cfg, ctx), UsageError);
  EXPECT_THROW(embed_input(TokenSeq{}, p, cfg, ctx), UsageError);
}

TEST(SharedEncoder, SameTextEncodesIdentically) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 2);
  ForwardContext ctx;
  TokenSeq s{{5, 6, 7}, {1, 1, 1}};
  const auto enc = encode_shared(s, s, p, cfg, ctx);
  EXPECT_TRUE(bit_equal(enc.z_q, enc.z_d));
}

TEST(SharedEncoder, OutputShapesAndOrderSensitivity) {
  ModelConfig cfg = tiny_config(Variant::kGenex);
  cfg.d_model = 32;
  cfg.head_dim = 16;
  const auto p = init_params(cfg, 2);
  ForwardContext ctx;
  TokenSeq q{{5, 6, 7}, {0, 0, 0}};
  TokenSeq d{{8, 9, 10, 11, 12}, {1, 1, 1, 1, 1}};
  const auto enc = encode_shared(q, d, p, cfg, ctx);
  EXPECT_EQ(enc.z_q.shape(), (Shape{3, 32}));
  EXPECT_EQ(enc.z_d.shape(), (Shape{5, 32}));
  TokenSeq permuted{{12, 9, 10, 11, 8}, {1, 1, 1, 1, 1}};
  EXPECT_FALSE(bit_equal(enc.z_d, encode_shared(q, permuted, p, cfg, ctx).z_d));
}

TEST(QueryAttention, MaskAllowsQueriesAndSelf) {
  const auto m = qattn_mask(3, 4);
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 7u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m.allowed_in_row(i), 4u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_TRUE(m.allowed(i, j));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m.allowed(i, 3 + j), i == j);
  }
}

TEST(QueryAttention, SingleDocumentTokenWeightsSumToOne) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 5);
  AttentionTrace trace;
  ForwardContext ctx{false, nullptr, &trace};
  Rng rng(1);
  auto zq = Tensor::zeros({4, 8});
  auto zd = Tensor::zeros({1, 8});
  for (auto& v : zq.data()) v = rng.normal();
  for (auto& v : zd.data()) v = rng.normal();
  query_attention_encode(zq, zd, p, cfg, ctx);
  for (const char* head : {"qattn.0.attn.h0", "qattn.0.attn.h1"}) {
    const Tensor* w = trace.find(head);
    ASSERT_NE(w, nullptr);
    EXPECT_EQ(w->shape(), (Shape{1, 5}));
    double total = 0.0;
    for (double x : w->data()) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(QueryAttention, OtherDocumentRowsDoNotReachARow) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 5);
  ForwardContext ctx;
  Rng rng(9);
  auto zq = Tensor::zeros({3, 8});
  auto zd = Tensor::zeros({4, 8});
  for (auto& v : zq.data()) v = rng.normal();
  for (auto& v : zd.data()) v = rng.normal();
  const auto base = query_attention_encode(zq, zd, p, cfg, ctx);
  auto changed = Tensor::from_values({4, 8}, std::vector<double>(zd.data().begin(), zd.data().end()));
  for (std::size_t c = 0; c < 8; ++c) changed.data()[2 * 8 + c] += 3.0;
  const auto out = query_attention_encode(zq, changed, p, cfg, ctx);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      if (r == 2) continue;
      EXPECT_EQ(out.at(r, c), base.at(r, c));
    }
  }
}

TEST(QueryAttention, RandomShapesRespectStructure) {
  auto cfg = tiny_config(Variant::kGenex);
  cfg.n_layers_qattn = 2;
  const auto p = init_params(cfg, 11);
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(32);
    auto zq = Tensor::zeros({m, 8});
    auto zd = Tensor::zeros({n, 8});
    for (auto& v : zq.data()) v = rng.normal();
    for (auto& v : zd.data()) v = rng.normal();
    AttentionTrace trace;
    ForwardContext ctx{false, nullptr, &trace};
    query_attention_encode(zq, zd, p, cfg, ctx);
    ASSERT_EQ(trace.weights.size(), 4u);
    for (const auto& [name, w] : trace.weights) {
      for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < m + n; ++j) {
          total += w.at(i, j);
          if (j >= m && j - m != i) {
            ASSERT_EQ(w.at(i, j), 0.0) << name;
          }
        }
        ASSERT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(Masks, GenexDisallowsDocumentCopiesOfQueryIds) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto before = mask_fallback_count();
  const auto masks = build_masks(raw_split({7, 9}, {3, 7, 5}), cfg);
  EXPECT_EQ(masks.memory_allowed, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_FALSE(masks.fallback);
  EXPECT_EQ(mask_fallback_count(), before);
  EXPECT_EQ(masks.qattn, qattn_mask(2, 3));
}

TEST(Masks, NoOverlapLeavesEverythingAllowed) {
  const auto masks = build_masks(raw_split({1, 2}, {3, 4, 5}), tiny_config(Variant::kGenex));
  EXPECT_EQ(masks.memory_allowed, (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(Masks, FullyMaskedMemoryFallsBack) {
  const auto before = mask_fallback_count();
  const auto masks = build_masks(raw_split({7}, {7, 7}), tiny_config(Variant::kGenex));
  EXPECT_TRUE(masks.fallback);
  EXPECT_EQ(masks.memory_allowed, (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(mask_fallback_count(), before + 1);
}

TEST(Masks, SeparatorKeepsEncodedSplitSamplesUnmasked) {
  const auto s = sample_for(Variant::kGenex, {7}, {7, 7}, {5});
  const auto masks = build_masks(s, tiny_config(Variant::kGenex));
  EXPECT_FALSE(masks.fallback);
  EXPECT_EQ(masks.memory_allowed, (std::vector<std::uint8_t>{0, 0, 1}));
}

TEST(Masks, SegQToksMasksQueryPartAndOccurrences) {
  const auto s = sample_for(Variant::kSegQToks, {7, 9}, {3, 7, 5}, {5});
  // input [7, 9, SEP, 3, 7, 5]
  const auto masks = build_masks(s, tiny_config(Variant::kSegQToks));
  EXPECT_EQ(masks.memory_allowed, (std::vector<std::uint8_t>{0, 0, 0, 1, 0, 1}));
}

TEST(Masks, OrigAndSepQDocAllowEverything) {
  const auto o = build_masks(sample_for(Variant::kOrig, {7, 9}, {3, 7}, {5}), tiny_config(Variant::kOrig));
  EXPECT_EQ(o.memory_allowed, (std::vector<std::uint8_t>(5, 1)));
  const auto s = build_masks(sample_for(Variant::kSepQDoc, {7, 9}, {3, 7}, {5}), tiny_config(Variant::kSepQDoc));
  EXPECT_EQ(s.memory_allowed, (std::vector<std::uint8_t>(3, 1)));
}

TEST(Decoder, CausalOutputsIgnoreLaterTokens) {
  const auto cfg = tiny_config(Variant::kOrig);
  const auto p = init_params(cfg, 6);
  ForwardContext ctx;
  const auto memory = embed_input(TokenSeq{{5, 6, 7}, {1, 1, 1}}, p, cfg, ctx);
  const std::vector<std::uint8_t> allowed(3, 1);
  const std::vector<TokenId> a = {kBosId, 8, 9, 10}, b = {kBosId, 8, 11, 12};
  const auto la = decoder_forward(a, memory, allowed, p, cfg, ctx);
  const auto lb = decoder_forward(b, memory, allowed, p, cfg, ctx);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(la.at(t, v), lb.at(t, v));
  bool differ = false;
  for (std::size_t v = 0; v < 16; ++v) differ |= la.at(2, v) != lb.at(2, v);
  EXPECT_TRUE(differ);
}

TEST(Decoder, MaskedMemoryIsInvisible) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 6);
  AttentionTrace trace;
  ForwardContext ctx{false, nullptr, &trace};
  const auto memory = embed_input(TokenSeq{{5, 6, 7, 8}, {1, 1, 1, 1}}, p, cfg, ctx);
  const std::vector<std::uint8_t> allowed = {1, 0, 1, 0};
  const std::vector<TokenId> in = {kBosId, 9, 10};
  const auto base = decoder_forward(in, memory, allowed, p, cfg, ctx);
  for (const auto& [name, w] : trace.weights) {
    if (name.find(".cross.") == std::string::npos) continue;
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_EQ(w.at(t, 1), 0.0);
      EXPECT_EQ(w.at(t, 3), 0.0);
    }
  }
  auto noisy = Tensor::from_values(memory.shape(),
                                   std::vector<double>(memory.data().begin(), memory.data().end()));
  for (std::size_t c = 0; c < 8; ++c) {
    noisy.data()[1 * 8 + c] = 100.0 + static_cast<double>(c);
    noisy.data()[3 * 8 + c] = -50.0;
  }
  EXPECT_TRUE(bit_equal(base, decoder_forward(in, noisy, allowed, p, cfg, ctx)));
}

TEST(Forward, InitialLossNearLogVocab) {
  ModelConfig cfg;  // desk-scale default, V = 4096
  cfg.dropout = 0.0;
  const auto p = init_params(cfg, 1);
  ForwardContext ctx;
  const auto s = sample_for(cfg.variant, {100, 200}, {300, 100, 400, 500, 600}, {700, 800, 900});
  const double loss = model_forward(s, p, cfg, ctx).loss.item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.8 * std::log(4096.0));
  EXPECT_LT(loss, 1.2 * std::log(4096.0));
}

TEST(Forward, DeterministicUnderSeed) {
  for (Variant v : kAllVariants) {
    auto cfg = tiny_config(v);
    cfg.dropout = 0.1;
    const auto p = init_params(cfg, 2);
    const auto s = sample_for(v, {5, 6}, {7, 5, 8, 9}, {10, 11});
    Rng r1(77), r2(77);
    ForwardContext c1{true, &r1, nullptr}, c2{true, &r2, nullptr};
    const double a = model_forward(s, p, cfg, c1).loss.item();
    const double b = model_forward(s, p, cfg, c2).loss.item();
    EXPECT_EQ(a, b) << to_string(v);
    ForwardContext eval;
    EXPECT_EQ(model_forward(s, p, cfg, eval).loss.item(), model_forward(s, p, cfg, eval).loss.item());
  }
}

TEST(Forward, TrainModeNeedsRngWhenDropping) {
  auto cfg = tiny_config(Variant::kGenex);
  cfg.dropout = 0.1;
  const auto p = init_params(cfg, 2);
  ForwardContext ctx{true, nullptr, nullptr};
  EXPECT_THROW(model_forward(sample_for(cfg.variant, {5}, {6, 7}, {8}), p, cfg, ctx), UsageError);
}

TEST(Forward, MaskedMemoryGetsNoGradient) {
  const auto cfg = tiny_config(Variant::kGenex);
  const auto p = init_params(cfg, 3);
  ForwardContext ctx;
  const auto s = sample_for(cfg.variant, {5, 6}, {7, 5, 8, 6, 9}, {10, 11});
  auto enc = encode_memory(s, p, cfg, ctx);
  auto memory = enc.memory.detach();
  memory.set_requires_grad(true);
  const std::vector<TokenId> in = {kBosId, 10, 11}, gold = {10, 11, kEosId};
  const auto lp = decoder_forward(in, memory, enc.masks.memory_allowed, p, cfg, ctx);
  cross_entropy_smoothed(lp, gold, cfg.label_smoothing).backward();
  ASSERT_EQ(enc.masks.memory_allowed, (std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1}));
  const auto g = memory.grad();
  for (std::size_t r : {1, 3}) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(g[r * 8 + c], 0.0);
  }
  double other = 0.0;
  for (std::size_t c = 0; c < 8; ++c) other += std::abs(g[c]);
  EXPECT_GT(other, 0.0);
}

TEST(Forward, CountsTeacherForcedHits) {
  const auto cfg = tiny_config(Variant::kOrig);
  const auto p = init_params(cfg, 3);
  ForwardContext ctx;
  const auto s = sample_for(cfg.variant, {5}, {6, 7}, {8, 9});
  const auto r = model_forward(s, p, cfg, ctx);
  EXPECT_EQ(r.target_tokens, 3u);
  std::size_t hits = 0;
  const std::vector<TokenId> gold = {8, 9, kEosId};
  for (std::size_t t = 0; t < 3; ++t) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < 16; ++v)
      if (r.log_probs.at(t, v) > r.log_probs.at(t, best)) best = v;
    hits += static_cast<TokenId>(best) == gold[t];
  }
  EXPECT_EQ(r.correct_tokens, hits);
}

TEST(Forward, FullModelGradientMatchesFiniteDifferences) {
  const auto start = std::chrono::steady_clock::now();
  for (Variant v : kAllVariants) {
    const auto cfg = tiny_config(v);
    auto params = init_params(cfg, 4);
    // 3-token query, 5-token document; query ids recur in the document
    const auto s = sample_for(v, {5, 6, 7}, {8, 5, 9, 7, 10}, {11, 12});
    std::vector<Tensor> list;
    std::vector<std::string> names;
    for (auto& [name, t] : params) {
      t.set_requires_grad(true);
      list.push_back(t);
      names.push_back(name);
    }
    const LossFn loss = [&] {
      ForwardContext ctx;
      return model_forward(s, params, cfg, ctx).loss;
    };
    const auto report = finite_diff_check(loss, list, {}, names);
    EXPECT_TRUE(report.passed) << to_string(v) << " worst " << report.worst << " rel "
                               << report.max_rel_error;
    EXPECT_EQ(report.checked, count_parameters(params));
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
}
