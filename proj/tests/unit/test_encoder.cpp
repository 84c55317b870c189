#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hybridsa/encoder.hpp"
#include "hybridsa/error.hpp"
#include "temp_dir.hpp"

namespace hybridsa {
namespace {

using testing::check_gradients;
using testing::GradTarget;
using testing::random_matrix;
using testing::weighted_sum;

EncoderConfig tiny_config(std::size_t d = 6) {
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 12;
  cfg.max_positions = d;
  cfg.vocab_size = 10;
  cfg.dropout = 0.5;
  return cfg;
}

// Every parameter drawn from U(-0.5, 0.5) so the nonlinearities are exercised.
EncoderWeights random_weights(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderWeights w = make_encoder_weights(cfg);
  Rng rng(seed);
  for (Param* p : w.params()) {
    for (auto& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
  }
  return w;
}

AttentionParams random_attention(std::size_t hidden, Rng& rng) {
  AttentionParams p;
  for (Param* q : {&p.wq, &p.wk, &p.wv, &p.wo}) *q = Param("w", hidden, hidden);
  for (Param* q : {&p.bq, &p.bk, &p.bv, &p.bo}) *q = Param("b", 1, hidden);
  for (Param* q : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo}) {
    for (auto& v : q->value.values()) v = rng.uniform(-0.5, 0.5);
  }
  return p;
}

// ---------------------------------------------------------------- attention

TEST(Attention, SingletonAttendsToItself) {
  Rng rng(1);
  const auto p = random_attention(4, rng);
  AttentionCache cache;
  multi_head_attention(random_matrix(1, 4, rng), p, 2, {false}, &cache);
  for (const Matrix& probs : cache.probs) EXPECT_EQ(probs[0], 1.0);

  // One unmasked key among several.
  multi_head_attention(random_matrix(3, 4, rng), p, 2, {false, true, true}, &cache);
  for (const Matrix& probs : cache.probs) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(probs(i, 0), 1.0);
      EXPECT_EQ(probs(i, 1), 0.0);
      EXPECT_EQ(probs(i, 2), 0.0);
    }
  }
}

TEST(Attention, EqualScoresGiveUniformWeights) {
  Rng rng(2);
  auto p = random_attention(4, rng);
  p.wq.value.set_zero();
  p.wk.value.set_zero();
  AttentionCache cache;
  multi_head_attention(random_matrix(5, 4, rng), p, 2, {false, false, false, false, true}, &cache);
  for (const Matrix& probs : cache.probs) {
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(probs(i, j), 0.25);
      EXPECT_EQ(probs(i, 4), 0.0);
    }
  }
}

TEST(Attention, RowsAreDistributions) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_attention(8, rng);
    const std::size_t l = 1 + rng.below(7);
    std::vector<bool> mask(l, false);
    for (std::size_t j = 1; j < l; ++j) mask[j] = rng.uniform() < 0.3;
    AttentionCache cache;
    multi_head_attention(random_matrix(l, 8, rng, 3.0), p, 2, mask, &cache);
    for (const Matrix& probs : cache.probs) {
      for (std::size_t i = 0; i < l; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
          EXPECT_GE(probs(i, j), 0.0);
          sum += probs(i, j);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
      }
    }
  }
}

TEST(Attention, AllMaskedIsAnError) {
  Rng rng(4);
  const auto p = random_attention(4, rng);
  EXPECT_THROW(multi_head_attention(random_matrix(2, 4, rng), p, 2, {true, true}), DataError);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  auto p = random_attention(6, rng);
  Matrix x = random_matrix(4, 6, rng);
  const Matrix r = random_matrix(4, 6, rng);
  const std::vector<bool> mask = {false, false, true, false};
  Matrix dx;
  std::vector<Param*> ps = {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo};
  std::vector<GradTarget> targets;
  for (std::size_t i = 0; i < ps.size(); ++i) targets.push_back({"attn" + std::to_string(i), &ps[i]->value, &ps[i]->grad});
  targets.push_back({"x", &x, &dx});
  const auto rep = check_gradients(
      targets, [&] { return weighted_sum(multi_head_attention(x, p, 3, mask), r); },
      [&] {
        for (Param* q : ps) q->zero_grad();
        AttentionCache cache;
        multi_head_attention(x, p, 3, mask, &cache);
        dx = multi_head_attention_backward(r, p, 3, cache);
      });
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

// --------------------------------------------------------------- layer norm

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  const Matrix y = layer_norm(Matrix(1, 8, 3.7), Matrix(1, 8, 1.0), Matrix(1, 8), 1e-5);
  for (double v : y.values()) EXPECT_LT(std::abs(v), 1e-2);
}

TEST(LayerNorm, ZeroGainGivesShift) {
  Rng rng(6);
  const Matrix beta = random_matrix(1, 8, rng);
  const Matrix y = layer_norm(random_matrix(3, 8, rng), Matrix(1, 8), beta, 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y(r, c), beta[c]);
  }
}

TEST(LayerNorm, StandardizesRandomRows) {
  Rng rng(7);
  const Matrix y = layer_norm(random_matrix(20, 64, rng, 5.0), Matrix(1, 64, 1.0), Matrix(1, 64), 1e-5);
  for (std::size_t r = 0; r < 20; ++r) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < 64; ++c) mean += y(r, c);
    mean /= 64.0;
    for (std::size_t c = 0; c < 64; ++c) sq += (y(r, c) - mean) * (y(r, c) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 64.0, 1.0, 1e-3);
  }
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  Param gamma("g", 1, 5), beta("b", 1, 5);
  gamma.value = random_matrix(1, 5, rng);
  beta.value = random_matrix(1, 5, rng);
  Matrix x = random_matrix(3, 5, rng);
  const Matrix r = random_matrix(3, 5, rng);
  Matrix dx;
  const auto rep = check_gradients(
      {{"gamma", &gamma.value, &gamma.grad}, {"beta", &beta.value, &beta.grad}, {"x", &x, &dx}},
      [&] { return weighted_sum(layer_norm(x, gamma.value, beta.value, 1e-5), r); },
      [&] {
        gamma.zero_grad();
        beta.zero_grad();
        LayerNormCache cache;
        layer_norm(x, gamma.value, beta.value, 1e-5, &cache);
        dx = layer_norm_backward(r, gamma, beta, cache);
      });
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

// --------------------------------------------------------------------- gelu

TEST(Gelu, FixedPointsAndDerivative) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-4);
  EXPECT_NEAR(gelu(-10.0), 0.0, 1e-4);
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double fd = (gelu(x + 1e-5) - gelu(x - 1e-5)) / 2e-5;
    EXPECT_LT(testing::relative_error(gelu_derivative(x), fd), 1e-6) << x;
  }
}

// ------------------------------------------------------------------ encoder

TEST(Encoder, OutputShapeAtFullSize) {
  EncoderConfig cfg;
  cfg.vocab_size = 50;
  cfg.max_positions = 100;
  const auto w = init_encoder_weights(cfg, 0);
  std::vector<std::int32_t> ids(100, 0);
  for (std::size_t i = 0; i < 30; ++i) ids[i] = static_cast<std::int32_t>(2 + i);
  const auto out = encoder_forward(ids, 30, w, {});
  EXPECT_EQ(out.values.rows(), 100u);
  EXPECT_EQ(out.values.cols(), 128u);
  EXPECT_EQ(out.masked.size(), 100u);
  EXPECT_FALSE(out.masked[29]);
  EXPECT_TRUE(out.masked[30]);
}

TEST(Encoder, InferenceDeterministicAndDropoutOnlyInTraining) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 9);
  const std::vector<std::int32_t> ids = {2, 5, 7, 3, 0, 0};
  const auto a = encoder_forward(ids, 4, w, {});
  EXPECT_EQ(a.values, encoder_forward(ids, 4, w, {}).values);
  Rng rng(1);
  const auto t = encoder_forward(ids, 4, w, {true, &rng});
  EXPECT_NE(a.values, t.values);
}

TEST(Encoder, RejectsBadInputs) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 10);
  EXPECT_THROW(encoder_forward({2, 10, 0, 0, 0, 0}, 2, w, {}), DataError);
  EXPECT_THROW(encoder_forward(std::vector<std::int32_t>(7, 2), 7, w, {}), DataError);
  EXPECT_THROW(encoder_forward({2, 3, 0, 0, 0, 0}, 0, w, {}), DataError);
  EncoderConfig bad = cfg;
  bad.heads = 3;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Encoder, InitIsSeededAndShaped) {
  const auto cfg = tiny_config();
  const auto a = init_encoder_weights(cfg, 4);
  const auto b = init_encoder_weights(cfg, 4);
  const auto c = init_encoder_weights(cfg, 5);
  const auto pa = a.params();
  const auto pb = b.params();
  const auto pc = c.params();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    any_diff = any_diff || pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(any_diff);
  for (double v : a.final_gamma.value.values()) EXPECT_EQ(v, 1.0);
  for (double v : a.layers[0].b1.value.values()) EXPECT_EQ(v, 0.0);
}

TEST(EncoderWeightsFile, RoundTripIsBitwise) {
  testing::TempDir dir("enc");
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 11);
  save_encoder_weights(w, dir / "w.bin");
  const auto back = load_encoder_weights(dir / "w.bin", cfg);
  const auto pw = w.params();
  const auto pb = back.params();
  ASSERT_EQ(pw.size(), pb.size());
  for (std::size_t i = 0; i < pw.size(); ++i) EXPECT_EQ(pw[i]->value, pb[i]->value);
  const std::vector<std::int32_t> ids = {4, 2, 9, 0, 0, 0};
  EXPECT_EQ(encoder_forward(ids, 3, w, {}).values, encoder_forward(ids, 3, back, {}).values);
}

TEST(EncoderWeightsFile, ShapeMismatchAndCorruption) {
  testing::TempDir dir("enc");
  EncoderConfig small;
  small.hidden = 64;
  small.vocab_size = 20;
  save_encoder_weights(init_encoder_weights(small, 0), dir / "small.bin");
  EncoderConfig full = small;
  full.hidden = 128;
  try {
    load_encoder_weights(dir / "small.bin", full);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos) << e.what();
  }

  const auto cfg = tiny_config();
  const std::string bytes = serialize_encoder_weights(random_weights(cfg, 12));
  EXPECT_THROW(deserialize_encoder_weights(bytes.substr(0, bytes.size() - 5), cfg), DataError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_encoder_weights(bad_magic, cfg), DataError);
  EXPECT_THROW(load_encoder_weights(dir / "absent.bin", cfg), DataError);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  const auto cfg = tiny_config();
  auto w = random_weights(cfg, 13);
  Rng rng(14);
  const Matrix r = random_matrix(6, 8, rng);
  const std::vector<std::int32_t> ids = {3, 7, 2, 7, 0, 0};
  const auto ps = w.params();
  std::vector<GradTarget> targets;
  for (Param* p : ps) targets.push_back({p->name, &p->value, &p->grad});
  const auto rep = check_gradients(
      targets, [&] { return weighted_sum(encoder_forward(ids, 4, w, {}).values, r); },
      [&] {
        for (Param* p : ps) p->zero_grad();
        EncoderCache cache;
        encoder_forward(ids, 4, w, {}, &cache);
        encoder_backward(r, w, cache);
      });
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  EXPECT_GT(rep.checked, 500u);
}

TEST(Encoder, ZeroedOutputProjectionsLeaveNormalizedEmbeddings) {
  const auto cfg = tiny_config();
  auto w = random_weights(cfg, 15);
  for (auto& l : w.layers) {
    for (Param* p : {&l.attention.wo, &l.attention.bo, &l.w2, &l.b2}) p->value.set_zero();
  }
  const std::vector<std::int32_t> ids = {5, 2, 8, 3, 1, 0};
  const std::size_t true_length = 5;
  Matrix e(6, cfg.hidden);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t c = 0; c < cfg.hidden; ++c) {
      e(t, c) = w.token_embedding.value(static_cast<std::size_t>(ids[t]), c) + w.position_embedding.value(t, c);
    }
  }
  const Matrix expect = layer_norm(e, w.final_gamma.value, w.final_beta.value, cfg.layer_norm_eps);
  const Matrix got = encoder_forward(ids, true_length, w, {}).values;
  for (std::size_t t = 0; t < true_length; ++t) {
    for (std::size_t c = 0; c < cfg.hidden; ++c) EXPECT_EQ(got(t, c), expect(t, c));
  }
  for (std::size_t c = 0; c < cfg.hidden; ++c) EXPECT_EQ(got(5, c), 0.0);
}

// Property: the id at a masked position never changes an unmasked output row.
TEST(Encoder, PadIdsDoNotLeakIntoUnmaskedRows) {
  const auto cfg = tiny_config();
  const auto w = random_weights(cfg, 16);
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 1 + rng.below(5);
    std::vector<std::int32_t> ids(6, 0);
    for (std::size_t t = 0; t < len; ++t) ids[t] = static_cast<std::int32_t>(1 + rng.below(9));
    const Matrix base = encoder_forward(ids, len, w, {}).values;
    auto perturbed = ids;
    perturbed[len + rng.below(6 - len)] = static_cast<std::int32_t>(1 + rng.below(9));
    const Matrix other = encoder_forward(perturbed, len, w, {}).values;
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < cfg.hidden; ++c) ASSERT_EQ(base(t, c), other(t, c));
    }
  }
}

// Masked rows carry no gradient: the loss weight on them does not matter.
TEST(Encoder, MaskedRowsCarryNoGradient) {
  const auto cfg = tiny_config();
  auto w = random_weights(cfg, 18);
  Rng rng(19);
  Matrix r = random_matrix(6, 8, rng);
  const std::vector<std::int32_t> ids = {2, 3, 4, 0, 0, 0};
  auto grads = [&] {
    for (Param* p : w.params()) p->zero_grad();
    EncoderCache cache;
    encoder_forward(ids, 3, w, {}, &cache);
    encoder_backward(r, w, cache);
    std::vector<Matrix> out;
    for (Param* p : w.params()) out.push_back(p->grad);
    return out;
  };
  const auto before = grads();
  for (std::size_t c = 0; c < 8; ++c) r(4, c) += 10.0;
  EXPECT_EQ(grads(), before);
}

}  // namespace
}  // namespace hybridsa
