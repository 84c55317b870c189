#pragma once

// Miniature BERT-style transformer encoder with full backward pass.
//
// Layout (pre-normalization residual blocks):
//   e   = token_embedding[ids] + position_embedding[0..d)
//   per layer:  x += dropout(attention(LN1(x)))
//               x += dropout(W2 · gelu(W1 · LN2(x) + b1) + b2)
//   out = LN_final(x), rows at padded positions set to zero.
// Padded positions (index >= true_length) are masked out of every attention
// key set, so their token ids cannot influence the other rows.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "hybridsa/layers.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa {

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t hidden = 128;
  std::size_t heads = 2;
  std::size_t max_positions = kDefaultSequenceLength;
  std::size_t ffn_dim = 512;
  std::size_t vocab_size = 0;
  double dropout = 0.5;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return hidden / heads; }
  /// Throws UsageError on inconsistent sizes.
  void validate() const;
  bool same_shape(const EncoderConfig& other) const;
};

struct AttentionParams {
  Param wq, bq, wk, bk, wv, bv, wo, bo;  // W: hidden x hidden (x · W), b: 1 x hidden
};

struct EncoderLayerWeights {
  Param ln1_gamma, ln1_beta;
  AttentionParams attention;
  Param ln2_gamma, ln2_beta;
  Param w1, b1;  // hidden x ffn, 1 x ffn
  Param w2, b2;  // ffn x hidden, 1 x hidden
};

struct EncoderWeights {
  EncoderConfig config;
  Param token_embedding;     // vocab x hidden
  Param position_embedding;  // max_positions x hidden
  std::vector<EncoderLayerWeights> layers;
  Param final_gamma, final_beta;

  /// Every parameter in the file's declared order.
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
};

/// Zero-initialized weights of the configured shape (gains set to one).
EncoderWeights make_encoder_weights(const EncoderConfig& cfg);

/// Matrices from normal(0, 0.02), biases zero, normalization gains one.
EncoderWeights init_encoder_weights(const EncoderConfig& cfg, std::uint64_t seed);

/// Little-endian file: magic "HSAENCW\0", u32 version, u32 layers, hidden,
/// heads, max_positions, ffn_dim, vocab_size, f64 dropout, f64 eps, then every
/// array of params() as row-major f64.
std::string serialize_encoder_weights(const EncoderWeights& w);
EncoderWeights deserialize_encoder_weights(std::string_view bytes, const EncoderConfig& expected);
void save_encoder_weights(const EncoderWeights& w, const std::filesystem::path& path);
/// Throws DataError on a corrupt file or a shape that differs from `expected`.
EncoderWeights load_encoder_weights(const std::filesystem::path& path, const EncoderConfig& expected);

// ------------------------------------------------------------ building blocks

double gelu(double x);
double gelu_derivative(double x);

struct LayerNormCache {
  Matrix normalized;  // x-hat per row
  std::vector<double> inv_std;
};

/// Row-wise (x - mean) / sqrt(var + eps) * gamma + beta.
Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormCache* cache = nullptr);
Matrix layer_norm_backward(const Matrix& dy, Param& gamma, Param& beta, const LayerNormCache& cache);

struct AttentionCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, L x L
  Matrix context;             // L x hidden, heads concatenated
};

/// Scaled dot-product attention over `heads` heads. key_masked[j] excludes
/// key j from every attention row. Throws when every key is masked.
Matrix multi_head_attention(const Matrix& x, const AttentionParams& p, std::size_t heads,
                            const std::vector<bool>& key_masked, AttentionCache* cache = nullptr);
Matrix multi_head_attention_backward(const Matrix& dy, AttentionParams& p, std::size_t heads,
                                     const AttentionCache& cache);

// -------------------------------------------------------------------- encoder

struct SequenceEmbedding {
  Matrix values;             // d x hidden
  std::vector<bool> masked;  // per position
};

struct EncoderLayerCache {
  Matrix input;
  LayerNormCache ln1;
  AttentionCache attention;
  Matrix attention_mask;
  Matrix mid;
  LayerNormCache ln2;
  Matrix ffn_input;
  Matrix ffn_preact;
  Matrix ffn_hidden;
  Matrix ffn_mask;
};

struct EncoderCache {
  std::vector<std::int32_t> ids;
  std::vector<bool> masked;
  std::vector<EncoderLayerCache> layers;
  LayerNormCache final_norm;
};

/// Positions >= mask_length are masked. mask_length must be >= 1.
SequenceEmbedding encoder_forward(const std::vector<std::int32_t>& ids, std::size_t mask_length,
                                  const EncoderWeights& w, const ForwardContext& ctx,
                                  EncoderCache* cache = nullptr);

inline SequenceEmbedding encoder_forward(const TokenSequence& tokens, const EncoderWeights& w,
                                         const ForwardContext& ctx, EncoderCache* cache = nullptr) {
  return encoder_forward(tokens.ids, tokens.true_length, w, ctx, cache);
}

/// Accumulates gradients for every encoder parameter, including the
/// token and position embedding rows that were used.
void encoder_backward(const Matrix& d_output, EncoderWeights& w, const EncoderCache& cache);

}  // namespace hybridsa
