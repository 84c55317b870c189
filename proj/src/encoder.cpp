#include "hybridsa/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "hybridsa/binary_io.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/simd/kernels.hpp"

namespace hybridsa {

namespace {
constexpr std::string_view kEncoderMagic{"HSAENCW\0", 8};
constexpr std::uint32_t kEncoderVersion = 1;
}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 1) throw UsageError("encoder needs at least one layer");
  if (hidden < 1 || heads < 1 || hidden % heads != 0) {
    throw UsageError("encoder hidden size " + std::to_string(hidden) +
                     " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (ffn_dim < 1) throw UsageError("encoder feed-forward width must be >= 1");
  if (max_positions < 1) throw UsageError("encoder max_positions must be >= 1");
  if (vocab_size < 2) throw UsageError("encoder vocabulary must include pad and unk");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("encoder dropout must lie in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw UsageError("layer norm epsilon must be positive");
}

bool EncoderConfig::same_shape(const EncoderConfig& o) const {
  return num_layers == o.num_layers && hidden == o.hidden && heads == o.heads &&
         max_positions == o.max_positions && ffn_dim == o.ffn_dim && vocab_size == o.vocab_size;
}

std::vector<Param*> EncoderWeights::params() {
  std::vector<Param*> out{&token_embedding, &position_embedding};
  for (auto& l : layers) {
    auto& a = l.attention;
    for (Param* p : {&l.ln1_gamma, &l.ln1_beta, &a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo,
                     &a.bo, &l.ln2_gamma, &l.ln2_beta, &l.w1, &l.b1, &l.w2, &l.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_gamma);
  out.push_back(&final_beta);
  return out;
}

std::vector<const Param*> EncoderWeights::params() const {
  auto mutable_params = const_cast<EncoderWeights*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

EncoderWeights make_encoder_weights(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.hidden;
  EncoderWeights w;
  w.config = cfg;
  w.token_embedding = Param("encoder.token_embedding", cfg.vocab_size, h);
  w.position_embedding = Param("encoder.position_embedding", cfg.max_positions, h);
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    const std::string pre = "encoder.layer" + std::to_string(i) + ".";
    EncoderLayerWeights l;
    l.ln1_gamma = Param(pre + "ln1.gamma", 1, h);
    l.ln1_beta = Param(pre + "ln1.beta", 1, h);
    l.attention.wq = Param(pre + "attn.wq", h, h);
    l.attention.bq = Param(pre + "attn.bq", 1, h);
    l.attention.wk = Param(pre + "attn.wk", h, h);
    l.attention.bk = Param(pre + "attn.bk", 1, h);
    l.attention.wv = Param(pre + "attn.wv", h, h);
    l.attention.bv = Param(pre + "attn.bv", 1, h);
    l.attention.wo = Param(pre + "attn.wo", h, h);
    l.attention.bo = Param(pre + "attn.bo", 1, h);
    l.ln2_gamma = Param(pre + "ln2.gamma", 1, h);
    l.ln2_beta = Param(pre + "ln2.beta", 1, h);
    l.w1 = Param(pre + "ffn.w1", h, cfg.ffn_dim);
    l.b1 = Param(pre + "ffn.b1", 1, cfg.ffn_dim);
    l.w2 = Param(pre + "ffn.w2", cfg.ffn_dim, h);
    l.b2 = Param(pre + "ffn.b2", 1, h);
    l.ln1_gamma.value.fill(1.0);
    l.ln2_gamma.value.fill(1.0);
    w.layers.push_back(std::move(l));
  }
  w.final_gamma = Param("encoder.final.gamma", 1, h);
  w.final_beta = Param("encoder.final.beta", 1, h);
  w.final_gamma.value.fill(1.0);
  return w;
}

EncoderWeights init_encoder_weights(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderWeights w = make_encoder_weights(cfg);
  Rng rng(seed);
  for (Param* p : w.params()) {
    // Gains and biases are row vectors; everything else is a weight matrix.
    if (p->value.rows() == 1) continue;
    fill_normal(p->value, rng, 0.02);
  }
  return w;
}

std::string serialize_encoder_weights(const EncoderWeights& w) {
  const auto& c = w.config;
  BinaryWriter out;
  out.bytes(kEncoderMagic);
  out.u32(kEncoderVersion);
  for (std::size_t v : {c.num_layers, c.hidden, c.heads, c.max_positions, c.ffn_dim, c.vocab_size}) {
    out.u32(static_cast<std::uint32_t>(v));
  }
  out.f64(c.dropout);
  out.f64(c.layer_norm_eps);
  for (const Param* p : w.params()) out.matrix_values(p->value);
  return out.take();
}

EncoderWeights deserialize_encoder_weights(std::string_view bytes, const EncoderConfig& expected) {
  BinaryReader in(bytes, "encoder weights");
  if (in.remaining() < kEncoderMagic.size() || in.bytes(kEncoderMagic.size()) != kEncoderMagic) {
    throw DataError("corrupt encoder weights: bad magic bytes");
  }
  const std::uint32_t version = in.u32();
  if (version != kEncoderVersion) {
    throw DataError("encoder weights version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kEncoderVersion) + ")");
  }
  EncoderConfig cfg = expected;
  cfg.num_layers = in.u32();
  cfg.hidden = in.u32();
  cfg.heads = in.u32();
  cfg.max_positions = in.u32();
  cfg.ffn_dim = in.u32();
  cfg.vocab_size = in.u32();
  cfg.dropout = in.f64();
  cfg.layer_norm_eps = in.f64();
  if (!cfg.same_shape(expected)) {
    throw DataError("encoder weights shape mismatch: file has layers=" + std::to_string(cfg.num_layers) +
                    " hidden=" + std::to_string(cfg.hidden) + " heads=" + std::to_string(cfg.heads) +
                    " positions=" + std::to_string(cfg.max_positions) +
                    " ffn=" + std::to_string(cfg.ffn_dim) + " vocab=" + std::to_string(cfg.vocab_size) +
                    ", configuration expects layers=" + std::to_string(expected.num_layers) +
                    " hidden=" + std::to_string(expected.hidden) + " heads=" +
                    std::to_string(expected.heads) + " positions=" +
                    std::to_string(expected.max_positions) + " ffn=" +
                    std::to_string(expected.ffn_dim) + " vocab=" + std::to_string(expected.vocab_size));
  }
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("corrupt encoder weights: ") + e.what());
  }
  EncoderWeights w = make_encoder_weights(cfg);
  for (Param* p : w.params()) in.matrix_values(p->value);
  in.expect_end();
  return w;
}

void save_encoder_weights(const EncoderWeights& w, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_encoder_weights(w));
}

EncoderWeights load_encoder_weights(const std::filesystem::path& path, const EncoderConfig& expected) {
  return deserialize_encoder_weights(read_file_bytes(path), expected);
}

// ------------------------------------------------------------ building blocks

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormCache* cache) {
  const std::size_t n = x.cols();
  if (gamma.size() != n || beta.size() != n) throw std::invalid_argument("layer_norm width mismatch");
  Matrix y(x.rows(), n);
  Matrix normalized(x.rows(), n);
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = rstd;
    for (std::size_t c = 0; c < n; ++c) {
      normalized(r, c) = (in[c] - mean) * rstd;
      y(r, c) = normalized(r, c) * gamma[c] + beta[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, Param& gamma, Param& beta, const LayerNormCache& cache) {
  const std::size_t n = dy.cols();
  const auto width = static_cast<double>(n);
  Matrix dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto g = dy.row(r);
    const auto xhat = cache.normalized.row(r);
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      gamma.grad[c] += g[c] * xhat[c];
      beta.grad[c] += g[c];
      dxhat[c] = g[c] * gamma.value[c];
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * xhat[c];
    }
    mean_d /= width;
    mean_dx /= width;
    for (std::size_t c = 0; c < n; ++c) {
      dx(r, c) = cache.inv_std[r] * (dxhat[c] - mean_d - xhat[c] * mean_dx);
    }
  }
  return dx;
}

namespace {

Matrix affine(const Matrix& x, const Param& w, const Param& b) {
  Matrix y;
  gemm(x, Trans::kNo, w.value, Trans::kNo, y, false);
  add_row_vector(y, b.value);
  return y;
}

// dW += xᵀ·dy, db += colsum(dy); returns dy·Wᵀ.
Matrix affine_backward(const Matrix& dy, const Matrix& x, Param& w, Param& b) {
  gemm(x, Trans::kYes, dy, Trans::kNo, w.grad, true);
  accumulate_column_sums(dy, b.grad);
  Matrix dx;
  gemm(dy, Trans::kNo, w.value, Trans::kYes, dx, false);
  return dx;
}

}  // namespace

Matrix multi_head_attention(const Matrix& x, const AttentionParams& p, std::size_t heads,
                            const std::vector<bool>& key_masked, AttentionCache* cache) {
  const std::size_t length = x.rows();
  const std::size_t hidden = x.cols();
  if (p.wq.value.rows() != hidden || hidden % heads != 0) {
    throw std::invalid_argument("attention shape mismatch");
  }
  if (key_masked.size() != length) throw std::invalid_argument("attention mask length mismatch");
  if (std::all_of(key_masked.begin(), key_masked.end(), [](bool m) { return m; })) {
    throw DataError("attention over an all-masked sequence");
  }
  const std::size_t dh = hidden / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kern = simd::kernels();

  Matrix q = affine(x, p.wq, p.bq);
  Matrix k = affine(x, p.wk, p.bk);
  Matrix v = affine(x, p.wv, p.bv);
  Matrix context(length, hidden);
  std::vector<Matrix> probs(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Matrix scores(length, length);
    kern.gemm_nt(length, length, dh, q.data() + off, hidden, k.data() + off, hidden, scores.data(),
                 length);
    for (std::size_t i = 0; i < length; ++i) {
      auto row = scores.row(i);
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < length; ++j) {
        row[j] = key_masked[j] ? -std::numeric_limits<double>::infinity() : row[j] * scale;
        peak = std::max(peak, row[j]);
      }
      double total = 0.0;
      for (double& s : row) {
        s = std::exp(s - peak);
        total += s;
      }
      for (double& s : row) s /= total;
    }
    kern.gemm_nn(length, dh, length, scores.data(), length, v.data() + off, hidden,
                 context.data() + off, hidden);
    probs[h] = std::move(scores);
  }
  Matrix out = affine(context, p.wo, p.bo);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

Matrix multi_head_attention_backward(const Matrix& dy, AttentionParams& p, std::size_t heads,
                                     const AttentionCache& cache) {
  const std::size_t length = dy.rows();
  const std::size_t hidden = dy.cols();
  const std::size_t dh = hidden / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kern = simd::kernels();

  const Matrix dcontext = affine_backward(dy, cache.context, p.wo, p.bo);
  Matrix dq(length, hidden);
  Matrix dk(length, hidden);
  Matrix dv(length, hidden);
  Matrix dprobs(length, length);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix& probs = cache.probs[h];
    dprobs.set_zero();
    kern.gemm_nt(length, length, dh, dcontext.data() + off, hidden, cache.v.data() + off, hidden,
                 dprobs.data(), length);
    kern.gemm_tn(length, dh, length, probs.data(), length, dcontext.data() + off, hidden,
                 dv.data() + off, hidden);
    // Softmax backward, then the 1/sqrt(dh) scaling.
    for (std::size_t i = 0; i < length; ++i) {
      const auto pr = probs.row(i);
      auto dp = dprobs.row(i);
      double inner = 0.0;
      for (std::size_t j = 0; j < length; ++j) inner += pr[j] * dp[j];
      for (std::size_t j = 0; j < length; ++j) dp[j] = pr[j] * (dp[j] - inner) * scale;
    }
    kern.gemm_nn(length, dh, length, dprobs.data(), length, cache.k.data() + off, hidden,
                 dq.data() + off, hidden);
    kern.gemm_tn(length, dh, length, dprobs.data(), length, cache.q.data() + off, hidden,
                 dk.data() + off, hidden);
  }
  Matrix dx = affine_backward(dq, cache.input, p.wq, p.bq);
  add_in_place(dx, affine_backward(dk, cache.input, p.wk, p.bk));
  add_in_place(dx, affine_backward(dv, cache.input, p.wv, p.bv));
  return dx;
}

// -------------------------------------------------------------------- encoder

SequenceEmbedding encoder_forward(const std::vector<std::int32_t>& ids, std::size_t mask_length,
                                  const EncoderWeights& w, const ForwardContext& ctx,
                                  EncoderCache* cache) {
  const auto& cfg = w.config;
  const std::size_t length = ids.size();
  if (length > cfg.max_positions) {
    throw DataError("sequence length " + std::to_string(length) + " exceeds encoder max_positions " +
                    std::to_string(cfg.max_positions));
  }
  if (mask_length < 1) throw DataError("encoder input has no unmasked positions");
  if (ctx.train && cfg.dropout > 0.0 && ctx.rng == nullptr) {
    throw std::invalid_argument("training forward pass needs a random stream");
  }

  std::vector<bool> masked(length);
  for (std::size_t t = 0; t < length; ++t) masked[t] = t >= mask_length;

  Matrix x(length, cfg.hidden);
  for (std::size_t t = 0; t < length; ++t) {
    const std::int32_t id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " out of range for encoder vocabulary of " +
                      std::to_string(cfg.vocab_size));
    }
    const auto tok = w.token_embedding.value.row(static_cast<std::size_t>(id));
    const auto pos = w.position_embedding.value.row(t);
    auto dst = x.row(t);
    for (std::size_t c = 0; c < cfg.hidden; ++c) dst[c] = tok[c] + pos[c];
  }

  if (cache) {
    cache->ids = ids;
    cache->masked = masked;
    cache->layers.assign(cfg.num_layers, {});
  }
  Rng scratch(0);
  Rng& rng = ctx.rng ? *ctx.rng : scratch;

  for (std::size_t li = 0; li < cfg.num_layers; ++li) {
    const auto& lw = w.layers[li];
    EncoderLayerCache local;
    EncoderLayerCache& lc = cache ? cache->layers[li] : local;

    lc.input = x;
    const Matrix a = layer_norm(x, lw.ln1_gamma.value, lw.ln1_beta.value, cfg.layer_norm_eps, &lc.ln1);
    const Matrix attn = multi_head_attention(a, lw.attention, cfg.heads, masked, &lc.attention);
    add_in_place(x, dropout(attn, cfg.dropout, ctx.train, rng, &lc.attention_mask));

    lc.mid = x;
    lc.ffn_input = layer_norm(x, lw.ln2_gamma.value, lw.ln2_beta.value, cfg.layer_norm_eps, &lc.ln2);
    lc.ffn_preact = affine(lc.ffn_input, lw.w1, lw.b1);
    lc.ffn_hidden = lc.ffn_preact;
    for (double& v : lc.ffn_hidden.values()) v = gelu(v);
    const Matrix ffn = affine(lc.ffn_hidden, lw.w2, lw.b2);
    add_in_place(x, dropout(ffn, cfg.dropout, ctx.train, rng, &lc.ffn_mask));
  }

  LayerNormCache local_final;
  SequenceEmbedding out{layer_norm(x, w.final_gamma.value, w.final_beta.value, cfg.layer_norm_eps,
                                   cache ? &cache->final_norm : &local_final),
                        masked};
  for (std::size_t t = mask_length; t < length; ++t) {
    std::fill(out.values.row(t).begin(), out.values.row(t).end(), 0.0);
  }
  return out;
}

void encoder_backward(const Matrix& d_output, EncoderWeights& w, const EncoderCache& cache) {
  const auto& cfg = w.config;
  const std::size_t length = d_output.rows();

  Matrix dy = d_output;
  for (std::size_t t = 0; t < length; ++t) {
    if (cache.masked[t]) std::fill(dy.row(t).begin(), dy.row(t).end(), 0.0);
  }
  Matrix dx = layer_norm_backward(dy, w.final_gamma, w.final_beta, cache.final_norm);

  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    auto& lw = w.layers[li];
    const auto& lc = cache.layers[li];

    // Feed-forward block: x_out = mid + drop(ffn(LN2(mid))).
    const Matrix dffn = dropout_backward(dx, lc.ffn_mask);
    Matrix dhidden = affine_backward(dffn, lc.ffn_hidden, lw.w2, lw.b2);
    for (std::size_t i = 0; i < dhidden.size(); ++i) dhidden[i] *= gelu_derivative(lc.ffn_preact[i]);
    const Matrix dffn_in = affine_backward(dhidden, lc.ffn_input, lw.w1, lw.b1);
    add_in_place(dx, layer_norm_backward(dffn_in, lw.ln2_gamma, lw.ln2_beta, lc.ln2));

    // Attention block: mid = input + drop(attn(LN1(input))).
    const Matrix dattn = dropout_backward(dx, lc.attention_mask);
    const Matrix da = multi_head_attention_backward(dattn, lw.attention, cfg.heads, lc.attention);
    add_in_place(dx, layer_norm_backward(da, lw.ln1_gamma, lw.ln1_beta, lc.ln1));
  }

  for (std::size_t t = 0; t < length; ++t) {
    const auto g = dx.row(t);
    auto tok = w.token_embedding.grad.row(static_cast<std::size_t>(cache.ids[t]));
    auto pos = w.position_embedding.grad.row(t);
    for (std::size_t c = 0; c < cfg.hidden; ++c) {
      tok[c] += g[c];
      pos[c] += g[c];
    }
  }
}

}  // namespace hybridsa
