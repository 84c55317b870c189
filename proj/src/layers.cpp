#include "hybridsa/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hybridsa/error.hpp"
#include "hybridsa/simd/kernels.hpp"

namespace hybridsa {

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
}

void fill_glorot(Matrix& m, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix relu_backward(const Matrix& dy, const Matrix& x) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

// ------------------------------------------------------------------ conv1d

Conv1DParams::Conv1DParams(std::size_t h, std::size_t k, std::size_t f, const std::string& prefix)
    : width(h),
      in_features(k),
      filters(f),
      weight(prefix + ".weight", f, h * k),
      bias(prefix + ".bias", 1, f) {
  if (h < 1 || k < 1 || f < 1) throw UsageError("conv1d needs width, features and filters >= 1");
}

void Conv1DParams::init(Rng& rng) {
  fill_glorot(weight.value, rng, width * in_features, width * filters);
  bias.value.set_zero();
}

Matrix conv1d_forward(const Matrix& x, const Conv1DParams& p, Conv1DCache* cache) {
  if (x.cols() != p.in_features) {
    throw std::invalid_argument("conv1d expects " + std::to_string(p.in_features) +
                                " input features, got " + std::to_string(x.cols()));
  }
  if (x.rows() < 1) throw std::invalid_argument("conv1d needs a non-empty sequence");
  const std::size_t length = x.rows();
  const std::size_t k = p.in_features;
  const std::size_t pad_left = (p.width - 1) / 2;

  Matrix patches(length, p.width * k);
  for (std::size_t i = 0; i < length; ++i) {
    auto dst = patches.row(i);
    for (std::size_t tap = 0; tap < p.width; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + tap) -
                                 static_cast<std::ptrdiff_t>(pad_left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
      const auto in = x.row(static_cast<std::size_t>(src));
      std::copy(in.begin(), in.end(), dst.begin() + static_cast<std::ptrdiff_t>(tap * k));
    }
  }
  Matrix preact;
  gemm(patches, Trans::kNo, p.weight.value, Trans::kYes, preact, false);
  add_row_vector(preact, p.bias.value);
  Matrix out = relu(preact);
  if (cache) {
    cache->patches = std::move(patches);
    cache->preact = std::move(preact);
  }
  return out;
}

Matrix conv1d_backward(const Matrix& dy, Conv1DParams& p, const Conv1DCache& cache) {
  const Matrix dz = relu_backward(dy, cache.preact);
  gemm(dz, Trans::kYes, cache.patches, Trans::kNo, p.weight.grad, true);
  accumulate_column_sums(dz, p.bias.grad);

  Matrix dpatches;
  gemm(dz, Trans::kNo, p.weight.value, Trans::kNo, dpatches, false);
  const std::size_t length = dz.rows();
  const std::size_t k = p.in_features;
  const std::size_t pad_left = (p.width - 1) / 2;
  Matrix dx(length, k);
  for (std::size_t i = 0; i < length; ++i) {
    const auto src_row = dpatches.row(i);
    for (std::size_t tap = 0; tap < p.width; ++tap) {
      const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(i + tap) -
                                 static_cast<std::ptrdiff_t>(pad_left);
      if (dst < 0 || dst >= static_cast<std::ptrdiff_t>(length)) continue;
      auto out = dx.row(static_cast<std::size_t>(dst));
      for (std::size_t f = 0; f < k; ++f) out[f] += src_row[tap * k + f];
    }
  }
  return dx;
}

// ----------------------------------------------------------------- maxpool1d

std::size_t pooled_length(std::size_t length, std::size_t stride) {
  return (length + stride - 1) / stride;
}

Matrix maxpool1d(const Matrix& x, std::size_t pool, std::size_t stride, MaxPoolCache* cache) {
  if (pool < 1 || stride < 1) throw std::invalid_argument("maxpool needs pool and stride >= 1");
  const std::size_t length = x.rows();
  const std::size_t channels = x.cols();
  const std::size_t out_len = pooled_length(length, stride);
  const std::size_t needed = out_len == 0 ? 0 : (out_len - 1) * stride + pool;
  const std::size_t pad_total = needed > length ? needed - length : 0;
  const std::size_t pad_left = pad_total / 2;

  Matrix y(out_len, channels, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> argmax(out_len * channels, 0);
  for (std::size_t o = 0; o < out_len; ++o) {
    const std::ptrdiff_t start =
        static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(pad_left);
    for (std::size_t w = 0; w < pool; ++w) {
      const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(w);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(length)) continue;
      const auto in = x.row(static_cast<std::size_t>(src));
      for (std::size_t ch = 0; ch < channels; ++ch) {
        // Strict comparison keeps the first index on ties.
        if (in[ch] > y(o, ch)) {
          y(o, ch) = in[ch];
          argmax[o * channels + ch] = static_cast<std::size_t>(src);
        }
      }
    }
  }
  if (cache) {
    cache->input_rows = length;
    cache->argmax = std::move(argmax);
  }
  return y;
}

Matrix maxpool1d_backward(const Matrix& dy, const MaxPoolCache& cache) {
  const std::size_t channels = dy.cols();
  Matrix dx(cache.input_rows, channels);
  for (std::size_t o = 0; o < dy.rows(); ++o) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      dx(cache.argmax[o * channels + ch], ch) += dy(o, ch);
    }
  }
  return dx;
}

// ------------------------------------------------------------------- dropout

Matrix dropout(const Matrix& x, double rate, bool train, Rng& rng, Matrix* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw UsageError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) {
    if (mask) *mask = Matrix(x.rows(), x.cols(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(x.rows(), x.cols());
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

Matrix dropout_backward(const Matrix& dy, const Matrix& mask) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
  return dx;
}

// ---------------------------------------------------------------------- lstm

namespace {
constexpr const char* kGateNames[4] = {"i", "f", "o", "c"};
}

LstmCellParams::LstmCellParams(std::size_t n_units, std::size_t k, const std::string& prefix)
    : units(n_units), in_features(k) {
  if (n_units < 1 || k < 1) throw UsageError("LSTM needs units and input features >= 1");
  for (std::size_t g = 0; g < 4; ++g) {
    w[g] = Param(prefix + ".W" + kGateNames[g], units, k);
    u[g] = Param(prefix + ".U" + kGateNames[g], units, units);
    b[g] = Param(prefix + ".b" + kGateNames[g], 1, units);
  }
}

void LstmCellParams::init(Rng& rng) {
  for (std::size_t g = 0; g < 4; ++g) {
    fill_glorot(w[g].value, rng, in_features, units);
    fill_glorot(u[g].value, rng, units, units);
    b[g].value.fill(g == kForgetGate ? 1.0 : 0.0);
  }
}

void LstmCellParams::collect(std::vector<Param*>& out) {
  for (std::size_t g = 0; g < 4; ++g) {
    out.push_back(&w[g]);
    out.push_back(&u[g]);
    out.push_back(&b[g]);
  }
}

LstmState lstm_cell_step(const Matrix& x_t, const Matrix& h_prev, const Matrix& c_prev,
                         const LstmCellParams& p) {
  if (x_t.size() != p.in_features || h_prev.size() != p.units || c_prev.size() != p.units) {
    throw std::invalid_argument("lstm_cell_step dimension mismatch");
  }
  const auto& kern = simd::kernels();
  Matrix act[4];
  for (std::size_t g = 0; g < 4; ++g) {
    act[g] = Matrix(1, p.units);
    for (std::size_t j = 0; j < p.units; ++j) {
      const double z = kern.dot(p.w[g].value.row(j).data(), x_t.data(), p.in_features) +
                       kern.dot(p.u[g].value.row(j).data(), h_prev.data(), p.units) +
                       p.b[g].value[j];
      act[g][j] = g == kCandidate ? std::tanh(z) : sigmoid(z);
    }
  }
  LstmState next{Matrix(1, p.units), Matrix(1, p.units)};
  for (std::size_t j = 0; j < p.units; ++j) {
    next.c[j] = act[kInputGate][j] * act[kCandidate][j] + act[kForgetGate][j] * c_prev[j];
    next.h[j] = act[kOutputGate][j] * std::tanh(next.c[j]);
  }
  return next;
}

Matrix lstm_sequence_forward(const Matrix& x, const LstmCellParams& p, bool reverse,
                             LstmSequenceCache* cache) {
  if (x.cols() != p.in_features) {
    throw std::invalid_argument("LSTM expects " + std::to_string(p.in_features) +
                                " input features, got " + std::to_string(x.cols()));
  }
  const std::size_t length = x.rows();
  const std::size_t units = p.units;

  LstmSequenceCache local;
  LstmSequenceCache& st = cache ? *cache : local;
  st.reverse = reverse;
  st.x = Matrix(length, p.in_features);
  for (std::size_t s = 0; s < length; ++s) {
    const std::size_t t = reverse ? length - 1 - s : s;
    std::copy(x.row(t).begin(), x.row(t).end(), st.x.row(s).begin());
  }
  // Input projections for all steps at once; recurrent terms are added per step.
  for (std::size_t g = 0; g < 4; ++g) {
    gemm(st.x, Trans::kNo, p.w[g].value, Trans::kYes, st.gate[g], false);
    add_row_vector(st.gate[g], p.b[g].value);
  }
  st.h_prev = Matrix(length, units);
  st.c_prev = Matrix(length, units);
  st.c = Matrix(length, units);
  st.tanh_c = Matrix(length, units);

  const auto& kern = simd::kernels();
  Matrix h(1, units);
  Matrix c(1, units);
  Matrix out(length, units);
  for (std::size_t s = 0; s < length; ++s) {
    std::copy(h.values().begin(), h.values().end(), st.h_prev.row(s).begin());
    std::copy(c.values().begin(), c.values().end(), st.c_prev.row(s).begin());
    for (std::size_t g = 0; g < 4; ++g) {
      kern.gemm_nt(1, units, units, h.data(), units, p.u[g].value.data(), units,
                   st.gate[g].row(s).data(), units);
      for (double& z : st.gate[g].row(s)) z = g == kCandidate ? std::tanh(z) : sigmoid(z);
    }
    const auto ig = st.gate[kInputGate].row(s);
    const auto fg = st.gate[kForgetGate].row(s);
    const auto og = st.gate[kOutputGate].row(s);
    const auto cand = st.gate[kCandidate].row(s);
    for (std::size_t j = 0; j < units; ++j) {
      c[j] = ig[j] * cand[j] + fg[j] * c[j];
      st.c(s, j) = c[j];
      st.tanh_c(s, j) = std::tanh(c[j]);
      h[j] = og[j] * st.tanh_c(s, j);
    }
    const std::size_t t = reverse ? length - 1 - s : s;
    std::copy(h.values().begin(), h.values().end(), out.row(t).begin());
  }
  return out;
}

Matrix lstm_sequence_backward(const Matrix& dh, LstmCellParams& p, const LstmSequenceCache& st) {
  const std::size_t length = st.x.rows();
  const std::size_t units = p.units;
  const auto& kern = simd::kernels();

  Matrix dz[4];
  for (auto& m : dz) m = Matrix(length, units);
  Matrix dh_next(1, units);
  Matrix dc_next(1, units);

  for (std::size_t s = length; s-- > 0;) {
    const std::size_t t = st.reverse ? length - 1 - s : s;
    const auto ig = st.gate[kInputGate].row(s);
    const auto fg = st.gate[kForgetGate].row(s);
    const auto og = st.gate[kOutputGate].row(s);
    const auto cand = st.gate[kCandidate].row(s);
    const auto tc = st.tanh_c.row(s);
    const auto cp = st.c_prev.row(s);
    for (std::size_t j = 0; j < units; ++j) {
      const double dh_total = dh(t, j) + dh_next[j];
      const double dc = dc_next[j] + dh_total * og[j] * (1.0 - tc[j] * tc[j]);
      dz[kOutputGate](s, j) = dh_total * tc[j] * og[j] * (1.0 - og[j]);
      dz[kInputGate](s, j) = dc * cand[j] * ig[j] * (1.0 - ig[j]);
      dz[kForgetGate](s, j) = dc * cp[j] * fg[j] * (1.0 - fg[j]);
      dz[kCandidate](s, j) = dc * ig[j] * (1.0 - cand[j] * cand[j]);
      dc_next[j] = dc * fg[j];
    }
    dh_next.set_zero();
    for (std::size_t g = 0; g < 4; ++g) {
      kern.gemm_nn(1, units, units, dz[g].row(s).data(), units, p.u[g].value.data(), units,
                   dh_next.data(), units);
    }
  }

  Matrix dx_proc(length, p.in_features);
  for (std::size_t g = 0; g < 4; ++g) {
    gemm(dz[g], Trans::kYes, st.x, Trans::kNo, p.w[g].grad, true);
    gemm(dz[g], Trans::kYes, st.h_prev, Trans::kNo, p.u[g].grad, true);
    accumulate_column_sums(dz[g], p.b[g].grad);
    gemm(dz[g], Trans::kNo, p.w[g].value, Trans::kNo, dx_proc, true);
  }
  if (!st.reverse) return dx_proc;
  Matrix dx(length, p.in_features);
  for (std::size_t s = 0; s < length; ++s) {
    std::copy(dx_proc.row(s).begin(), dx_proc.row(s).end(), dx.row(length - 1 - s).begin());
  }
  return dx;
}

Matrix bilstm_forward(const Matrix& x, const LstmCellParams& p_fwd, const LstmCellParams& p_bwd,
                      BiLstmCache* cache) {
  if (p_fwd.units != p_bwd.units || p_fwd.in_features != p_bwd.in_features) {
    throw std::invalid_argument("BiLSTM directions must share units and input width");
  }
  const Matrix hf = lstm_sequence_forward(x, p_fwd, false, cache ? &cache->forward : nullptr);
  const Matrix hb = lstm_sequence_forward(x, p_bwd, true, cache ? &cache->backward : nullptr);
  const std::size_t units = p_fwd.units;
  Matrix out(x.rows(), 2 * units);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::copy(hf.row(t).begin(), hf.row(t).end(), out.row(t).begin());
    std::copy(hb.row(t).begin(), hb.row(t).end(),
              out.row(t).begin() + static_cast<std::ptrdiff_t>(units));
  }
  return out;
}

Matrix bilstm_backward(const Matrix& dy, LstmCellParams& p_fwd, LstmCellParams& p_bwd,
                       const BiLstmCache& cache) {
  const std::size_t units = p_fwd.units;
  Matrix dhf(dy.rows(), units);
  Matrix dhb(dy.rows(), units);
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    const auto row = dy.row(t);
    std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(units), dhf.row(t).begin());
    std::copy(row.begin() + static_cast<std::ptrdiff_t>(units), row.end(), dhb.row(t).begin());
  }
  Matrix dx = lstm_sequence_backward(dhf, p_fwd, cache.forward);
  add_in_place(dx, lstm_sequence_backward(dhb, p_bwd, cache.backward));
  return dx;
}

// --------------------------------------------------------------------- dense

DenseParams::DenseParams(std::size_t k_in, std::size_t classes, HeadActivation act,
                         const std::string& prefix)
    : activation(act), weight(prefix + ".weight", classes, k_in), bias(prefix + ".bias", 1, classes) {}

void DenseParams::init(Rng& rng) {
  fill_glorot(weight.value, rng, weight.value.cols(), weight.value.rows());
  bias.value.set_zero();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    auto dst = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - peak);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Matrix dense_forward(const Matrix& x, const DenseParams& p, DenseCache* cache) {
  if (x.size() != p.weight.value.cols()) {
    throw std::invalid_argument("dense expects " + std::to_string(p.weight.value.cols()) +
                                " inputs, got " + std::to_string(x.size()));
  }
  Matrix flat = x;
  flat.reshape(1, x.size());
  Matrix z;
  gemm(flat, Trans::kNo, p.weight.value, Trans::kYes, z, false);
  add_row_vector(z, p.bias.value);
  Matrix y;
  if (p.activation == HeadActivation::kSoftmax) {
    y = softmax_rows(z);
  } else {
    y = z;
    for (double& v : y.values()) v = sigmoid(v);
  }
  if (cache) {
    cache->x = std::move(flat);
    cache->y = y;
  }
  return y;
}

Matrix dense_backward(const Matrix& dy, DenseParams& p, const DenseCache& cache) {
  const Matrix& y = cache.y;
  Matrix dz(1, y.cols());
  if (p.activation == HeadActivation::kSoftmax) {
    double inner = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) inner += dy[c] * y[c];
    for (std::size_t c = 0; c < y.cols(); ++c) dz[c] = y[c] * (dy[c] - inner);
  } else {
    for (std::size_t c = 0; c < y.cols(); ++c) dz[c] = dy[c] * y[c] * (1.0 - y[c]);
  }
  gemm(dz, Trans::kYes, cache.x, Trans::kNo, p.weight.grad, true);
  accumulate_column_sums(dz, p.bias.grad);
  Matrix dx;
  gemm(dz, Trans::kNo, p.weight.value, Trans::kNo, dx, false);
  return dx;
}

}  // namespace hybridsa
