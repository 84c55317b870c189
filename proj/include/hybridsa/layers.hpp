#pragma once

// Trainable layers with analytic backward passes.
//
// Every forward function optionally fills a cache that the matching backward
// function consumes. Backward functions accumulate parameter gradients into
// the Param::grad buffers and return the gradient with respect to the input.
// Sequences are L x features matrices, one row per time step.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hybridsa/random.hpp"
#include "hybridsa/tensor.hpp"

namespace hybridsa {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string param_name, std::size_t rows, std::size_t cols)
      : name(std::move(param_name)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.set_zero(); }
};

/// Training flag plus the random stream that dropout draws from.
struct ForwardContext {
  bool train = false;
  Rng* rng = nullptr;
};

void fill_normal(Matrix& m, Rng& rng, double stddev);
/// Glorot-uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void fill_glorot(Matrix& m, Rng& rng, std::size_t fan_in, std::size_t fan_out);

// ---------------------------------------------------------------- activations

double sigmoid(double x);
Matrix relu(const Matrix& x);
/// dy masked by x > 0.
Matrix relu_backward(const Matrix& dy, const Matrix& x);

// ------------------------------------------------------------------ conv1d

/// F filters of width h over k input features, stride 1, "same" zero padding
/// (pad_left = (h - 1) / 2), ReLU output.
struct Conv1DParams {
  std::size_t width = 0;
  std::size_t in_features = 0;
  std::size_t filters = 0;
  Param weight;  // F x (h * k); column index = tap * k + feature
  Param bias;    // 1 x F

  Conv1DParams() = default;
  Conv1DParams(std::size_t h, std::size_t k, std::size_t f, const std::string& prefix);
  void init(Rng& rng);
};

struct Conv1DCache {
  Matrix patches;  // L x (h * k)
  Matrix preact;   // L x F
};

Matrix conv1d_forward(const Matrix& x, const Conv1DParams& p, Conv1DCache* cache = nullptr);
Matrix conv1d_backward(const Matrix& dy, Conv1DParams& p, const Conv1DCache& cache);

// ----------------------------------------------------------------- maxpool1d

/// Output length ceil(L / stride); "same" padding filled with -inf.
std::size_t pooled_length(std::size_t length, std::size_t stride);

struct MaxPoolCache {
  std::size_t input_rows = 0;
  std::vector<std::size_t> argmax;  // per output element, the source row (first max on ties)
};

Matrix maxpool1d(const Matrix& x, std::size_t pool, std::size_t stride,
                 MaxPoolCache* cache = nullptr);
Matrix maxpool1d_backward(const Matrix& dy, const MaxPoolCache& cache);

// ------------------------------------------------------------------- dropout

/// Inverted dropout. `mask` receives the multiplier used per element.
Matrix dropout(const Matrix& x, double rate, bool train, Rng& rng, Matrix* mask = nullptr);
Matrix dropout_backward(const Matrix& dy, const Matrix& mask);

// ---------------------------------------------------------------------- lstm

enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

/// Four gates (input, forget, output, candidate), each with input weights
/// W (units x k), recurrent weights U (units x units) and a bias.
struct LstmCellParams {
  std::size_t units = 0;
  std::size_t in_features = 0;
  Param w[4];
  Param u[4];
  Param b[4];

  LstmCellParams() = default;
  LstmCellParams(std::size_t units, std::size_t k, const std::string& prefix);
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
};

struct LstmState {
  Matrix h;  // 1 x units
  Matrix c;  // 1 x units
};

/// One step of the cell: gates σ(Wx + Uh + b), candidate tanh(...),
/// c_t = i ⊙ c' + f ⊙ c_{t-1}, h_t = o ⊙ tanh(c_t).
LstmState lstm_cell_step(const Matrix& x_t, const Matrix& h_prev, const Matrix& c_prev,
                         const LstmCellParams& p);

/// Activations of one direction over a sequence, rows in processing order.
struct LstmSequenceCache {
  bool reverse = false;
  Matrix x;       // L x k, processing order
  Matrix h_prev;  // L x units
  Matrix c_prev;
  Matrix gate[4];
  Matrix c;
  Matrix tanh_c;
};

/// Runs one direction from zero state; the result is in original time order.
Matrix lstm_sequence_forward(const Matrix& x, const LstmCellParams& p, bool reverse,
                             LstmSequenceCache* cache = nullptr);
Matrix lstm_sequence_backward(const Matrix& dh, LstmCellParams& p, const LstmSequenceCache& cache);

struct BiLstmCache {
  LstmSequenceCache forward;
  LstmSequenceCache backward;
};

/// Per-position concatenation [h_fwd_t ; h_bwd_t], width 2 * units.
Matrix bilstm_forward(const Matrix& x, const LstmCellParams& p_fwd, const LstmCellParams& p_bwd,
                      BiLstmCache* cache = nullptr);
Matrix bilstm_backward(const Matrix& dy, LstmCellParams& p_fwd, LstmCellParams& p_bwd,
                       const BiLstmCache& cache);

// --------------------------------------------------------------------- dense

enum class HeadActivation { kSigmoid, kSoftmax };

struct DenseParams {
  HeadActivation activation = HeadActivation::kSigmoid;
  Param weight;  // C x k_in
  Param bias;    // 1 x C

  DenseParams() = default;
  DenseParams(std::size_t k_in, std::size_t classes, HeadActivation act, const std::string& prefix);
  void init(Rng& rng);
};

struct DenseCache {
  Matrix x;
  Matrix y;
};

/// x is 1 x k_in; returns 1 x C activated outputs.
Matrix dense_forward(const Matrix& x, const DenseParams& p, DenseCache* cache = nullptr);
Matrix dense_backward(const Matrix& dy, DenseParams& p, const DenseCache& cache);

Matrix softmax_rows(const Matrix& logits);

}  // namespace hybridsa
