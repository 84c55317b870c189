#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/layers.hpp"

namespace hybridsa {
namespace {

using testing::check_gradients;
using testing::GradTarget;
using testing::random_matrix;
using testing::weighted_sum;

constexpr double kLayerTol = 1e-4;

// ------------------------------------------------------------------- conv1d

TEST(Conv1D, SamePaddingPreservesLength) {
  Rng rng(1);
  for (std::size_t l : {1, 2, 5, 9, 100}) {
    for (std::size_t h : {1, 2, 3, 4, 10}) {
      Conv1DParams p(h, 3, 4, "c");
      p.init(rng);
      EXPECT_EQ(conv1d_forward(random_matrix(l, 3, rng), p).rows(), l) << "L=" << l << " h=" << h;
    }
  }
}

TEST(Conv1D, ZeroInputGivesReluOfBias) {
  Conv1DParams p(10, 4, 3, "c");
  Rng rng(2);
  p.init(rng);
  p.bias.value.fill(0.5);
  const Matrix y = conv1d_forward(Matrix(100, 4), p);
  ASSERT_EQ(y.rows(), 100u);
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
}

TEST(Conv1D, HandComputedWindow) {
  Conv1DParams p(3, 1, 1, "c");
  p.weight.value[0] = 1.0;
  p.weight.value[1] = 0.0;
  p.weight.value[2] = -1.0;
  Matrix x(3, 1);
  x[0] = 1;
  x[1] = 2;
  x[2] = 3;
  Conv1DCache cache;
  const Matrix y = conv1d_forward(x, p, &cache);
  EXPECT_EQ(cache.preact(1, 0), -2.0);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(cache.preact(0, 0), -2.0);  // [0,1,2] · [1,0,-1]
  EXPECT_EQ(cache.preact(2, 0), 2.0);   // [2,3,0] · [1,0,-1]
  EXPECT_EQ(y(2, 0), 2.0);
}

TEST(Conv1D, DimensionMismatchThrows) {
  Conv1DParams p(3, 2, 1, "c");
  EXPECT_THROW(conv1d_forward(Matrix(4, 3), p), std::invalid_argument);
}

TEST(Conv1D, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  for (std::size_t h : {1, 3, 4}) {
    Conv1DParams p(h, 3, 4, "c");
    p.init(rng);
    Matrix x = random_matrix(7, 3, rng);
    const Matrix r = random_matrix(7, 4, rng);
    Matrix dx;
    const auto loss = [&] { return weighted_sum(conv1d_forward(x, p), r); };
    const auto analytic = [&] {
      p.weight.zero_grad();
      p.bias.zero_grad();
      Conv1DCache cache;
      conv1d_forward(x, p, &cache);
      dx = conv1d_backward(r, p, cache);
    };
    const auto rep = check_gradients({{"W", &p.weight.value, &p.weight.grad}, {"b", &p.bias.value, &p.bias.grad},
                                      {"x", &x, &dx}},
                                     loss, analytic);
    EXPECT_LT(rep.max_rel_error, kLayerTol) << "h=" << h << " " << rep.worst;
  }
}

// ------------------------------------------------------------------ maxpool

TEST(MaxPool, HandExampleAndRouting) {
  Matrix x(4, 1);
  x[0] = 1;
  x[1] = 3;
  x[2] = 2;
  x[3] = 5;
  MaxPoolCache cache;
  const Matrix y = maxpool1d(x, 2, 2, &cache);
  ASSERT_EQ(y.rows(), 2u);
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 5.0);
  const Matrix dx = maxpool1d_backward(Matrix(2, 1, 1.0), cache);
  EXPECT_EQ(dx.values()[0], 0.0);
  EXPECT_EQ(dx.values()[1], 1.0);
  EXPECT_EQ(dx.values()[2], 0.0);
  EXPECT_EQ(dx.values()[3], 1.0);
}

TEST(MaxPool, PoolOneIsIdentity) {
  Rng rng(4);
  const Matrix x = random_matrix(6, 3, rng);
  EXPECT_EQ(maxpool1d(x, 1, 1), x);
}

TEST(MaxPool, OddLengthAndTies) {
  Matrix x(5, 1, 2.0);
  MaxPoolCache cache;
  const Matrix y = maxpool1d(x, 2, 2, &cache);
  EXPECT_EQ(y.rows(), pooled_length(5, 2));
  EXPECT_EQ(y.rows(), 3u);
  const Matrix dx = maxpool1d_backward(Matrix(3, 1, 1.0), cache);
  // First maximal index of each window receives the gradient.
  double total = 0.0;
  for (double v : dx.values()) total += v;
  EXPECT_EQ(total, 3.0);
  EXPECT_EQ(dx[1], 0.0);
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  Matrix x = random_matrix(9, 3, rng);
  const Matrix r = random_matrix(pooled_length(9, 2), 3, rng);
  Matrix dx;
  const auto rep = check_gradients(
      {{"x", &x, &dx}}, [&] { return weighted_sum(maxpool1d(x, 2, 2), r); },
      [&] {
        MaxPoolCache cache;
        maxpool1d(x, 2, 2, &cache);
        dx = maxpool1d_backward(r, cache);
      });
  EXPECT_LT(rep.max_rel_error, kLayerTol) << rep.worst;
}

// ------------------------------------------------------------------ dropout

TEST(Dropout, IdentityWhenNotTrainingOrRateZero) {
  Rng rng(6);
  const Matrix x = random_matrix(5, 4, rng);
  EXPECT_EQ(dropout(x, 0.5, false, rng), x);
  EXPECT_EQ(dropout(x, 0.0, true, rng), x);
}

TEST(Dropout, UnbiasedOnAverage) {
  Rng rng(7);
  const Matrix ones(1, 10000, 1.0);
  const Matrix y = dropout(ones, 0.5, true, rng);
  double mean = 0.0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    mean += v;
  }
  mean /= 10000.0;
  EXPECT_GE(mean, 0.9);
  EXPECT_LE(mean, 1.1);
}

TEST(Dropout, RateOneRejectedAndBackwardUsesMask) {
  Rng rng(8);
  EXPECT_THROW(dropout(Matrix(1, 3, 1.0), 1.0, true, rng), UsageError);
  Matrix mask;
  const Matrix x = random_matrix(3, 3, rng);
  const Matrix y = dropout(x, 0.3, true, rng, &mask);
  const Matrix dx = dropout_backward(Matrix(3, 3, 1.0), mask);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_DOUBLE_EQ(y[i], x[i] * mask[i]);
    EXPECT_EQ(dx[i], mask[i]);
  }
}

// --------------------------------------------------------------------- lstm

TEST(LstmCell, ZeroWeightsHandValues) {
  LstmCellParams p(2, 3, "l");
  const Matrix x(1, 3, 0.7);
  const auto s0 = lstm_cell_step(x, Matrix(1, 2), Matrix(1, 2), p);
  for (double v : s0.h.values()) EXPECT_EQ(v, 0.0);
  for (double v : s0.c.values()) EXPECT_EQ(v, 0.0);
  const auto s1 = lstm_cell_step(x, Matrix(1, 2), Matrix(1, 2, 1.0), p);
  for (double v : s1.c.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : s1.h.values()) {
    EXPECT_DOUBLE_EQ(v, 0.5 * std::tanh(0.5));
    EXPECT_NEAR(v, 0.231059, 1e-6);
  }
}

// Gradient of ||h_t||^2 for one step, through the sequence API with L = 1.
TEST(LstmCell, SquaredNormGradientMatchesFiniteDifferences) {
  Rng rng(9);
  LstmCellParams p(3, 4, "l");
  p.init(rng);
  for (auto& b : p.b) {
    for (auto& v : b.value.values()) v = rng.uniform(-0.5, 0.5);
  }
  Matrix x = random_matrix(1, 4, rng);
  const auto loss = [&] {
    const auto s = lstm_cell_step(x, Matrix(1, 3), Matrix(1, 3), p);
    double sum = 0.0;
    for (double v : s.h.values()) sum += v * v;
    return sum;
  };
  Matrix dx;
  const auto analytic = [&] {
    std::vector<Param*> ps;
    p.collect(ps);
    for (Param* q : ps) q->zero_grad();
    LstmSequenceCache cache;
    const Matrix h = lstm_sequence_forward(x, p, false, &cache);
    Matrix dh(1, 3);
    for (std::size_t i = 0; i < 3; ++i) dh[i] = 2.0 * h[i];
    dx = lstm_sequence_backward(dh, p, cache);
  };
  std::vector<GradTarget> targets;
  for (int g = 0; g < 4; ++g) {
    targets.push_back({"W" + std::to_string(g), &p.w[g].value, &p.w[g].grad});
    targets.push_back({"b" + std::to_string(g), &p.b[g].value, &p.b[g].grad});
  }
  targets.push_back({"x", &x, &dx});
  const auto rep = check_gradients(targets, loss, analytic);
  EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
}

TEST(LstmSequence, GradientsMatchFiniteDifferencesBothDirections) {
  Rng rng(10);
  for (bool reverse : {false, true}) {
    LstmCellParams p(3, 2, "l");
    p.init(rng);
    Matrix x = random_matrix(5, 2, rng);
    const Matrix r = random_matrix(5, 3, rng);
    Matrix dx;
    std::vector<Param*> ps;
    p.collect(ps);
    std::vector<GradTarget> targets;
    for (Param* q : ps) targets.push_back({q->name, &q->value, &q->grad});
    targets.push_back({"x", &x, &dx});
    const auto rep = check_gradients(
        targets, [&] { return weighted_sum(lstm_sequence_forward(x, p, reverse), r); },
        [&] {
          for (Param* q : ps) q->zero_grad();
          LstmSequenceCache cache;
          lstm_sequence_forward(x, p, reverse, &cache);
          dx = lstm_sequence_backward(r, p, cache);
        });
    EXPECT_LT(rep.max_rel_error, kLayerTol) << "reverse=" << reverse << " " << rep.worst;
  }
}

TEST(BiLstm, WidthZeroParamsAndSingleStep) {
  Rng rng(11);
  LstmCellParams f(4, 3, "f"), b(4, 3, "b");
  const Matrix x = random_matrix(6, 3, rng);
  const Matrix y = bilstm_forward(x, f, b);
  EXPECT_EQ(y.cols(), 8u);
  EXPECT_EQ(y.rows(), 6u);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);

  f.init(rng);
  LstmCellParams same = f;
  const Matrix one = random_matrix(1, 3, rng);
  const Matrix y1 = bilstm_forward(one, f, same);
  for (std::size_t u = 0; u < 4; ++u) EXPECT_EQ(y1(0, u), y1(0, 4 + u));
}

TEST(BiLstm, PalindromeSymmetry) {
  Rng rng(12);
  LstmCellParams f(3, 2, "f");
  f.init(rng);
  const LstmCellParams b = f;
  Matrix x(3, 2);
  const Matrix first = random_matrix(1, 2, rng), middle = random_matrix(1, 2, rng);
  for (std::size_t k = 0; k < 2; ++k) {
    x(0, k) = first[k];
    x(1, k) = middle[k];
    x(2, k) = first[k];
  }
  const Matrix y = bilstm_forward(x, f, b);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t u = 0; u < 3; ++u) EXPECT_DOUBLE_EQ(y(t, u), y(2 - t, 3 + u));
  }
}

TEST(BiLstm, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  LstmCellParams f(2, 3, "f"), b(2, 3, "b");
  f.init(rng);
  b.init(rng);
  Matrix x = random_matrix(4, 3, rng);
  const Matrix r = random_matrix(4, 4, rng);
  Matrix dx;
  std::vector<Param*> ps;
  f.collect(ps);
  b.collect(ps);
  std::vector<GradTarget> targets;
  for (Param* q : ps) targets.push_back({q->name, &q->value, &q->grad});
  targets.push_back({"x", &x, &dx});
  const auto rep = check_gradients(
      targets, [&] { return weighted_sum(bilstm_forward(x, f, b), r); },
      [&] {
        for (Param* q : ps) q->zero_grad();
        BiLstmCache cache;
        bilstm_forward(x, f, b, &cache);
        dx = bilstm_backward(r, f, b, cache);
      });
  EXPECT_LT(rep.max_rel_error, kLayerTol) << rep.worst;
}

// Composition order is observable: conv then Bi-LSTM differs from Bi-LSTM then conv.
TEST(Composition, OrderMatters) {
  Rng rng(14);
  const Matrix x = random_matrix(6, 4, rng);
  Conv1DParams c_first(3, 4, 4, "c");
  c_first.init(rng);
  LstmCellParams f(2, 4, "f"), b(2, 4, "b");
  f.init(rng);
  b.init(rng);
  const Matrix a = bilstm_forward(conv1d_forward(x, c_first), f, b);
  const Matrix c = conv1d_forward(bilstm_forward(x, f, b), c_first);
  ASSERT_TRUE(a.same_shape(c));
  EXPECT_NE(a, c);
}

// -------------------------------------------------------------------- dense

TEST(Dense, ZeroWeightsAndSoftmax) {
  DenseParams sig(5, 3, HeadActivation::kSigmoid, "d");
  const Matrix y = dense_forward(Matrix(1, 5, 0.3), sig);
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
  const Matrix s = softmax_rows(Matrix(1, 3));
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  DenseParams soft(5, 3, HeadActivation::kSoftmax, "d");
  const Matrix ys = dense_forward(Matrix(1, 5, 0.3), soft);
  for (double v : ys.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Dense, SigmoidMonotoneInBias) {
  Rng rng(15);
  DenseParams p(4, 3, HeadActivation::kSigmoid, "d");
  p.init(rng);
  const Matrix x = random_matrix(1, 4, rng);
  for (std::size_t j = 0; j < 3; ++j) {
    double prev = -1.0;
    for (double b = -5.0; b <= 5.0; b += 0.5) {
      p.bias.value[j] = b;
      const double out = dense_forward(x, p)[j];
      EXPECT_GE(out, prev);
      EXPECT_GT(out, 0.0);
      EXPECT_LT(out, 1.0);
      prev = out;
    }
  }
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(16);
  for (auto act : {HeadActivation::kSigmoid, HeadActivation::kSoftmax}) {
    DenseParams p(6, 3, act, "d");
    p.init(rng);
    Matrix x = random_matrix(1, 6, rng);
    const Matrix r = random_matrix(1, 3, rng);
    Matrix dx;
    const auto rep = check_gradients(
        {{"W", &p.weight.value, &p.weight.grad}, {"b", &p.bias.value, &p.bias.grad}, {"x", &x, &dx}},
        [&] { return weighted_sum(dense_forward(x, p), r); },
        [&] {
          p.weight.zero_grad();
          p.bias.zero_grad();
          DenseCache cache;
          dense_forward(x, p, &cache);
          dx = dense_backward(r, p, cache);
        });
    EXPECT_LT(rep.max_rel_error, kLayerTol) << rep.worst;
  }
}

}  // namespace
}  // namespace hybridsa
